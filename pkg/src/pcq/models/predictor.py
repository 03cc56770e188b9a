from typing import Sequence, Tuple

import numpy as np

from pcq.counting.partition import CounterConfig, infer_with_overlap
from pcq.counting.peaks import PeakSet
from pcq.errors import DataError
from pcq.heatmap.catalog import ClassCatalog
from pcq.heatmap.types import Heatmap
from pcq.models.selection import ModelCenter, describe_frame, select_model


class CounterModel:
    """Counts objects on predicted heatmaps with one fixed configuration."""

    def __init__(self, config: CounterConfig):
        self.config = config

    def choose(self, hm: Heatmap) -> CounterConfig:
        return self.config

    def predict(self, hm: Heatmap) -> Tuple[np.ndarray, PeakSet]:
        return infer_with_overlap(hm, self.config)

    def __repr__(self) -> str:
        return f"CounterModel({self.config.label})"


class SelectingCounter:
    """Picks a configuration per frame from a model-center registry, then counts."""

    def __init__(self, centers: Sequence[ModelCenter], catalog: ClassCatalog):
        if not centers:
            raise DataError("model registry is empty")
        self.centers = list(centers)
        self.catalog = catalog
        self.emphasis = self.centers[0].emphasis

    def choose(self, hm: Heatmap) -> CounterConfig:
        return select_model(describe_frame(hm, self.catalog, self.emphasis), self.centers)

    def predict(self, hm: Heatmap) -> Tuple[np.ndarray, PeakSet]:
        return infer_with_overlap(hm, self.choose(hm))

    def __repr__(self) -> str:
        return f"SelectingCounter({len(self.centers)} models)"
