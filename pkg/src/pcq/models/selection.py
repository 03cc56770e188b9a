"""
Per-frame model selection.

Training frames are assigned to the configuration that counts them best;
each configuration's descriptor center and spread give a Chernoff
confidence P = exp(-n eps^2 / (2 xi^2)); a new frame goes to the model with
the smallest distance-to-center times P.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError
from sklearn.metrics import pairwise_distances

from pcq.config import DEFAULT_EPSILON, OCCUPANCY_LEVEL
from pcq.counting.partition import CounterConfig, infer_with_overlap
from pcq.counting.peaks import ThresholdPolicy, count_from_heatmap
from pcq.errors import DataError, EmptyAssignmentError
from pcq.heatmap.catalog import ClassCatalog
from pcq.heatmap.types import Heatmap
from pcq.utils.parallel import map_ordered

logger = logging.getLogger(__name__)

REFERENCE_POLICY = ThresholdPolicy()


class ModelCenter(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    config: CounterConfig
    w_hat: Tuple[float, ...]
    xi2: float = Field(ge=0.0)
    n: int = Field(ge=0)
    confidence: float = Field(alias="P", ge=0.0, le=1.0)
    epsilon: float = Field(gt=0.0)
    emphasis: Optional[Tuple[float, ...]] = None


REGISTRY = TypeAdapter(List[ModelCenter])


def emphasis_weights(weights: Union[Dict[str, float], Sequence[float], None], catalog: ClassCatalog) -> np.ndarray:
    """Descriptor weights: one per class (named or positional), then 1.0 for the statistics."""
    vector = np.ones(catalog.K + 3)
    if weights is None:
        return vector
    if isinstance(weights, dict):
        for name, w in weights.items():
            vector[catalog.index(name)] = w
    else:
        vector[: len(weights)] = weights
    return vector


def describe_frame(hm: Heatmap, catalog: ClassCatalog, emphasis=None) -> np.ndarray:
    """
    Frame descriptor of length K + 3: reference-counter counts per class
    (pt = 1, fixed threshold), total peaks, occupied fraction of the
    max-over-channels map above 0.1, and mean activation.
    """
    counts, _ = count_from_heatmap(hm, REFERENCE_POLICY)
    flat = hm.values.max(axis=0)
    stats = [counts.sum(), float((flat > OCCUPANCY_LEVEL).mean()), float(hm.values.mean())]
    descriptor = np.concatenate([counts.astype(np.float64), stats])
    return descriptor * emphasis_weights(emphasis, catalog)


def assign_frames(
    frames: Sequence[Heatmap], models: Sequence[CounterConfig], truth: Sequence[Sequence[int]]
) -> List[List[int]]:
    """Frame indices per model; each frame goes to the model with the least summed L1 count error."""
    if not models:
        raise DataError("no models to assign frames to")
    if len(frames) != len(truth):
        raise DataError(f"{len(frames)} frames but {len(truth)} truth count vectors")

    def best_model(item) -> int:
        hm, true_counts = item
        best, best_score = 0, -math.inf
        for j, cfg in enumerate(models):
            counts, _ = infer_with_overlap(hm, cfg)
            score = -float(np.abs(counts - np.asarray(true_counts)).sum())
            if score > best_score:
                best, best_score = j, score
        return best

    winners = map_ordered(best_model, list(zip(frames, truth)))
    assigned: List[List[int]] = [[] for _ in models]
    for i, j in enumerate(winners):
        assigned[j].append(i)
    return assigned


def estimate_center(descriptors) -> Tuple[np.ndarray, float, int]:
    f = np.asarray(descriptors, dtype=np.float64)
    n = f.shape[0] if f.size else 0
    if n == 0:
        raise EmptyAssignmentError("no frames assigned")
    w_hat = f.mean(axis=0)
    xi2 = float(((f - w_hat) ** 2).sum(axis=1).mean())
    return w_hat, xi2, n


def chernoff_confidence(n: int, xi2: float, epsilon: float) -> float:
    if n < 1:
        raise EmptyAssignmentError("confidence needs n >= 1")
    if epsilon <= 0:
        raise DataError(f"epsilon must be > 0, got {epsilon}")
    if xi2 == 0:
        return 0.0
    return math.exp(-n * epsilon**2 / (2.0 * xi2))


def adjusted_distances(f, centers: Sequence[ModelCenter], adjusted: bool = True) -> np.ndarray:
    points = np.asarray([c.w_hat for c in centers], dtype=np.float64)
    d = pairwise_distances(np.asarray(f, dtype=np.float64).reshape(1, -1), points)[0]
    if adjusted:
        d = d * np.array([c.confidence for c in centers])
    return d


def select_model(f, centers: Sequence[ModelCenter]) -> CounterConfig:
    if not centers:
        raise DataError("model registry is empty")
    d = adjusted_distances(f, centers)
    return centers[int(np.argmin(d))].config


def allocation(descriptors, centers: Sequence[ModelCenter], adjusted: bool = True) -> List[int]:
    """How many frames each model receives, with or without the confidence adjustment."""
    counts = [0] * len(centers)
    for f in descriptors:
        counts[int(np.argmin(adjusted_distances(f, centers, adjusted)))] += 1
    return counts


def build_registry(
    frames: Sequence[Heatmap],
    truth: Sequence[Sequence[int]],
    models: Sequence[CounterConfig],
    catalog: ClassCatalog,
    epsilon: float = DEFAULT_EPSILON,
    emphasis=None,
) -> List[ModelCenter]:
    assigned = assign_frames(frames, models, truth)
    weights = emphasis_weights(emphasis, catalog)
    descriptors = map_ordered(lambda hm: describe_frame(hm, catalog, weights), frames)

    centers = []
    for cfg, members in zip(models, assigned):
        try:
            w_hat, xi2, n = estimate_center([descriptors[i] for i in members])
        except EmptyAssignmentError:
            logger.warning("Model %s won no training frames, excluded from selection", cfg.label)
            continue
        centers.append(
            ModelCenter(
                config=cfg,
                w_hat=tuple(float(v) for v in w_hat),
                xi2=xi2,
                n=n,
                confidence=chernoff_confidence(n, xi2, epsilon),
                epsilon=epsilon,
                emphasis=None if emphasis is None else tuple(float(v) for v in weights),
            )
        )
        logger.info("Model %s: n=%d xi2=%.4f P=%.4f", cfg.label, n, xi2, centers[-1].confidence)
    return centers


def save_registry(path: Union[str, Path], centers: Sequence[ModelCenter]) -> None:
    Path(path).write_bytes(REGISTRY.dump_json(list(centers), by_alias=True, indent=2))


def load_registry(path: Union[str, Path]) -> List[ModelCenter]:
    try:
        return REGISTRY.validate_json(Path(path).read_bytes())
    except ValidationError as exc:
        raise DataError(f"registry {path} is invalid: {exc}") from None
