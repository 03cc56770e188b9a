"""
Partitioned counting with overlapping regions.

The grid is tiled into pt equal regions, each region is expanded by the
overlap ratio, peaks are counted per region with a per-region threshold,
mapped back to grid coordinates and de-duplicated within the merge radius.
"""

import logging
import math
from typing import List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pcq.config import DEFAULT_MERGE_RADIUS, DEFAULT_OVERLAP, DEFAULT_PARTITIONS
from pcq.counting.peaks import Peak, PeakSet, ThresholdPolicy, channel_threshold, local_maxima_2d
from pcq.errors import PartitionError
from pcq.heatmap.types import Heatmap

logger = logging.getLogger(__name__)

Point = Tuple[float, float]


class Region(BaseModel):
    """Half-open cell rectangle [x_start, x_end) x [y_start, y_end)."""

    model_config = ConfigDict(frozen=True)

    x_start: int = Field(ge=0)
    y_start: int = Field(ge=0)
    x_end: int
    y_end: int

    @model_validator(mode="after")
    def _non_empty(self) -> "Region":
        if self.x_end <= self.x_start or self.y_end <= self.y_start:
            raise ValueError(f"empty region {self!r}")
        return self

    @property
    def width(self) -> int:
        return self.x_end - self.x_start

    @property
    def height(self) -> int:
        return self.y_end - self.y_start

    def contains(self, other: "Region") -> bool:
        return (
            self.x_start <= other.x_start
            and self.y_start <= other.y_start
            and other.x_end <= self.x_end
            and other.y_end <= self.y_end
        )

    def view(self, grid: np.ndarray) -> np.ndarray:
        return grid[self.y_start : self.y_end, self.x_start : self.x_end]


class CounterConfig(BaseModel):
    """One counting-model configuration."""

    model_config = ConfigDict(frozen=True)

    pt: int = Field(default=DEFAULT_PARTITIONS, ge=1)
    overlap_ratio: float = Field(default=DEFAULT_OVERLAP, ge=0.0)
    merge_radius: Union[float, Tuple[float, ...]] = DEFAULT_MERGE_RADIUS
    threshold_policy: ThresholdPolicy = ThresholdPolicy()

    @field_validator("merge_radius")
    @classmethod
    def _positive_radius(cls, value):
        for radius in value if isinstance(value, tuple) else (value,):
            if radius <= 0:
                raise ValueError(f"merge radius must be > 0, got {radius}")
        return value

    def radius_for(self, class_index: int) -> float:
        if isinstance(self.merge_radius, tuple):
            return self.merge_radius[min(class_index, len(self.merge_radius) - 1)]
        return self.merge_radius

    @property
    def label(self) -> str:
        return f"pt={self.pt},o={self.overlap_ratio:g}"


def grid_shape(pt: int) -> Tuple[int, int]:
    """Most-square rows x cols factorisation of pt with rows <= cols."""
    if pt < 1:
        raise PartitionError(f"pt must be >= 1, got {pt}")
    rows = max(d for d in range(1, math.isqrt(pt) + 1) if pt % d == 0)
    return rows, pt // rows


def partition_regions(width: int, height: int, pt: int) -> List[Region]:
    rows, cols = grid_shape(pt)
    if cols > width or rows > height:
        raise PartitionError(f"pt={pt} ({rows}x{cols}) does not fit a {width}x{height} grid")

    step_x, step_y = width // cols, height // rows
    xs = [i * step_x for i in range(cols)] + [width]
    ys = [j * step_y for j in range(rows)] + [height]
    return [
        Region(x_start=xs[i], y_start=ys[j], x_end=xs[i + 1], y_end=ys[j + 1])
        for j in range(rows)
        for i in range(cols)
    ]


def expand_region(r: Region, delta: float, width: int, height: int) -> Region:
    expand_w = int(math.floor(r.width * delta))
    expand_h = int(math.floor(r.height * delta))
    return Region(
        x_start=max(0, r.x_start - expand_w),
        y_start=max(0, r.y_start - expand_h),
        x_end=min(width, r.x_end + expand_w),
        y_end=min(height, r.y_end + expand_h),
    )


def counting_regions(width: int, height: int, cfg: CounterConfig) -> List[Region]:
    return [
        expand_region(r, cfg.overlap_ratio, width, height)
        for r in partition_regions(width, height, cfg.pt)
    ]


def merge_duplicate_centers(centers: Sequence[Point], gamma: float) -> List[Point]:
    """Keep centers in input order, dropping any within distance gamma of a kept one."""
    centers = list(centers)
    if not centers:
        return []
    points = np.asarray(centers, dtype=np.float64)
    alive = np.ones(len(centers), dtype=bool)
    kept = []
    for i, center in enumerate(centers):
        if not alive[i]:
            continue
        kept.append(center)
        distance = np.hypot(points[:, 0] - points[i, 0], points[:, 1] - points[i, 1])
        alive &= distance > gamma
    return kept


def infer_with_overlap(hm: Heatmap, cfg: CounterConfig) -> Tuple[np.ndarray, PeakSet]:
    regions = counting_regions(hm.width, hm.height, cfg)

    channels = []
    for c in range(hm.channels):
        grid = hm.channel(c)
        found, seen = [], set()
        for region in regions:
            window = region.view(grid)
            threshold = channel_threshold(window, cfg.threshold_policy)
            for peak in local_maxima_2d(window, threshold):
                cell = (peak.x + region.x_start, peak.y + region.y_start)
                if cell not in seen:
                    seen.add(cell)
                    found.append(cell)

        if len(regions) > 1:
            merged = merge_duplicate_centers(found, cfg.radius_for(c))
            if len(merged) < len(found):
                logger.debug("class %d: merged %d duplicate centers", c, len(found) - len(merged))
            found = merged

        channels.append(tuple(Peak(x, y, float(grid[y, x])) for x, y in found))

    peaks = PeakSet(tuple(channels))
    return peaks.counts(), peaks


def partition_weights(counts_per_region: Sequence[int]) -> np.ndarray:
    """Region weights: 1/|R| plus each region's share of the objects."""
    counts = np.asarray(counts_per_region, dtype=np.float64)
    if counts.size == 0:
        raise PartitionError("at least one region is required")
    weights = np.full(counts.size, 1.0 / counts.size)
    total = counts.sum()
    if total > 0:
        weights += counts / total
    return weights
