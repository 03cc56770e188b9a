"""
Peak detection: thresholded 2D local maxima with fixed or Otsu thresholds.

A cell is a peak when it is strictly greater than its 8 neighbours (cells
outside the grid count as -inf) and at least the threshold. A plateau of
equal values that dominates its whole border yields one peak, placed on the
plateau cell nearest to its centroid.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from pcq.config import DEFAULT_THRESHOLD, OTSU_BINS
from pcq.errors import DegenerateHistogramError, EmptyGridError
from pcq.heatmap.types import Heatmap

logger = logging.getLogger(__name__)

EIGHT_NEIGHBOURS = np.ones((3, 3), dtype=bool)


class ThresholdMode(str, Enum):
    FIXED = "fixed"
    DYNAMIC_OTSU = "otsu"


class ThresholdPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    fixed_t: float = Field(default=DEFAULT_THRESHOLD, gt=0.0, lt=1.0)
    mode: ThresholdMode = ThresholdMode.FIXED


class Peak(NamedTuple):
    x: int
    y: int
    value: float


@dataclass(frozen=True)
class PeakSet:
    """Peaks per channel, each channel's peaks in row-major order."""

    channels: Tuple[Tuple[Peak, ...], ...]

    def counts(self) -> np.ndarray:
        return np.array([len(peaks) for peaks in self.channels], dtype=np.int64)

    def positions(self, c: int) -> List[Tuple[int, int]]:
        return [(p.x, p.y) for p in self.channels[c]]


def _as_grid(channel) -> np.ndarray:
    grid = np.asarray(channel, dtype=np.float64)
    if grid.ndim != 2 or grid.size == 0:
        raise EmptyGridError(f"Expected a non-empty 2D grid, got shape {grid.shape}")
    return grid


def local_maxima_2d(channel, threshold: float) -> List[Peak]:
    grid = _as_grid(channel)
    neighbourhood = ndimage.maximum_filter(
        grid, footprint=EIGHT_NEIGHBOURS, mode="constant", cval=-np.inf
    )
    candidates = (grid == neighbourhood) & (grid >= threshold)
    labels, _ = ndimage.label(candidates, structure=EIGHT_NEIGHBOURS)

    peaks = []
    for label, window in enumerate(ndimage.find_objects(labels), start=1):
        if window is None:
            continue
        # widen by one cell so the plateau border is visible
        ys = slice(max(window[0].start - 1, 0), min(window[0].stop + 1, grid.shape[0]))
        xs = slice(max(window[1].start - 1, 0), min(window[1].stop + 1, grid.shape[1]))
        plateau = labels[ys, xs] == label
        values = grid[ys, xs]
        level = values[plateau][0]

        border = ndimage.binary_dilation(plateau, structure=EIGHT_NEIGHBOURS) & ~plateau
        if np.any(values[border] == level):
            continue  # part of a larger plateau that touches a higher cell

        cells = np.argwhere(plateau)
        centroid = np.array(ndimage.center_of_mass(plateau))
        nearest = cells[np.argmin(((cells - centroid) ** 2).sum(axis=1))]
        peaks.append(Peak(int(nearest[1] + xs.start), int(nearest[0] + ys.start), float(level)))

    peaks.sort(key=lambda p: (p.y, p.x))
    return peaks


def otsu_threshold(channel) -> float:
    """
    Otsu threshold over 256 equal bins on [0, 1].

    Split s puts bins [0, s) in the lower class; the score is
    w0 * w1 * (mean0 - mean1)^2 with class means taken over the actual values.
    The first maximal run of equal scores wins and is reported at its middle
    split; returns k = s / 256.
    """
    values = _as_grid(channel).ravel()
    counts, _ = np.histogram(values, bins=OTSU_BINS, range=(0.0, 1.0))
    sums, _ = np.histogram(values, bins=OTSU_BINS, range=(0.0, 1.0), weights=values)

    total = counts.sum()
    c0 = np.cumsum(counts)[:-1].astype(np.float64)
    s0 = np.cumsum(sums)[:-1]
    c1 = total - c0
    s1 = sums.sum() - s0

    valid = (c0 > 0) & (c1 > 0)
    if not valid.any():
        raise DegenerateHistogramError("every split leaves one class empty")

    with np.errstate(divide="ignore", invalid="ignore"):
        score = (c0 / total) * (c1 / total) * (s0 / c0 - s1 / c1) ** 2
    score = np.where(valid, score, -np.inf)

    best = score.max()
    first = int(np.argmax(score == best))
    last = first
    while last + 1 < score.size and score[last + 1] == best:
        last += 1
    split = (first + last) // 2 + 1
    return split / OTSU_BINS


def effective_threshold(k: float, t: float) -> float:
    return k if k >= t else t


def channel_threshold(channel, policy: ThresholdPolicy) -> float:
    if policy.mode is ThresholdMode.FIXED:
        return policy.fixed_t
    try:
        k = otsu_threshold(channel)
    except DegenerateHistogramError:
        logger.debug("Degenerate histogram, falling back to t=%s", policy.fixed_t)
        return policy.fixed_t
    return effective_threshold(k, policy.fixed_t)


def count_from_heatmap(hm: Heatmap, policy: ThresholdPolicy) -> Tuple[np.ndarray, PeakSet]:
    channels = []
    for c in range(hm.channels):
        channel = hm.channel(c)
        channels.append(tuple(local_maxima_2d(channel, channel_threshold(channel, policy))))
    peaks = PeakSet(tuple(channels))
    return peaks.counts(), peaks
