"""
Supervision arithmetic: focal heatmap loss, L1 count loss, the
partition-weighted count loss and a finite-difference gradient checker.
"""

from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from pcq.config import DEFAULT_ALPHA, PROBABILITY_EPS
from pcq.counting.partition import CounterConfig, infer_with_overlap, partition_regions, partition_weights
from pcq.counting.peaks import ThresholdPolicy
from pcq.errors import ShapeMismatchError
from pcq.heatmap.types import FrameAnnotation, Heatmap

ArrayLike = Union[Heatmap, np.ndarray, Sequence]


class LossReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    l_hm: float
    l_count: float
    total: float
    N_pos: int

    @model_validator(mode="after")
    def _consistent(self) -> "LossReport":
        if not all(np.isfinite([self.l_hm, self.l_count, self.total])):
            raise ValueError("loss terms must be finite")
        if not np.isclose(self.total, self.l_hm + self.l_count, rtol=0, atol=1e-12):
            raise ValueError("total must equal l_hm + l_count")
        return self


def _values(x: ArrayLike) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, Heatmap) else x, dtype=np.float64)


def focal_loss(pred: ArrayLike, target: ArrayLike, alpha: float = DEFAULT_ALPHA) -> Tuple[float, np.ndarray]:
    """
    Heatmap focal loss and its gradient with respect to the prediction.

    Positive cells (Y == 1) contribute -(1 - p)^alpha * log(p), every other
    cell -(1 - Y)^alpha * log(1 - p); the sum is divided by max(#positives, 1).
    Predictions are clamped to [eps, 1 - eps] and the gradient is evaluated at
    the clamped values.
    """
    p = _values(pred)
    y = _values(target)
    if p.shape != y.shape:
        raise ShapeMismatchError(f"prediction {p.shape} vs target {y.shape}")

    p = np.clip(p, PROBABILITY_EPS, 1.0 - PROBABILITY_EPS)
    positive = y == 1.0
    n = max(int(positive.sum()), 1)

    neg_weight = (1.0 - y) ** alpha
    pos_term = (1.0 - p) ** alpha * np.log(p)
    neg_term = neg_weight * np.log(1.0 - p)
    loss = -np.where(positive, pos_term, neg_term).sum() / n

    pos_grad = alpha * (1.0 - p) ** (alpha - 1.0) * np.log(p) - (1.0 - p) ** alpha / p
    neg_grad = neg_weight / (1.0 - p)
    grad = np.where(positive, pos_grad, neg_grad) / n
    return float(loss), grad


def count_l1(pred_counts, true_counts) -> float:
    """Mean absolute count error over frames and classes; inputs shaped (frames, classes)."""
    pred = np.atleast_2d(np.asarray(pred_counts, dtype=np.float64))
    true = np.atleast_2d(np.asarray(true_counts, dtype=np.float64))
    if pred.shape != true.shape:
        raise ShapeMismatchError(f"predicted counts {pred.shape} vs true counts {true.shape}")
    return float(np.abs(true - pred).mean())


def weighted_count_loss(per_region_losses, per_region_counts) -> float:
    losses = np.asarray(per_region_losses, dtype=np.float64)
    weights = partition_weights(per_region_counts)
    if losses.shape != weights.shape:
        raise ShapeMismatchError(f"{losses.size} region losses for {weights.size} regions")
    return float(np.dot(weights, losses))


def grad_check(
    fn: Callable[[np.ndarray], Tuple[float, np.ndarray]], point, h: float = 1e-5
) -> float:
    """Max relative error between ``fn``'s analytic gradient and central differences."""
    x = np.array(point, dtype=np.float64)
    _, analytic = fn(x)
    analytic = np.asarray(analytic, dtype=np.float64).reshape(x.shape)

    numeric = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        original = x[idx]
        x[idx] = original + h
        upper, _ = fn(x)
        x[idx] = original - h
        lower, _ = fn(x)
        x[idx] = original
        numeric[idx] = (upper - lower) / (2.0 * h)

    error = np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1e-8)
    return float(error.max()) if error.size else 0.0


def _region_counts(centers, regions, channels: int) -> np.ndarray:
    counts = np.zeros((len(regions), channels), dtype=np.int64)
    for c, x, y in centers:
        for i, r in enumerate(regions):
            if r.x_start <= x < r.x_end and r.y_start <= y < r.y_end:
                counts[i, c] += 1
                break
    return counts


def loss_report(
    pred: Heatmap,
    target: Heatmap,
    ann: FrameAnnotation,
    cfg: Optional[CounterConfig] = None,
    alpha: float = DEFAULT_ALPHA,
) -> LossReport:
    """
    Total loss of one frame: focal loss plus the count loss.

    With pt = 1 the count loss is the plain L1 over classes; otherwise it is
    the partition-weighted sum of per-region L1 losses over the unexpanded regions.
    """
    cfg = cfg or CounterConfig(pt=1, overlap_ratio=0.0, threshold_policy=ThresholdPolicy())
    l_hm, _ = focal_loss(pred, target, alpha)
    n_pos = int((target.values == 1.0).sum())

    _, peaks = infer_with_overlap(pred, cfg)
    predicted = [(c, p.x, p.y) for c, channel in enumerate(peaks.channels) for p in channel]
    truth = [(o.class_index, *o.cell(ann.width, ann.height)) for o in ann.centers]

    regions = partition_regions(pred.width, pred.height, cfg.pt)
    pred_counts = _region_counts(predicted, regions, pred.channels)
    true_counts = _region_counts(truth, regions, pred.channels)

    if len(regions) == 1:
        l_count = count_l1(pred_counts, true_counts)
    else:
        region_losses = [count_l1(p, t) for p, t in zip(pred_counts, true_counts)]
        l_count = weighted_count_loss(region_losses, true_counts.sum(axis=1))

    return LossReport(l_hm=l_hm, l_count=l_count, total=l_hm + l_count, N_pos=n_pos)
