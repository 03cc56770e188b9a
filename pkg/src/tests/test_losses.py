import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pcq.config import PROBABILITY_EPS
from pcq.counting.losses import (
    LossReport,
    count_l1,
    focal_loss,
    grad_check,
    loss_report,
    weighted_count_loss,
)
from pcq.counting.partition import CounterConfig
from pcq.errors import ShapeMismatchError
from pcq.heatmap.render import render_target_heatmap
from pcq.heatmap.types import Heatmap
from tests.helpers import annotation


def test_focal_loss_single_positive():
    loss, grad = focal_loss([[0.5]], [[1.0]])
    assert loss == pytest.approx(-(0.5**2) * math.log(0.5), abs=1e-5)
    assert grad[0, 0] == pytest.approx(2 * 0.5 * math.log(0.5) - 0.5**2 / 0.5, abs=1e-5)


def test_focal_loss_single_negative_clamps_normaliser():
    loss, _ = focal_loss([[0.5]], [[0.0]])
    assert loss == pytest.approx(-math.log(0.5), abs=1e-5)


def test_focal_loss_near_perfect_prediction():
    target = np.zeros((1, 6, 6))
    target[0, 2, 3] = 1.0
    pred = np.where(target == 1.0, 1 - PROBABILITY_EPS, PROBABILITY_EPS)
    loss, _ = focal_loss(pred, target)
    assert 0.0 <= loss < 1e-4


def test_focal_loss_accepts_heatmaps_and_checks_shapes():
    hm = Heatmap.zeros(1, 3, 3)
    loss, _ = focal_loss(hm, hm)
    assert loss >= 0.0
    with pytest.raises(ShapeMismatchError):
        focal_loss(np.zeros((2, 2)), np.zeros((3, 3)))


def test_focal_gradient_matches_finite_differences():
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(100):
        target = rng.uniform(0.0, 0.9, size=(4, 4))
        target[rng.random((4, 4)) < 0.2] = 1.0
        pred = rng.uniform(0.05, 0.95, size=(4, 4))
        worst = max(worst, grad_check(lambda p: focal_loss(p, target), pred))
    assert worst < 1e-4


def test_grad_check_linear_and_constant():
    weights = np.array([1.5, -2.0, 0.25])
    assert grad_check(lambda x: (float(weights @ x), weights), np.zeros(3)) < 1e-10
    assert grad_check(lambda x: (3.0, np.zeros_like(x)), np.ones(3)) == 0.0


def test_count_l1():
    assert count_l1([[3, 5]], [[3, 5]]) == 0.0
    assert count_l1([4, 5], [3, 5]) == 0.5
    assert count_l1([[1], [6]], [[3], [2]]) == 3.0
    with pytest.raises(ShapeMismatchError):
        count_l1([1, 2], [1, 2, 3])


def test_weighted_count_loss():
    assert weighted_count_loss([0.7] * 4, [0, 0, 0, 0]) == pytest.approx(0.7)
    assert weighted_count_loss([1, 1, 1, 1], [3, 1, 0, 0]) == pytest.approx(2.0)
    assert weighted_count_loss([0.4], [7]) == pytest.approx(0.8)
    with pytest.raises(ShapeMismatchError):
        weighted_count_loss([1, 1], [1, 1, 1])


def test_loss_report_perfect_counts(kitti):
    ann = annotation([(0, 5, 5, 2.0), (1, 25, 25, 1.0)])
    target = render_target_heatmap(ann, kitti)
    report = loss_report(target, target, ann)
    assert report.N_pos == 2
    assert report.l_count == 0.0
    assert report.total == pytest.approx(report.l_hm)


def test_loss_report_weighted_regions(kitti):
    ann = annotation([(0, 5, 5, 2.0), (0, 25, 5, 2.0)])
    target = render_target_heatmap(ann, kitti)
    missing = annotation([(0, 5, 5, 2.0)])
    pred = render_target_heatmap(missing, kitti)
    report = loss_report(pred, target, ann, CounterConfig(pt=4, overlap_ratio=0.0))
    # the right-hand region misses its car: L1 over 3 classes is 1/3, weight 1/4 + 1/2
    assert report.l_count == pytest.approx((1 / 3) * 0.75)
    assert report.total == pytest.approx(report.l_hm + report.l_count)


def test_loss_report_is_consistent():
    with pytest.raises(ValueError):
        LossReport(l_hm=1.0, l_count=1.0, total=3.0, N_pos=1)


counts = arrays(np.int64, (3, 4), elements=st.integers(0, 20))


@settings(max_examples=60, deadline=None)
@given(counts, counts, counts)
def test_count_l1_is_a_metric(a, b, c):
    assert count_l1(a, b) == count_l1(b, a)
    assert count_l1(a, a) == 0.0
    assert count_l1(a, c) <= count_l1(a, b) + count_l1(b, c) + 1e-12


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, (6, 6), elements=st.floats(0.0, 1.0)),
    arrays(np.float64, (6, 6), elements=st.sampled_from([0.0, 0.2, 0.7, 1.0])),
)
def test_focal_loss_is_non_negative(pred, target):
    loss, grad = focal_loss(pred, target)
    assert loss >= 0.0
    assert np.isfinite(grad).all()
