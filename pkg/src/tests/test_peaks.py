import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pcq.counting.peaks import (
    Peak,
    ThresholdMode,
    ThresholdPolicy,
    channel_threshold,
    count_from_heatmap,
    effective_threshold,
    local_maxima_2d,
    otsu_threshold,
)
from pcq.errors import DegenerateHistogramError, EmptyGridError
from pcq.heatmap.render import render_target_heatmap
from pcq.heatmap.types import Heatmap
from tests.helpers import annotation


def exhaustive_otsu(grid: np.ndarray) -> float:
    """Scan every split of 256 bins; first maximal run reported at its middle split."""
    values = grid.ravel()
    bins = np.minimum((values * 256).astype(int), 255)
    scores = {}
    for s in range(1, 256):
        low, high = values[bins < s], values[bins >= s]
        if low.size == 0 or high.size == 0:
            continue
        w0, w1 = low.size / values.size, high.size / values.size
        scores[s] = w0 * w1 * (low.mean() - high.mean()) ** 2
    best = max(scores.values())
    first = min(s for s, v in scores.items() if v == best)
    last = first
    while scores.get(last + 1) == best:
        last += 1
    return ((first + last) // 2) / 256


def test_no_peaks_on_zero_grid():
    assert local_maxima_2d(np.zeros((6, 6)), 0.5) == []


def test_single_peak():
    grid = np.zeros((5, 5))
    grid[2, 2] = 0.9
    assert local_maxima_2d(grid, 0.5) == [Peak(2, 2, 0.9)]


def test_threshold_filters_weaker_peak():
    grid = np.zeros((5, 5))
    grid[1, 1] = 0.8
    grid[3, 3] = 0.7
    assert local_maxima_2d(grid, 0.75) == [Peak(1, 1, 0.8)]


def test_peak_on_threshold_is_kept():
    grid = np.zeros((3, 3))
    grid[1, 1] = 0.5
    assert len(local_maxima_2d(grid, 0.5)) == 1


def test_plateau_yields_one_peak():
    grid = np.zeros((6, 6))
    grid[2:4, 2:4] = 0.9
    peaks = local_maxima_2d(grid, 0.5)
    assert len(peaks) == 1
    assert 2 <= peaks[0].x <= 3 and 2 <= peaks[0].y <= 3


def test_plateau_touching_higher_cell_is_not_a_peak():
    grid = np.zeros((6, 6))
    grid[2, 1:4] = 0.7
    grid[2, 4] = 0.9
    assert local_maxima_2d(grid, 0.5) == [Peak(4, 2, 0.9)]


def test_peaks_are_row_major():
    grid = np.zeros((9, 9))
    grid[6, 1] = grid[1, 7] = grid[1, 2] = 0.8
    assert [(p.x, p.y) for p in local_maxima_2d(grid, 0.5)] == [(2, 1), (7, 1), (1, 6)]


def test_empty_grid_is_rejected():
    with pytest.raises(EmptyGridError):
        local_maxima_2d(np.zeros((0, 4)), 0.5)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (8, 8), elements=st.sampled_from([0.0, 0.3, 0.6, 0.9])), st.sampled_from([0.2, 0.5, 0.7]))
def test_peaks_clear_threshold_and_are_never_adjacent(grid, threshold):
    peaks = local_maxima_2d(grid, threshold)
    assert all(p.value >= threshold for p in peaks)
    for i, a in enumerate(peaks):
        for b in peaks[i + 1 :]:
            assert max(abs(a.x - b.x), abs(a.y - b.y)) > 1


def test_otsu_separates_two_groups():
    grid = np.array([0.1] * 8 + [0.9] * 2).reshape(2, 5)
    k = otsu_threshold(grid)
    assert 0.1 < k <= 0.9
    assert k == exhaustive_otsu(grid)


def test_otsu_bimodal_halves_lands_mid_gap():
    grid = np.array([0.2] * 8 + [0.8] * 8).reshape(4, 4)
    assert otsu_threshold(grid) == pytest.approx(0.5)
    assert otsu_threshold(grid) == exhaustive_otsu(grid)


def test_otsu_constant_grid_is_degenerate():
    with pytest.raises(DegenerateHistogramError):
        otsu_threshold(np.full((4, 4), 0.3))


def test_otsu_matches_exhaustive_scan_on_random_grids():
    rng = np.random.default_rng(7)
    for _ in range(200):
        levels = rng.integers(0, 256, size=rng.integers(2, 6))
        grid = (rng.choice(levels, size=(6, 6)) + 0.5) / 256
        if np.unique(grid).size < 2:
            continue
        assert otsu_threshold(grid) == exhaustive_otsu(grid)


@pytest.mark.slow
def test_otsu_matches_exhaustive_scan_at_scale():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        grid = (rng.integers(0, 256, size=(8, 8)) + 0.5) / 256
        assert otsu_threshold(grid) == exhaustive_otsu(grid)


@pytest.mark.parametrize("k, t, expected", [(0.6, 0.5, 0.6), (0.3, 0.5, 0.5), (0.5, 0.5, 0.5)])
def test_effective_threshold(k, t, expected):
    assert effective_threshold(k, t) == expected


def test_degenerate_channel_falls_back_to_fixed_threshold():
    policy = ThresholdPolicy(fixed_t=0.4, mode=ThresholdMode.DYNAMIC_OTSU)
    assert channel_threshold(np.zeros((4, 4)), policy) == 0.4


def test_count_separated_cars(catalog):
    ann = annotation([(0, 4, 4, 2.0), (0, 20, 4, 2.0), (0, 4, 20, 2.0), (0, 20, 20, 2.0)])
    counts, peaks = count_from_heatmap(render_target_heatmap(ann, catalog), ThresholdPolicy())
    assert counts[0] == 4 and counts.sum() == 4
    assert peaks.positions(0) == [(4, 4), (20, 4), (4, 20), (20, 20)]


def test_count_zero_heatmap():
    counts, _ = count_from_heatmap(Heatmap.zeros(3, 8, 8), ThresholdPolicy())
    assert counts.tolist() == [0, 0, 0]


@pytest.mark.parametrize("mode", list(ThresholdMode))
def test_count_dense_pedestrians(catalog, mode):
    centers = [(8, 2 + 4 * i, 2 + 4 * j, 1.0) for i in range(6) for j in range(5)]
    ann = annotation(centers, 32, 32)
    counts, _ = count_from_heatmap(render_target_heatmap(ann, catalog), ThresholdPolicy(mode=mode))
    assert counts[8] == 30


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (8, 8), elements=st.sampled_from([0.0, 0.3, 0.6, 0.9])), st.floats(0.05, 0.95), st.floats(0.0, 0.5))
def test_raising_the_threshold_never_adds_peaks(grid, low, step):
    high = min(low + step, 1.0)
    assert len(local_maxima_2d(grid, high)) <= len(local_maxima_2d(grid, low))
