import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcq.errors import DataError, HeatmapFormatError, OutOfBoundsCenterError, UnknownClassError
from pcq.heatmap.catalog import ClassCatalog
from pcq.heatmap.codec import encode_heatmap, read_heatmap, read_heatmaps, write_heatmap, write_heatmaps
from pcq.heatmap.render import annotation_counts, gaussian_splat, render_target_heatmap
from pcq.heatmap.types import Heatmap, ObjectCenter
from tests.helpers import annotation


def test_catalog_lookup(catalog):
    assert catalog.K == 10
    assert catalog.index("car") == 0
    assert "bus" in catalog
    with pytest.raises(UnknownClassError):
        catalog.index("tram")
    with pytest.raises(UnknownClassError):
        ClassCatalog.named("argoverse")


def test_catalog_rejects_duplicates():
    with pytest.raises(ValueError):
        ClassCatalog(classes=("car", "car"))


def test_heatmap_rejects_out_of_range_values():
    with pytest.raises(DataError):
        Heatmap(np.full((1, 2, 2), 1.5))
    with pytest.raises(DataError):
        Heatmap(np.zeros((2, 2)))


def test_heatmap_values_are_read_only():
    hm = Heatmap.zeros(1, 3, 3)
    with pytest.raises(ValueError):
        hm.values[0, 0, 0] = 1.0


def test_empty_annotation_renders_zeros(catalog):
    hm = render_target_heatmap(annotation([], 16, 12), catalog)
    assert hm.values.shape == (catalog.K, 12, 16)
    assert not hm.values.any()


def test_single_center_gaussian(catalog):
    hm = render_target_heatmap(annotation([(0, 8, 8, 3.0)], 17, 17), catalog)
    car = hm.channel(0)
    assert car[8, 8] == 1.0
    assert car[9, 8] == pytest.approx(math.exp(-0.5))
    assert car[8, 9] == pytest.approx(math.exp(-0.5))
    np.testing.assert_allclose(car, car.T)
    np.testing.assert_allclose(car, car[::-1, ::-1])


def test_overlapping_splats_take_the_max(catalog):
    ann = annotation([(0, 8, 8, 3.0), (0, 10, 8, 6.0)], 20, 20)
    car = render_target_heatmap(ann, catalog).channel(0)
    near = math.exp(-1 / (2 * 1.0**2))
    wide = math.exp(-1 / (2 * 2.0**2))
    assert car[8, 9] == pytest.approx(max(near, wide))
    assert car[8, 9] < near + wide


def test_subcell_center_is_pinned_to_nearest_cell():
    g = gaussian_splat(ObjectCenter(class_index=0, x=3.6, y=2.4, extent=2.0), 8, 8)
    assert g[2, 4] == 1.0
    assert g.max() == 1.0


def test_out_of_bounds_center_names_the_center(catalog):
    with pytest.raises(OutOfBoundsCenterError, match="x=40"):
        render_target_heatmap(annotation([(0, 40, 3, 2.0)], 32, 32), catalog)
    with pytest.raises(OutOfBoundsCenterError):
        render_target_heatmap(annotation([(12, 3, 3, 2.0)], 32, 32), catalog)


def test_annotation_counts(catalog):
    ann = annotation([(0, 1, 1, 1), (0, 5, 5, 1), (0, 9, 9, 1), (8, 20, 20, 1)])
    counts = annotation_counts(ann, catalog)
    assert counts[0] == 3 and counts[8] == 1
    assert counts.sum() == 4
    assert not annotation_counts(annotation([]), catalog).any()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 31), st.integers(0, 31)), max_size=50))
def test_annotation_counts_match_tally(items):
    catalog = ClassCatalog.named("nuscenes")
    ann = annotation([(c, x, y, 2.0) for c, x, y in items])
    counts = annotation_counts(ann, catalog)
    for c in range(catalog.K):
        assert counts[c] == sum(1 for item in items if item[0] == c)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 23), st.integers(0, 23), st.floats(0.5, 6.0)), max_size=12))
def test_rendered_values_in_unit_range_with_centers_at_one(items):
    catalog = ClassCatalog.named("kitti")
    hm = render_target_heatmap(annotation(items, 24, 24), catalog)
    assert hm.values.min() >= 0.0 and hm.values.max() <= 1.0
    for c, x, y, _ in items:
        assert hm.values[c, y, x] == 1.0


def test_codec_layout_and_stream(tmp_path):
    rng = np.random.default_rng(3)
    frames = [Heatmap(rng.random((2, 5, 7)).astype(np.float32)) for _ in range(3)]
    raw = encode_heatmap(frames[0])
    assert raw[:4] == b"PCQH"
    assert np.frombuffer(raw[4:16], dtype="<u4").tolist() == [2, 5, 7]
    assert len(raw) == 16 + 2 * 5 * 7 * 4

    path = tmp_path / "frames.pcqh"
    assert write_heatmaps(path, frames) == 3
    assert read_heatmaps(path) == frames


def test_codec_single_record_and_errors(tmp_path):
    path = tmp_path / "one.pcqh"
    write_heatmap(path, Heatmap.zeros(1, 2, 2))
    assert read_heatmap(path) == Heatmap.zeros(1, 2, 2)

    path.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(HeatmapFormatError, match="bad magic"):
        read_heatmaps(path)

    path.write_bytes(encode_heatmap(Heatmap.zeros(1, 2, 2))[:-3])
    with pytest.raises(HeatmapFormatError, match="expected 4 values"):
        read_heatmaps(path)


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_render_ignores_center_order(data):
    items = data.draw(
        st.lists(st.tuples(st.integers(0, 2), st.integers(0, 19), st.integers(0, 19), st.floats(0.5, 4.0)), max_size=8)
    )
    shuffled = data.draw(st.permutations(items))
    catalog = ClassCatalog.named("kitti")
    a = render_target_heatmap(annotation(items, 20, 20), catalog)
    b = render_target_heatmap(annotation(shuffled, 20, 20), catalog)
    np.testing.assert_array_equal(a.values, b.values)
