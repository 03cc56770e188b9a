"""
Target heatmap rendering.

Each object center is splatted as an unnormalised Gaussian with
sigma = extent / 3 on its class channel; overlapping splats combine by
elementwise max and the nearest cell of every center is pinned to 1.0.
"""

from typing import Optional, Sequence

import numpy as np

from pcq.heatmap.catalog import ClassCatalog
from pcq.heatmap.types import FrameAnnotation, Heatmap, ObjectCenter


def gaussian_splat(center: ObjectCenter, width: int, height: int, scale: float = 1.0) -> np.ndarray:
    """Full-grid Gaussian of one center; values below float eps are zeroed."""
    sigma = center.extent / 3.0
    y, x = np.ogrid[0:height, 0:width]
    g = np.exp(-((x - center.x) ** 2 + (y - center.y) ** 2) / (2.0 * sigma * sigma))
    g[g < np.finfo(g.dtype).eps] = 0.0
    cx, cy = center.cell(width, height)
    g[cy, cx] = 1.0
    return g * scale


def render_channels(
    ann: FrameAnnotation, channels: int, scales: Optional[Sequence[float]] = None
) -> np.ndarray:
    values = np.zeros((channels, ann.height, ann.width))
    for i, center in enumerate(ann.centers):
        scale = 1.0 if scales is None else scales[i]
        if scale <= 0.0:
            continue
        np.maximum(
            values[center.class_index],
            gaussian_splat(center, ann.width, ann.height, scale),
            out=values[center.class_index],
        )
    return values


def render_target_heatmap(ann: FrameAnnotation, catalog: ClassCatalog) -> Heatmap:
    ann.check_bounds(catalog.K)
    return Heatmap(render_channels(ann, catalog.K))


def annotation_counts(ann: FrameAnnotation, catalog: ClassCatalog) -> np.ndarray:
    """Per-class number of centers, as an int64 vector of length K."""
    indices = np.array([c.class_index for c in ann.centers], dtype=np.int64)
    return np.bincount(indices, minlength=catalog.K)[: catalog.K]
