"""
Predicted-heatmap simulation.

Stands in for a trained network: starting from the target, applies (in this
order) center drops and seam splitting, spurious peak injection, Gaussian
blur, additive noise, and finally clamps to [0, 1]. Deterministic for a
fixed ``profile.seed``.
"""

import logging
from typing import List, Sequence

import numpy as np
from scipy import ndimage

from pcq.counting.partition import CounterConfig, counting_regions
from pcq.heatmap.catalog import ClassCatalog
from pcq.heatmap.render import render_channels, render_target_heatmap
from pcq.heatmap.types import FrameAnnotation, Heatmap, NoiseProfile, ObjectCenter
from pcq.utils.parallel import map_ordered
from pcq.utils.rng import derive_seed, make_generator

logger = logging.getLogger(__name__)

INJECTED_EXTENT = (1.0, 3.0)
INJECTED_PEAK = (0.5, 1.0)


def _is_split(center: ObjectCenter, regions, width: int, height: int) -> bool:
    """True when no region holds the whole object disk; grid edges are not seams."""
    for r in regions:
        left = -np.inf if r.x_start == 0 else r.x_start
        top = -np.inf if r.y_start == 0 else r.y_start
        right = np.inf if r.x_end == width else r.x_end - 1
        bottom = np.inf if r.y_end == height else r.y_end - 1
        if (
            left <= center.x - center.extent
            and center.x + center.extent <= right
            and top <= center.y - center.extent
            and center.y + center.extent <= bottom
        ):
            return False
    return True


def _center_scales(ann: FrameAnnotation, profile: NoiseProfile, rng: np.random.Generator) -> List[float]:
    draws = rng.random(len(ann.centers))
    scales = [0.0 if u < profile.drop_for(c.class_index) else 1.0 for u, c in zip(draws, ann.centers)]

    if profile.boundary_split_bias > 0 and profile.seam_partitions > 1:
        layout = CounterConfig(pt=profile.seam_partitions, overlap_ratio=profile.seam_overlap)
        regions = counting_regions(ann.width, ann.height, layout)
        split_scale = max(0.0, 1.0 - profile.boundary_split_bias)
        for i, center in enumerate(ann.centers):
            if scales[i] > 0 and _is_split(center, regions, ann.width, ann.height):
                scales[i] = split_scale
    return scales


def simulate_prediction(target: Heatmap, ann: FrameAnnotation, profile: NoiseProfile) -> Heatmap:
    """
    Simulated prediction for ``ann``.

    When any center is dropped or split the channels are re-rendered from
    ``ann``; otherwise ``target`` is the starting point.
    """
    rng = make_generator(profile.seed)
    channels, height, width = target.values.shape

    scales = _center_scales(ann, profile, rng)
    if all(s == 1.0 for s in scales):
        values = target.values.copy()
    else:
        values = render_channels(ann, channels, scales)
        logger.debug(
            "frame %s: %d dropped, %d attenuated",
            ann.frame_id,
            sum(s == 0.0 for s in scales),
            sum(0.0 < s < 1.0 for s in scales),
        )

    for c in range(channels):
        if rng.random() < profile.false_positive_for(c):
            x, y = rng.integers(0, width), rng.integers(0, height)
            sigma = rng.uniform(*INJECTED_EXTENT) / 3.0
            peak = rng.uniform(*INJECTED_PEAK)
            yy, xx = np.ogrid[0:height, 0:width]
            blob = peak * np.exp(-((xx - x) ** 2 + (yy - y) ** 2) / (2.0 * sigma * sigma))
            np.maximum(values[c], blob, out=values[c])

    if profile.blur_sigma > 0:
        for c in range(channels):
            values[c] = ndimage.gaussian_filter(values[c], profile.blur_sigma, mode="constant")

    if profile.additive_noise > 0:
        values += rng.uniform(-profile.additive_noise, profile.additive_noise, size=values.shape)

    return Heatmap(np.clip(values, 0.0, 1.0))


def simulate_stream(
    annotations: Sequence[FrameAnnotation], catalog: ClassCatalog, profile: NoiseProfile
) -> List[Heatmap]:
    """Render and perturb every frame; frame i draws from a seed derived from (profile.seed, i)."""

    def frame(item):
        index, ann = item
        target = render_target_heatmap(ann, catalog)
        if profile.is_identity:
            return target
        return simulate_prediction(target, ann, profile.model_copy(update={"seed": derive_seed(profile.seed, index)}))

    heatmaps = map_ordered(frame, enumerate(annotations))
    logger.info("Rendered %d frames", len(heatmaps))
    return heatmaps
