"""
Seeded synthetic frame streams and a naive query oracle.

A profile gives, per class, a histogram over count buckets, an extent range
and a placement rule. Counts are drawn frame by frame from one stream
generator; centers are placed on integer cells with a generator derived per
frame, so frames can be built in parallel.
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from pcq.config import DEFAULT_MERGE_RADIUS
from pcq.errors import DataError, PlacementError, UsageError
from pcq.heatmap.catalog import ClassCatalog
from pcq.heatmap.types import FrameAnnotation, ObjectCenter
from pcq.utils.parallel import map_ordered
from pcq.utils.rng import make_generator

logger = logging.getLogger(__name__)

PROFILE_DIR = Path(__file__).resolve().parents[1] / "data" / "profiles"
PLACEMENT_RETRIES = 200
HEX_DENSITY_BOUND = 2.0 / math.sqrt(3.0)


class ClassProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    buckets: List[Tuple[int, int]]
    masses: List[float]
    extent: Tuple[float, float]
    min_sep: float = Field(default=0.0, ge=0)
    placement: Literal["min_sep", "clustered"] = "min_sep"

    @model_validator(mode="after")
    def _histogram(self) -> "ClassProfile":
        if len(self.buckets) != len(self.masses) or not self.buckets:
            raise ValueError("buckets and masses must be non-empty and of equal length")
        if any(m < 0 for m in self.masses) or sum(self.masses) <= 0:
            raise ValueError("masses must be >= 0 with a positive total")
        if any(lo < 0 or lo > hi for lo, hi in self.buckets):
            raise ValueError(f"invalid count bucket in {self.buckets}")
        if not 0 < self.extent[0] <= self.extent[1]:
            raise ValueError(f"extent range must be positive, got {self.extent}")
        return self

    @property
    def probabilities(self) -> np.ndarray:
        masses = np.asarray(self.masses, dtype=np.float64)
        return masses / masses.sum()

    @property
    def max_count(self) -> int:
        return max(hi for (_, hi), m in zip(self.buckets, self.masses) if m > 0)

    def bucket_of(self, count: int) -> Optional[int]:
        for i, (lo, hi) in enumerate(self.buckets):
            if lo <= count <= hi:
                return i
        return None


class SceneProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    catalog: str = "nuscenes"
    temporal_correlation: float = Field(default=0.0, ge=0.0, le=1.0)
    classes: Dict[str, ClassProfile]

    @model_validator(mode="before")
    @classmethod
    def _bare_class_map(cls, data):
        # a file may hold just {class: {...}}
        if isinstance(data, dict) and "classes" not in data:
            return {"classes": data}
        return data

    def merge_radii(self, catalog: ClassCatalog) -> Tuple[float, ...]:
        """Default merge radius per catalog class: twice the largest extent of that class.

        Classes the profile does not draw get twice the largest extent of any class.
        """
        widest = 2.0 * max((cp.extent[1] for cp in self.classes.values()), default=DEFAULT_MERGE_RADIUS / 2.0)
        radii = [widest] * catalog.K
        for name, cp in self.classes.items():
            radii[catalog.index(name)] = 2.0 * cp.extent[1]
        return tuple(radii)


def load_profile(name_or_path: Union[str, Path]) -> SceneProfile:
    """A profile file, or one of the shipped profiles by name (nuscenes, kitti, waymo)."""
    path = Path(name_or_path)
    if not path.exists():
        path = PROFILE_DIR / f"{name_or_path}.json"
        if not path.exists():
            shipped = sorted(p.stem for p in PROFILE_DIR.glob("*.json"))
            raise UsageError(f"No profile '{name_or_path}'; shipped profiles: {shipped}")
    try:
        return SceneProfile.model_validate(json.loads(path.read_bytes()))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"profile {path} is not valid JSON: {exc}") from None
    except ValidationError as exc:
        raise DataError(f"profile {path} is invalid: {exc}") from None


def packing_bound(width: int, height: int, min_sep: float) -> int:
    """Upper bound on points pairwise >= min_sep apart on a width x height grid."""
    d = max(min_sep, 1.0)
    if d <= 1.0:
        return width * height
    return int(HEX_DENSITY_BOUND * (width - 1 + d) * (height - 1 + d) / (d * d))


def check_placeable(profile: SceneProfile, width: int, height: int) -> None:
    for name, cp in profile.classes.items():
        bound = packing_bound(width, height, cp.min_sep)
        if cp.max_count > bound:
            raise PlacementError(
                f"{name}: {cp.max_count} centers with min_sep={cp.min_sep} cannot fit a "
                f"{width}x{height} grid (at most {bound})"
            )


def draw_counts(profile: SceneProfile, catalog: ClassCatalog, n_frames: int, seed: int) -> np.ndarray:
    """(n_frames, K) requested counts; classes absent from the profile stay 0."""
    rng = make_generator(seed, 0)
    counts = np.zeros((n_frames, catalog.K), dtype=np.int64)
    for name, cp in profile.classes.items():
        c = catalog.index(name)
        p = cp.probabilities
        for i in range(n_frames):
            keep = rng.random() < profile.temporal_correlation
            bucket = int(rng.choice(len(p), p=p))
            lo, hi = cp.buckets[bucket]
            drawn = int(rng.integers(lo, hi + 1))
            counts[i, c] = counts[i - 1, c] if keep and i > 0 else drawn
    return counts


def _candidate(cp: ClassProfile, placed: List[Tuple[int, int]], width, height, rng) -> Tuple[int, int]:
    if cp.placement == "clustered" and placed:
        ax, ay = placed[int(rng.integers(len(placed)))]
        spread = 1.5 * max(cp.min_sep, 1.0)
        x = int(np.clip(round(ax + rng.normal(0.0, spread)), 0, width - 1))
        y = int(np.clip(round(ay + rng.normal(0.0, spread)), 0, height - 1))
        return x, y
    return int(rng.integers(0, width)), int(rng.integers(0, height))


def _separated(cell, placed, min_sep: float) -> bool:
    d = max(min_sep, 1.0)
    return all((cell[0] - px) ** 2 + (cell[1] - py) ** 2 >= d * d for px, py in placed)


def place_frame(
    frame_index: int,
    counts: np.ndarray,
    profile: SceneProfile,
    catalog: ClassCatalog,
    width: int,
    height: int,
    seed: int,
) -> FrameAnnotation:
    rng = make_generator(seed, frame_index + 1)
    centers = []
    for name, cp in profile.classes.items():
        c = catalog.index(name)
        placed: List[Tuple[int, int]] = []
        for _ in range(int(counts[c])):
            for _attempt in range(PLACEMENT_RETRIES):
                cell = _candidate(cp, placed, width, height, rng)
                if _separated(cell, placed, cp.min_sep):
                    break
            else:
                logger.warning(
                    "frame %d: placed %d of %d %s centers after %d retries",
                    frame_index, len(placed), int(counts[c]), name, PLACEMENT_RETRIES,
                )
                break
            placed.append(cell)
            extent = float(rng.uniform(cp.extent[0], cp.extent[1]))
            centers.append(ObjectCenter(class_index=c, x=cell[0], y=cell[1], extent=extent))
    return FrameAnnotation(frame_id=f"frame{frame_index:06d}", width=width, height=height, centers=centers)


def generate_stream(
    profile: SceneProfile,
    n_frames: int,
    width: int,
    height: int,
    seed: int,
    catalog: Optional[ClassCatalog] = None,
) -> List[FrameAnnotation]:
    catalog = catalog or ClassCatalog.named(profile.catalog)
    for name in profile.classes:
        catalog.index(name)
    check_placeable(profile, width, height)

    counts = draw_counts(profile, catalog, n_frames, seed)
    stream = map_ordered(
        lambda i: place_frame(i, counts[i], profile, catalog, width, height, seed), range(n_frames)
    )
    logger.info("Generated %d frames (%dx%d) from profile '%s', seed %d", n_frames, width, height, profile.name, seed)
    return stream


# ===============================
# ORACLE
# ===============================
def oracle_answer(annotations: Sequence[FrameAnnotation], query, catalog: ClassCatalog):
    """Straight loop over annotation centers; shares no code with the query engine."""
    if query.range is not None:
        annotations = list(annotations)[query.range[0] : query.range[1]]

    def count(ann, name):
        wanted = catalog.index(name)
        total = 0
        for center in ann.centers:
            if center.class_index == wanted:
                total += 1
        return total

    def holds(ann):
        for cond in query.conditions:
            n, op = count(ann, cond.q), cond.op.value
            if op == "<=" and not n <= cond.ct:
                return False
            if op == ">=" and not n >= cond.ct:
                return False
            if op == "=" and n != cond.ct:
                return False
        return True

    kind = query.kind.value
    if kind == "retrieve":
        return [ann.frame_id for ann in annotations if holds(ann)]
    if kind == "count":
        return sum(1 for ann in annotations if holds(ann))
    total = sum(count(ann, query.q) for ann in annotations)
    if kind == "agg_sum":
        return total
    return total / len(annotations) if annotations else 0.0
