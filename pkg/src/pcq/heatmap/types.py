from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pcq.errors import DataError, OutOfBoundsCenterError

Rate = Union[float, Tuple[float, ...]]


@dataclass(frozen=True, eq=False)
class Heatmap:
    """K-channel activation grid, stored as a read-only ``(K, H, W)`` float64 array."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 1:
            raise DataError(f"Heatmap needs shape (K, H, W) with every dim >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise DataError("Heatmap values must lie in [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "Heatmap":
        return cls(np.zeros((channels, height, width)))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def channel(self, c: int) -> np.ndarray:
        return self.values[c]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Heatmap):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)


class ObjectCenter(BaseModel):
    model_config = ConfigDict(frozen=True)

    class_index: int = Field(ge=0)
    x: float
    y: float
    extent: float = Field(gt=0)

    def cell(self, width: int, height: int) -> Tuple[int, int]:
        """Nearest grid cell, clamped into the grid."""
        cx = min(int(np.floor(self.x + 0.5)), width - 1)
        cy = min(int(np.floor(self.y + 0.5)), height - 1)
        return cx, cy


class FrameAnnotation(BaseModel):
    """Ground-truth centers of one frame on a ``width`` x ``height`` grid."""

    model_config = ConfigDict(frozen=True)

    frame_id: str
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    centers: List[ObjectCenter] = Field(default_factory=list)

    def check_bounds(self, channels: Optional[int] = None) -> None:
        for center in self.centers:
            inside = 0 <= center.x < self.width and 0 <= center.y < self.height
            if not inside or (channels is not None and center.class_index >= channels):
                raise OutOfBoundsCenterError(center, self.width, self.height)


class NoiseProfile(BaseModel):
    """Error model standing in for a trained network's predicted heatmap."""

    model_config = ConfigDict(frozen=True)

    blur_sigma: float = Field(default=0.0, ge=0)
    additive_noise: float = Field(default=0.0, ge=0, le=1)
    drop_rate: Rate = 0.0
    false_positive_rate: Rate = 0.0
    boundary_split_bias: float = Field(default=0.0, ge=0)
    seam_partitions: int = Field(default=1, ge=1)
    seam_overlap: float = Field(default=0.0, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _probabilities(self) -> "NoiseProfile":
        for name in ("drop_rate", "false_positive_rate"):
            rates = getattr(self, name)
            for rate in rates if isinstance(rates, tuple) else (rates,):
                if not 0.0 <= rate <= 1.0:
                    raise ValueError(f"{name} must lie in [0, 1], got {rate}")
        return self

    def drop_for(self, class_index: int) -> float:
        return _rate_for(self.drop_rate, class_index)

    def false_positive_for(self, class_index: int) -> float:
        return _rate_for(self.false_positive_rate, class_index)

    @property
    def is_identity(self) -> bool:
        return (
            self.blur_sigma == 0
            and self.additive_noise == 0
            and self.boundary_split_bias == 0
            and not _any_positive(self.drop_rate)
            and not _any_positive(self.false_positive_rate)
        )


def _rate_for(rate: Rate, class_index: int) -> float:
    if isinstance(rate, tuple):
        return rate[class_index] if class_index < len(rate) else 0.0
    return rate


def _any_positive(rate: Rate) -> bool:
    return any(r > 0 for r in rate) if isinstance(rate, tuple) else rate > 0
