from typing import Dict, Tuple

from pydantic import BaseModel, ConfigDict, field_validator

from pcq.errors import UnknownClassError

CATALOGS: Dict[str, Tuple[str, ...]] = {
    "nuscenes": (
        "car",
        "truck",
        "construction_vehicle",
        "bus",
        "trailer",
        "barrier",
        "motorcycle",
        "bicycle",
        "pedestrian",
        "traffic_cone",
    ),
    "kitti": ("car", "pedestrian", "cyclist"),
    "waymo": ("vehicle", "pedestrian", "cyclist"),
}


class ClassCatalog(BaseModel):
    """Ordered object classes; channel c of every heatmap belongs to ``classes[c]``."""

    model_config = ConfigDict(frozen=True)

    classes: Tuple[str, ...]

    @field_validator("classes")
    @classmethod
    def _unique_non_empty(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        if not value:
            raise ValueError("catalog needs at least one class")
        if len(set(value)) != len(value):
            raise ValueError(f"duplicate class names in {value}")
        return value

    @classmethod
    def named(cls, name: str) -> "ClassCatalog":
        try:
            return cls(classes=CATALOGS[name])
        except KeyError:
            raise UnknownClassError(
                f"Unknown catalog '{name}', expected one of {sorted(CATALOGS)}"
            ) from None

    @property
    def K(self) -> int:
        return len(self.classes)

    def index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise UnknownClassError(f"Class '{name}' is not in catalog {list(self.classes)}") from None

    def __contains__(self, name: object) -> bool:
        return name in self.classes
