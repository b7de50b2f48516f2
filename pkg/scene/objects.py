from dataclasses import dataclass
from enum import Enum

from errors import ConfigError
from scene.geometry import AABB, Dims3, Point3, aabb_from_center_dims


class SpatialRelation(str, Enum):
    CLOSEST = "closest"
    FARTHEST = "farthest"
    NEXT_TO = "next_to"
    LEFT = "left"
    RIGHT = "right"
    LARGEST = "largest"
    SMALLEST = "smallest"

    @property
    def label(self) -> str:
        """Column header used in the training data statistics table"""
        return "Next to" if self is SpatialRelation.NEXT_TO else self.value.capitalize()

    @property
    def needs_anchor(self) -> bool:
        return self not in (SpatialRelation.LARGEST, SpatialRelation.SMALLEST)

    @classmethod
    def parse(cls, text: str) -> "SpatialRelation":
        key = text.strip().lower().replace("-", "_").replace(" ", "_")
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(r.value for r in cls)
            raise ConfigError(f"Unknown relation {text!r}; expected one of: {valid}") from None


@dataclass(frozen=True)
class ObjectInstance:
    """One placed object; the center is the box center, so z = height / 2 on the floor"""

    id: int
    class_name: str
    center: Point3
    dims: Dims3

    @property
    def aabb(self) -> AABB:
        return aabb_from_center_dims(self.center, self.dims)

    @property
    def volume(self) -> float:
        return self.dims.volume
