"""
Axis-aligned box algebra for placed objects and grounding boxes.

All types are frozen values; every function here is pure.
"""
import math
from dataclasses import dataclass
from typing import Tuple

from errors import InvalidGeometry


def _finite(*values: float) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not _finite(self.x, self.y, self.z):
            raise InvalidGeometry(f"Point coordinates must be finite: {self}")

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class Dims3:
    """Object extents in meters, (width, length, height) along (x, y, z)"""

    width: float
    length: float
    height: float

    def __post_init__(self):
        if not _finite(self.width, self.length, self.height):
            raise InvalidGeometry(f"Dimensions must be finite: {self}")
        if min(self.width, self.length, self.height) <= 0:
            raise InvalidGeometry(f"Dimensions must be strictly positive: {self}")

    @property
    def volume(self) -> float:
        return self.width * self.length * self.height

    @property
    def footprint(self) -> float:
        return self.width * self.length

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.width, self.length, self.height)


@dataclass(frozen=True)
class AABB:
    min_corner: Point3
    max_corner: Point3

    def __post_init__(self):
        lo, hi = self.min_corner.as_tuple(), self.max_corner.as_tuple()
        if any(a > b for a, b in zip(lo, hi)):
            raise InvalidGeometry(f"min_corner must not exceed max_corner: {lo} > {hi}")

    @property
    def volume(self) -> float:
        return volume(self)

    @property
    def center(self) -> Point3:
        lo, hi = self.min_corner, self.max_corner
        return Point3((lo.x + hi.x) / 2, (lo.y + hi.y) / 2, (lo.z + hi.z) / 2)

    def translated(self, dx: float, dy: float, dz: float) -> "AABB":
        lo, hi = self.min_corner, self.max_corner
        return AABB(Point3(lo.x + dx, lo.y + dy, lo.z + dz), Point3(hi.x + dx, hi.y + dy, hi.z + dz))


def aabb_from_center_dims(center: Point3, dims: Dims3) -> AABB:
    """Box of the given size centred on `center`"""
    hw, hl, hh = dims.width / 2, dims.length / 2, dims.height / 2
    return AABB(
        Point3(center.x - hw, center.y - hl, center.z - hh),
        Point3(center.x + hw, center.y + hl, center.z + hh),
    )


def volume(box: AABB) -> float:
    """Box volume in cubic meters"""
    lo, hi = box.min_corner, box.max_corner
    return (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z)


def _overlap_1d(a_lo: float, a_hi: float, b_lo: float, b_hi: float) -> float:
    return max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))


def intersection_volume(a: AABB, b: AABB) -> float:
    """Overlap volume of two boxes, 0 when they only touch"""
    return (
        _overlap_1d(a.min_corner.x, a.max_corner.x, b.min_corner.x, b.max_corner.x)
        * _overlap_1d(a.min_corner.y, a.max_corner.y, b.min_corner.y, b.max_corner.y)
        * _overlap_1d(a.min_corner.z, a.max_corner.z, b.min_corner.z, b.max_corner.z)
    )


def iou(a: AABB, b: AABB) -> float:
    """Intersection volume over union volume; 0 for disjoint or degenerate pairs"""
    inter = intersection_volume(a, b)
    if inter <= 0.0:
        return 0.0
    union = volume(a) + volume(b) - inter
    return min(1.0, inter / union)


def footprint_overlaps(a: AABB, b: AABB) -> bool:
    """True iff the xy projections share positive area; edge contact does not count"""
    return (
        _overlap_1d(a.min_corner.x, a.max_corner.x, b.min_corner.x, b.max_corner.x) > 0.0
        and _overlap_1d(a.min_corner.y, a.max_corner.y, b.min_corner.y, b.max_corner.y) > 0.0
    )


def center_distance_xy(a: Point3, b: Point3) -> float:
    # heights differ by class; objects rest on the floor so only the room plane counts
    return math.hypot(a.x - b.x, a.y - b.y)
