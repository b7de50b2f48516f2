"""
Structured scene text, the object list the language model reads.

Grammar, one object per line, ids strictly increasing:

    ID <id>: <class>, center=(<x>, <y>, <z>), size=(<w>, <l>, <h>)

Numbers have exactly two decimals, rounded half away from zero.
"""
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import List, Sequence, Tuple

from errors import DuplicateId, EmptyScene, MalformedLine
from scene.geometry import Dims3, Point3
from scene.objects import ObjectInstance

_QUANTUM = Decimal("0.01")
_NUMBER = r"(-?\d+\.\d{2})"
_SIZE = r"(\d+\.\d{2})"
_LINE = re.compile(
    rf"^ID (\d+): (.+?), center=\({_NUMBER}, {_NUMBER}, {_NUMBER}\), size=\({_SIZE}, {_SIZE}, {_SIZE}\)$"
)
# a size printed as 0.00 comes back as the largest value that still prints as 0.00
SUB_RESOLUTION_SIZE = 0.004


@dataclass(frozen=True)
class SceneText:
    lines: Tuple[str, ...]

    @property
    def text(self) -> str:
        return "\n".join(self.lines)

    def __str__(self) -> str:
        return self.text


def format_number(value: float) -> str:
    text = str(Decimal(repr(float(value))).quantize(_QUANTUM, rounding=ROUND_HALF_UP))
    return "0.00" if text == "-0.00" else text


def format_object(obj: ObjectInstance) -> str:
    c, d = obj.center, obj.dims
    return (
        f"ID {obj.id}: {obj.class_name}, "
        f"center=({format_number(c.x)}, {format_number(c.y)}, {format_number(c.z)}), "
        f"size=({format_number(d.width)}, {format_number(d.length)}, {format_number(d.height)})"
    )


def serialize_scene(objects: Sequence[ObjectInstance]) -> SceneText:
    """One line per object, sorted by id, numbers at two decimals"""
    if not objects:
        raise EmptyScene("Cannot serialize a scene without objects")
    seen = set()
    for obj in objects:
        if obj.id in seen:
            raise DuplicateId(obj.id)
        seen.add(obj.id)
    return SceneText(tuple(format_object(obj) for obj in sorted(objects, key=lambda o: o.id)))


def parse_scene_text(text: str) -> List[ObjectInstance]:
    """Inverse of serialize_scene, exact up to the two-decimal quantization"""
    objects: List[ObjectInstance] = []
    seen = set()
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        match = _LINE.match(line)
        if not match:
            raise MalformedLine(line_number, raw)
        object_id = int(match.group(1))
        if object_id in seen:
            raise DuplicateId(object_id)
        seen.add(object_id)
        x, y, z, w, l, h = (float(v) for v in match.groups()[2:])
        dims = Dims3(*(v if v > 0 else SUB_RESOLUTION_SIZE for v in (w, l, h)))
        objects.append(ObjectInstance(object_id, match.group(2), Point3(x, y, z), dims))
    return objects
