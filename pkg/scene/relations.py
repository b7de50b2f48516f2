"""
Ground-truth spatial-relation oracle and the query-template bank.

Left/Right are judged from a viewer standing at the room center and facing
the anchor: candidate c is left of anchor a iff cross(a - v, c - a).z > 0.
"""
import json
import math
import re
import string
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from config import DEFAULT_TEMPLATES_PATH
from errors import (
    AmbiguousRelation,
    MissingAnchor,
    MissingAnchorClass,
    RelationError,
    TemplateSchemaError,
    UnfilledPlaceholder,
)
from scene.geometry import Point3, center_distance_xy
from scene.objects import ObjectInstance, SpatialRelation

TIE_TOLERANCE = 1e-9
TEMPLATES_PER_RELATION = 7

_PLACEHOLDER = re.compile(r"\{[A-Za-z_][A-Za-z0-9_]*\}")


@dataclass(frozen=True)
class Viewer:
    position: Point3


@dataclass(frozen=True)
class QueryTemplate:
    relation: SpatialRelation
    index: int
    pattern: str

    @property
    def needs_anchor(self) -> bool:
        return "{anchor}" in self.pattern


def scene_center_viewer(room_width: float, room_length: float) -> Viewer:
    """Default situation: the viewer stands in the middle of the room"""
    return Viewer(Point3(room_width / 2, room_length / 2, 0.0))


# -- oracle ---------------------------------------------------------------

def lateral_offset(viewer: Viewer, anchor: Point3, candidate: Point3) -> float:
    """Signed distance of the candidate from the viewer->anchor line; positive is left"""
    dx, dy = anchor.x - viewer.position.x, anchor.y - viewer.position.y
    norm = math.hypot(dx, dy)
    if norm <= TIE_TOLERANCE:
        raise AmbiguousRelation("Anchor coincides with the viewer; left/right is undefined")
    cross = dx * (candidate.y - anchor.y) - dy * (candidate.x - anchor.x)
    return cross / norm


def candidate_metrics(objects: Sequence[ObjectInstance], relation: SpatialRelation,
                      anchor_id: Optional[int], candidate_ids: Sequence[int],
                      viewer: Viewer) -> List[Tuple[int, float]]:
    """The per-candidate quantity the relation is decided on, in candidate order"""
    by_id: Dict[int, ObjectInstance] = {obj.id: obj for obj in objects}
    if not candidate_ids:
        raise RelationError("candidate_ids must not be empty")
    missing = [i for i in list(candidate_ids) + ([anchor_id] if anchor_id is not None else []) if i not in by_id]
    if missing:
        raise RelationError(f"Ids not present in the scene: {missing}")

    candidates = [by_id[i] for i in candidate_ids]
    if not relation.needs_anchor:
        return [(c.id, c.volume) for c in candidates]

    if anchor_id is None:
        raise MissingAnchor(f"Relation '{relation.value}' needs an anchor object")
    anchor = by_id[anchor_id]
    if relation in (SpatialRelation.LEFT, SpatialRelation.RIGHT):
        return [(c.id, lateral_offset(viewer, anchor.center, c.center)) for c in candidates]
    return [(c.id, center_distance_xy(c.center, anchor.center)) for c in candidates]


def _unique_extreme(metrics: List[Tuple[int, float]], largest: bool) -> int:
    ranked = sorted(metrics, key=lambda item: item[1], reverse=largest)
    if len(ranked) > 1 and abs(ranked[0][1] - ranked[1][1]) <= TIE_TOLERANCE:
        raise AmbiguousRelation(f"Candidates {ranked[0][0]} and {ranked[1][0]} tie")
    return ranked[0][0]


def _unique_match(metrics: List[Tuple[int, float]], accept, what: str) -> int:
    matches = [object_id for object_id, value in metrics if accept(value)]
    if len(matches) != 1:
        raise AmbiguousRelation(f"Expected exactly one candidate {what}, found {len(matches)}")
    return matches[0]


def resolve_target(objects: Sequence[ObjectInstance], relation: SpatialRelation,
                   anchor_id: Optional[int], candidate_ids: Sequence[int], viewer: Viewer,
                   next_to_radius: float = 0.8) -> int:
    """Return the single candidate satisfying the relation; ties are errors"""
    metrics = candidate_metrics(objects, relation, anchor_id, candidate_ids, viewer)

    if relation is SpatialRelation.CLOSEST:
        return _unique_extreme(metrics, largest=False)
    if relation is SpatialRelation.FARTHEST:
        return _unique_extreme(metrics, largest=True)
    if relation is SpatialRelation.LARGEST:
        return _unique_extreme(metrics, largest=True)
    if relation is SpatialRelation.SMALLEST:
        return _unique_extreme(metrics, largest=False)
    if relation is SpatialRelation.NEXT_TO:
        return _unique_match(metrics, lambda d: d <= next_to_radius, f"within {next_to_radius} m of the anchor")
    if relation is SpatialRelation.LEFT:
        return _unique_match(metrics, lambda s: s > TIE_TOLERANCE, "left of the anchor")
    return _unique_match(metrics, lambda s: s < -TIE_TOLERANCE, "right of the anchor")


# -- template bank ----------------------------------------------------------

class TemplateRow(BaseModel):
    model_config = ConfigDict(extra="forbid")

    relation: SpatialRelation
    index: int = Field(ge=0, le=TEMPLATES_PER_RELATION - 1)
    pattern: str = Field(min_length=1)


class TemplateBank:
    """Seven query patterns per relation, checked for placeholder rules on load"""

    def __init__(self, templates: Sequence[QueryTemplate]):
        self._by_relation: Dict[SpatialRelation, List[QueryTemplate]] = {r: [] for r in SpatialRelation}
        for template in templates:
            _check_placeholders(template)
            self._by_relation[template.relation].append(template)

        for relation, bucket in self._by_relation.items():
            bucket.sort(key=lambda t: t.index)
            indices = [t.index for t in bucket]
            if indices != list(range(TEMPLATES_PER_RELATION)):
                raise TemplateSchemaError(
                    f"Relation '{relation.value}' needs templates 0..{TEMPLATES_PER_RELATION - 1}, got {indices}"
                )

    def for_relation(self, relation: SpatialRelation) -> List[QueryTemplate]:
        return list(self._by_relation[relation])

    def get(self, relation: SpatialRelation, index: int) -> QueryTemplate:
        return self._by_relation[relation][index]

    def to_records(self) -> List[dict]:
        return [
            {"relation": t.relation.value, "index": t.index, "pattern": t.pattern}
            for relation in SpatialRelation for t in self._by_relation[relation]
        ]


def _check_placeholders(template: QueryTemplate) -> None:
    names = {name for _, name, _, _ in string.Formatter().parse(template.pattern) if name is not None}
    expected = {"target", "anchor"} if template.relation.needs_anchor else {"target"}
    if names != expected:
        raise TemplateSchemaError(
            f"Template {template.relation.value}#{template.index} must use exactly "
            f"{sorted(expected)}, found {sorted(names)}"
        )


def load_template_bank(path: Optional[str] = None) -> TemplateBank:
    """Load and validate the query templates; the shipped bank is used when no path is given"""
    path = path or DEFAULT_TEMPLATES_PATH
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        rows = [TemplateRow(**row) for row in data["templates"]]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise TemplateSchemaError(f"Cannot read template file {path}: {e}")
    except ValidationError as e:
        raise TemplateSchemaError(f"Invalid template record in {path}: {e}")
    return TemplateBank([QueryTemplate(row.relation, row.index, row.pattern) for row in rows])


def render_query(template: QueryTemplate, target_class: str, anchor_class: Optional[str] = None) -> str:
    """Fill a template with the target class and, for anchored relations, the anchor class"""
    if template.needs_anchor and not anchor_class:
        raise MissingAnchorClass(f"Template {template.relation.value}#{template.index} needs an anchor class")
    query = template.pattern.replace("{target}", target_class)
    if template.needs_anchor:
        query = query.replace("{anchor}", anchor_class)
    leftover = _PLACEHOLDER.search(query)
    if leftover:
        raise UnfilledPlaceholder(f"Placeholder {leftover.group(0)} left in query: {query!r}")
    return query
