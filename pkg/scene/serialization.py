"""
Scene layout records.

One JSON object per scene with the fields
scene_id, relation, anchor_id, candidate_ids, target_id, template_index, query,
config and objects (id, class_name, center [x, y, z], dims [w, l, h]).
Numbers are written with 4 decimals.
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from config import SceneConfig
from errors import GroundingError, RecordSchemaError
from scene.generator import DECIMALS, SceneLayout
from scene.geometry import Dims3, Point3
from scene.objects import ObjectInstance, SpatialRelation


class ObjectRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int = Field(ge=0)
    class_name: str = Field(min_length=1)
    center: List[float] = Field(min_length=3, max_length=3)
    dims: List[float] = Field(min_length=3, max_length=3)


class LayoutRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scene_id: str
    relation: SpatialRelation
    anchor_id: Optional[int]
    candidate_ids: List[int] = Field(min_length=1)
    target_id: int
    template_index: int
    query: str
    config: Dict[str, Any]
    objects: List[ObjectRecord]


def _r(value: float) -> float:
    return round(float(value), DECIMALS)


def layout_to_record(layout: SceneLayout) -> Dict[str, Any]:
    """JSON-ready layout record"""
    return {
        "scene_id": layout.scene_id,
        "relation": layout.relation.value,
        "anchor_id": layout.anchor_id,
        "candidate_ids": list(layout.candidate_ids),
        "target_id": layout.target_id,
        "template_index": layout.template_index,
        "query": layout.query,
        "config": layout.config.to_dict(),
        "objects": [
            {
                "id": obj.id,
                "class_name": obj.class_name,
                "center": [_r(v) for v in obj.center.as_tuple()],
                "dims": [_r(v) for v in obj.dims.as_tuple()],
            }
            for obj in layout.objects
        ],
    }


def layout_from_record(data: Dict[str, Any], source: str = "<record>", line_number: int = 0) -> SceneLayout:
    try:
        record = LayoutRecord(**data)
        config = SceneConfig.from_dict(record.config)
        objects = tuple(
            ObjectInstance(o.id, o.class_name, Point3(*o.center), Dims3(*o.dims)) for o in record.objects
        )
    except (ValidationError, TypeError, ValueError, GroundingError) as e:
        raise RecordSchemaError(source, line_number, f"invalid layout record: {e}")
    return SceneLayout(
        scene_id=record.scene_id,
        config=config,
        objects=objects,
        relation=record.relation,
        anchor_id=record.anchor_id,
        candidate_ids=tuple(record.candidate_ids),
        target_id=record.target_id,
        query=record.query,
        template_index=record.template_index,
    )
