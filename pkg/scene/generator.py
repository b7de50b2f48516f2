"""
Procedural scene generation.

A scene is built in five steps: an empty room, a relation with its anchor and
same-class candidates, rejection-sampled placement, target designation by the
oracle, and enrichment with off-class filler objects until the scene holds
``min_objects`` objects.
"""
import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from config import SceneConfig
from errors import AmbiguousRelation, PlacementExhausted, RelationError
from scene.catalog import Catalog, ObjectClass, sample_dims
from scene.geometry import AABB, Dims3, Point3
from scene.objects import ObjectInstance, SpatialRelation
from scene.relations import (
    TemplateBank,
    Viewer,
    candidate_metrics,
    lateral_offset,
    load_template_bank,
    render_query,
    resolve_target,
    scene_center_viewer,
)

logger = logging.getLogger(__name__)

DECIMALS = 4
# heights snap to an even last digit so that z = height / 2 survives 4-decimal files exactly
HEIGHT_STEP = 0.0002
FLOOR_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SceneLayout:
    scene_id: str
    config: SceneConfig
    objects: Tuple[ObjectInstance, ...]
    relation: SpatialRelation
    anchor_id: Optional[int]
    candidate_ids: Tuple[int, ...]
    target_id: int
    query: str
    template_index: int

    def object(self, object_id: int) -> ObjectInstance:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    @property
    def candidate_class(self) -> str:
        return self.object(self.candidate_ids[0]).class_name

    @property
    def viewer(self) -> Viewer:
        return scene_center_viewer(self.config.room_width, self.config.room_length)


@dataclass(frozen=True)
class Violation:
    kind: str
    object_ids: Tuple[int, ...] = ()
    detail: str = ""

    def __str__(self) -> str:
        ids = ", ".join(str(i) for i in self.object_ids)
        return f"{self.kind}({ids})" + (f": {self.detail}" if self.detail else "")


class FootprintIndex:
    """Placed xy footprints, checked against new rectangles in one vectorized pass"""

    def __init__(self, boxes: Sequence[AABB] = ()):
        self._rects = np.empty((max(64, len(boxes) * 2), 4))
        self._count = 0
        for box in boxes:
            self.add(box)

    def add(self, box: AABB) -> None:
        self.add_rect(box.min_corner.x, box.min_corner.y, box.max_corner.x, box.max_corner.y)

    def add_rect(self, x0: float, y0: float, x1: float, y1: float) -> None:
        if self._count == len(self._rects):
            self._rects = np.concatenate([self._rects, np.empty_like(self._rects)])
        self._rects[self._count] = (x0, y0, x1, y1)
        self._count += 1

    def overlaps(self, box: AABB) -> bool:
        return self.overlaps_rect(box.min_corner.x, box.min_corner.y, box.max_corner.x, box.max_corner.y)

    def overlaps_rect(self, x0: float, y0: float, x1: float, y1: float) -> bool:
        """Positive-area intersection with any placed footprint; touching edges do not count"""
        if not self._count:
            return False
        r = self._rects[:self._count]
        hits = (r[:, 0] < x1) & (x0 < r[:, 2]) & (r[:, 1] < y1) & (y0 < r[:, 3])
        return bool(hits.any())


# -- helpers ----------------------------------------------------------------

def _quantized_dims(catalog: Catalog, class_name: str, jitter: float, rng: np.random.Generator) -> Dims3:
    dims = sample_dims(catalog, class_name, jitter, rng)
    height = round(max(1, round(dims.height / HEIGHT_STEP)) * HEIGHT_STEP, DECIMALS)
    return Dims3(
        max(round(dims.width, DECIMALS), 10 ** -DECIMALS),
        max(round(dims.length, DECIMALS), 10 ** -DECIMALS),
        height,
    )


def _inside_room(box: AABB, config: SceneConfig) -> bool:
    return (
        box.min_corner.x >= 0.0 and box.min_corner.y >= 0.0
        and box.max_corner.x <= config.room_width and box.max_corner.y <= config.room_length
    )


PositionProposal = Callable[[np.random.Generator, Dims3], Tuple[float, float]]


def _uniform_in_room(config: SceneConfig) -> PositionProposal:
    def propose(rng: np.random.Generator, dims: Dims3) -> Tuple[float, float]:
        x = rng.uniform(dims.width / 2, config.room_width - dims.width / 2)
        y = rng.uniform(dims.length / 2, config.room_length - dims.length / 2)
        return x, y
    return propose


def _uniform_in_disk(center: Point3, radius: float) -> PositionProposal:
    def propose(rng: np.random.Generator, dims: Dims3) -> Tuple[float, float]:
        r = radius * np.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2 * np.pi)
        return center.x + r * np.cos(theta), center.y + r * np.sin(theta)
    return propose


def _sample_position(rng: np.random.Generator, dims: Dims3, config: SceneConfig, index: FootprintIndex,
                     propose: PositionProposal, accept: Optional[Callable[[Point3], bool]] = None) -> Optional[Point3]:
    """Rejection-sample a floor position; None once max_placement_retries draws fail"""
    hw, hl = dims.width / 2, dims.length / 2
    for _ in range(config.max_placement_retries):
        x, y = propose(rng, dims)
        x, y = round(float(x), DECIMALS), round(float(y), DECIMALS)
        # same arithmetic as aabb_from_center_dims, on plain floats
        x0, y0, x1, y1 = x - hw, y - hl, x + hw, y + hl
        if x0 < 0.0 or y0 < 0.0 or x1 > config.room_width or y1 > config.room_length:
            continue
        if index.overlaps_rect(x0, y0, x1, y1):
            continue
        center = Point3(x, y, dims.height / 2)
        if accept is not None and not accept(center):
            continue
        return center
    return None


def _check_room_fits_catalog(config: SceneConfig, catalog: Catalog) -> None:
    grow = 1.0 + config.jitter
    for object_class in catalog.classes:
        dims = object_class.nominal_dims
        if dims.width * grow > config.room_width or dims.length * grow > config.room_length:
            raise PlacementExhausted(
                f"Room {config.room_width} x {config.room_length} m cannot hold a "
                f"{object_class.name} ({dims.width} x {dims.length} m at +{config.jitter:.0%})"
            )


# -- relation arrangement ---------------------------------------------------------

@dataclass
class _Arrangement:
    objects: List[ObjectInstance]
    anchor_id: Optional[int]
    candidate_ids: List[int]
    target_id: int


def _margin_ok(relation: SpatialRelation, metrics: List[Tuple[int, float]], config: SceneConfig,
               target_id: Optional[int]) -> bool:
    values = sorted(value for _, value in metrics)
    if relation in (SpatialRelation.CLOSEST, SpatialRelation.FARTHEST,
                    SpatialRelation.LARGEST, SpatialRelation.SMALLEST) and len(values) < 2:
        return True
    if relation is SpatialRelation.CLOSEST:
        return values[1] - values[0] >= config.margin
    if relation is SpatialRelation.FARTHEST:
        return values[-1] - values[-2] >= config.margin
    if relation is SpatialRelation.LARGEST:
        return values[-1] >= values[-2] * (1.0 + config.margin_ratio)
    if relation is SpatialRelation.SMALLEST:
        return values[1] >= values[0] * (1.0 + config.margin_ratio)

    target_value = dict(metrics)[target_id]
    others = [value for object_id, value in metrics if object_id != target_id]
    if relation is SpatialRelation.NEXT_TO:
        return target_value <= config.next_to_radius and all(d >= 2 * config.next_to_radius for d in others)
    side = 1.0 if relation is SpatialRelation.LEFT else -1.0
    return side * target_value >= config.margin and all(side * s <= -config.margin for s in others)


def _draw_role_classes(relation: SpatialRelation, catalog: Catalog,
                       rng: np.random.Generator) -> Tuple[Optional[ObjectClass], ObjectClass]:
    if relation.needs_anchor:
        first, second = rng.choice(len(catalog), size=2, replace=False)
        return catalog.classes[int(first)], catalog.classes[int(second)]
    return None, catalog.classes[int(rng.integers(len(catalog)))]


def _arrange(relation: SpatialRelation, config: SceneConfig, catalog: Catalog, rng: np.random.Generator,
             viewer: Viewer) -> Optional[_Arrangement]:
    anchor_class, candidate_class = _draw_role_classes(relation, catalog, rng)
    low, high = config.candidate_count_range
    count = int(rng.integers(low, high + 1))
    anchor_dims = _quantized_dims(catalog, anchor_class.name, config.jitter, rng) if anchor_class else None
    candidate_dims = [_quantized_dims(catalog, candidate_class.name, config.jitter, rng) for _ in range(count)]

    if not relation.needs_anchor:
        volumes = [(i, d.volume) for i, d in enumerate(candidate_dims)]
        if not _margin_ok(relation, volumes, config, None):
            return None

    if relation is SpatialRelation.NEXT_TO:
        reach = min((anchor_dims.width + candidate_dims[0].width) / 2,
                    (anchor_dims.length + candidate_dims[0].length) / 2)
        if reach >= config.next_to_radius:
            return None

    index = FootprintIndex()
    objects: List[ObjectInstance] = []
    in_room = _uniform_in_room(config)

    anchor: Optional[ObjectInstance] = None
    if anchor_class is not None:
        away_from_viewer = None
        if relation in (SpatialRelation.LEFT, SpatialRelation.RIGHT):
            def away_from_viewer(c: Point3) -> bool:
                return math.hypot(c.x - viewer.position.x, c.y - viewer.position.y) >= 2 * config.margin
        center = _sample_position(rng, anchor_dims, config, index, in_room, away_from_viewer)
        if center is None:
            return None
        anchor = ObjectInstance(0, anchor_class.name, center, anchor_dims)
        objects.append(anchor)
        index.add(anchor.aabb)

    for k, dims in enumerate(candidate_dims):
        is_target = k == 0
        propose, accept = in_room, None
        if relation is SpatialRelation.NEXT_TO:
            if is_target:
                propose = _uniform_in_disk(anchor.center, config.next_to_radius)
                accept = lambda c: math.hypot(c.x - anchor.center.x, c.y - anchor.center.y) <= config.next_to_radius
            else:
                accept = lambda c: math.hypot(c.x - anchor.center.x, c.y - anchor.center.y) >= 2 * config.next_to_radius
        elif relation in (SpatialRelation.LEFT, SpatialRelation.RIGHT):
            side = 1.0 if relation is SpatialRelation.LEFT else -1.0
            wanted = side if is_target else -side
            accept = lambda c, wanted=wanted: lateral_offset(viewer, anchor.center, c) * wanted >= config.margin

        center = _sample_position(rng, dims, config, index, propose, accept)
        if center is None:
            return None
        candidate = ObjectInstance(len(objects), candidate_class.name, center, dims)
        objects.append(candidate)
        index.add(candidate.aabb)

    anchor_id = anchor.id if anchor else None
    candidate_ids = [obj.id for obj in objects if obj is not anchor]
    designated = candidate_ids[0] if relation in (
        SpatialRelation.NEXT_TO, SpatialRelation.LEFT, SpatialRelation.RIGHT) else None

    try:
        metrics = candidate_metrics(objects, relation, anchor_id, candidate_ids, viewer)
        if not _margin_ok(relation, metrics, config, designated):
            return None
        target_id = resolve_target(objects, relation, anchor_id, candidate_ids, viewer, config.next_to_radius)
    except AmbiguousRelation:
        return None
    if designated is not None and target_id != designated:
        return None
    return _Arrangement(objects, anchor_id, candidate_ids, target_id)


# -- public operations --------------------------------------------------------

@lru_cache(maxsize=1)
def _default_templates() -> TemplateBank:
    return load_template_bank()


def derive_scene_seed(seed: int, relation: SpatialRelation, scene_index: int) -> int:
    """Independent 64-bit seed for the scene_index-th scene of a relation"""
    relation_index = list(SpatialRelation).index(relation)
    return int(np.random.SeedSequence([seed, relation_index, scene_index]).generate_state(1, np.uint64)[0])


def scene_id_for(relation: SpatialRelation, scene_index: int) -> str:
    return f"{relation.value}_{scene_index:05d}"


def generate_scenes(relation: SpatialRelation, count: int, config: SceneConfig, catalog: Catalog,
                    templates: Optional[TemplateBank] = None) -> List[SceneLayout]:
    """``count`` scenes for one relation; scene k is seeded by (config.seed, relation, k)"""
    return [
        generate_scene(relation, replace(config, seed=derive_scene_seed(config.seed, relation, k)), catalog,
                       templates, scene_id=scene_id_for(relation, k))
        for k in range(count)
    ]


def generate_scene(relation: SpatialRelation, config: SceneConfig, catalog: Catalog,
                   templates: Optional[TemplateBank] = None, scene_id: Optional[str] = None) -> SceneLayout:
    """Generate one layout whose target is the unique, margin-separated answer to its query"""
    config.validate()
    _check_room_fits_catalog(config, catalog)
    templates = templates or _default_templates()
    rng = np.random.default_rng(config.seed)
    viewer = scene_center_viewer(config.room_width, config.room_length)

    arrangement = None
    for _ in range(config.max_placement_retries):
        arrangement = _arrange(relation, config, catalog, rng, viewer)
        if arrangement is not None:
            break
    if arrangement is None:
        raise PlacementExhausted(
            f"No valid '{relation.value}' arrangement after {config.max_placement_retries} attempts"
        )

    template_index = int(rng.integers(len(templates.for_relation(relation))))
    template = templates.get(relation, template_index)
    target_class = arrangement.objects[arrangement.candidate_ids[0]].class_name
    anchor_class = arrangement.objects[arrangement.anchor_id].class_name if arrangement.anchor_id is not None else None

    layout = SceneLayout(
        scene_id=scene_id or f"{relation.value}_seed{config.seed}",
        config=config,
        objects=tuple(arrangement.objects),
        relation=relation,
        anchor_id=arrangement.anchor_id,
        candidate_ids=tuple(arrangement.candidate_ids),
        target_id=arrangement.target_id,
        query=render_query(template, target_class, anchor_class),
        template_index=template_index,
    )
    layout = enrich_scene(layout, config, catalog, rng)
    return _relabel(layout, rng)


def enrich_scene(layout: SceneLayout, config: SceneConfig, catalog: Catalog,
                 rng: np.random.Generator) -> SceneLayout:
    """Add off-class filler objects until the scene holds at least min_objects"""
    needed = config.min_objects - len(layout.objects)
    if needed <= 0:
        return layout

    reserved = {layout.candidate_class}
    if layout.anchor_id is not None:
        reserved.add(layout.object(layout.anchor_id).class_name)
    pool = [c for c in catalog.classes if c.name not in reserved]
    if not pool:
        raise PlacementExhausted("Catalog has no classes left for enrichment")

    drawn = [pool[int(i)] for i in rng.integers(len(pool), size=needed)]
    sized = [(object_class, _quantized_dims(catalog, object_class.name, config.jitter, rng)) for object_class in drawn]
    # large pieces first while the floor is still open
    sized.sort(key=lambda item: item[1].width * item[1].length, reverse=True)

    objects = list(layout.objects)
    index = FootprintIndex([obj.aabb for obj in objects])
    in_room = _uniform_in_room(config)
    next_id = max(obj.id for obj in objects) + 1

    for object_class, dims in sized:
        while True:
            center = _sample_position(rng, dims, config, index, in_room)
            if center is not None:
                break
            smaller = [c for c in pool if c.nominal_dims.footprint < object_class.nominal_dims.footprint]
            if not smaller:
                raise PlacementExhausted(
                    f"Could not place filler object {len(objects) + 1} of {config.min_objects} "
                    f"after {config.max_placement_retries} attempts"
                )
            logger.debug("No room for %s, trying a smaller class", object_class.name)
            object_class = smaller[int(rng.integers(len(smaller)))]
            dims = _quantized_dims(catalog, object_class.name, config.jitter, rng)

        filler = ObjectInstance(next_id, object_class.name, center, dims)
        objects.append(filler)
        index.add(filler.aabb)
        next_id += 1

    return replace(layout, objects=tuple(objects))


def _relabel(layout: SceneLayout, rng: np.random.Generator) -> SceneLayout:
    """Give objects a random id permutation so ids carry no placement order"""
    permutation = rng.permutation(len(layout.objects))
    mapping = {obj.id: int(permutation[k]) for k, obj in enumerate(layout.objects)}
    objects = sorted((replace(obj, id=mapping[obj.id]) for obj in layout.objects), key=lambda o: o.id)
    return replace(
        layout,
        objects=tuple(objects),
        anchor_id=mapping[layout.anchor_id] if layout.anchor_id is not None else None,
        candidate_ids=tuple(mapping[i] for i in layout.candidate_ids),
        target_id=mapping[layout.target_id],
    )


def validate_scene(layout: SceneLayout) -> List[Violation]:
    """Report every violated layout invariant; never raises"""
    violations: List[Violation] = []
    config = layout.config
    ids = [obj.id for obj in layout.objects]
    by_id = {}
    for obj in layout.objects:
        if obj.id in by_id:
            violations.append(Violation("DuplicateId", (obj.id,)))
        by_id[obj.id] = obj

    referenced = list(layout.candidate_ids) + [layout.target_id]
    if layout.anchor_id is not None:
        referenced.append(layout.anchor_id)
    unknown = sorted({i for i in referenced if i not in by_id})
    if unknown:
        violations.append(Violation("UnknownId", tuple(unknown)))

    if layout.target_id not in layout.candidate_ids:
        violations.append(Violation("TargetNotCandidate", (layout.target_id,)))

    candidate_classes = {by_id[i].class_name for i in layout.candidate_ids if i in by_id}
    if len(candidate_classes) > 1:
        violations.append(Violation("MixedCandidateClass", tuple(layout.candidate_ids), ", ".join(sorted(candidate_classes))))
    elif len(candidate_classes) == 1:
        (candidate_class,) = candidate_classes
        unlisted = [o.id for o in layout.objects if o.class_name == candidate_class and o.id not in layout.candidate_ids]
        if unlisted:
            violations.append(Violation("UnlistedCandidate", tuple(unlisted), candidate_class))

    if layout.relation.needs_anchor and layout.anchor_id is None:
        violations.append(Violation("AnchorMismatch", (), f"'{layout.relation.value}' needs an anchor"))
    elif not layout.relation.needs_anchor and layout.anchor_id is not None:
        violations.append(Violation("AnchorMismatch", (layout.anchor_id,), f"'{layout.relation.value}' takes no anchor"))
    elif layout.anchor_id is not None and layout.anchor_id in by_id:
        if layout.anchor_id in layout.candidate_ids:
            violations.append(Violation("AnchorMismatch", (layout.anchor_id,), "anchor is also a candidate"))
        anchor_class = by_id[layout.anchor_id].class_name
        twins = [o.id for o in layout.objects if o.class_name == anchor_class and o.id != layout.anchor_id]
        if twins:
            violations.append(Violation("AnchorMismatch", tuple(twins), f"more than one {anchor_class}"))

    if len(layout.objects) < config.min_objects:
        violations.append(Violation("TooFewObjects", (), f"{len(layout.objects)} < {config.min_objects}"))

    for obj in layout.objects:
        if not _inside_room(obj.aabb, config):
            violations.append(Violation("OutOfBounds", (obj.id,)))
        if abs(obj.center.z - obj.dims.height / 2) > FLOOR_TOLERANCE:
            violations.append(Violation("NotOnFloor", (obj.id,)))

    if layout.objects:
        rects = np.array([(o.aabb.min_corner.x, o.aabb.min_corner.y, o.aabb.max_corner.x, o.aabb.max_corner.y)
                          for o in layout.objects])
        hits = (
            (rects[:, None, 0] < rects[None, :, 2]) & (rects[None, :, 0] < rects[:, None, 2])
            & (rects[:, None, 1] < rects[None, :, 3]) & (rects[None, :, 1] < rects[:, None, 3])
        )
        for a, b in np.argwhere(np.triu(hits, k=1)):
            violations.append(Violation("FootprintOverlap", (ids[a], ids[b])))

    if not unknown and layout.candidate_ids:
        try:
            resolved = resolve_target(layout.objects, layout.relation, layout.anchor_id, layout.candidate_ids,
                                      layout.viewer, config.next_to_radius)
            if resolved != layout.target_id:
                violations.append(Violation("RelationMismatch", (layout.target_id, resolved),
                                            f"oracle picks {resolved}"))
        except RelationError as e:
            violations.append(Violation("RelationMismatch", (layout.target_id,), str(e)))

    return violations
