import math
import time
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from config import SceneConfig
from errors import InvalidSceneConfig, PlacementExhausted
from scene.generator import (
    FootprintIndex,
    SceneLayout,
    Violation,
    derive_scene_seed,
    enrich_scene,
    generate_scene,
    generate_scenes,
    validate_scene,
)
from scene.geometry import AABB, Point3
from scene.objects import SpatialRelation
from scene.relations import lateral_offset
from scene.serialization import layout_to_record
from tests.helpers import make_object


def brute_force_target(layout):
    """Re-solve the relation from raw coordinates, without the package's oracle"""
    by_id = {o.id: o for o in layout.objects}
    candidates = [by_id[i] for i in layout.candidate_ids]
    relation = layout.relation
    if relation is SpatialRelation.LARGEST:
        return max(candidates, key=lambda c: c.dims.width * c.dims.length * c.dims.height).id
    if relation is SpatialRelation.SMALLEST:
        return min(candidates, key=lambda c: c.dims.width * c.dims.length * c.dims.height).id

    a = by_id[layout.anchor_id].center
    vx, vy = layout.config.room_width / 2, layout.config.room_length / 2

    def dist(c):
        return math.sqrt((c.center.x - a.x) ** 2 + (c.center.y - a.y) ** 2)

    def cross(c):
        return (a.x - vx) * (c.center.y - a.y) - (a.y - vy) * (c.center.x - a.x)

    if relation is SpatialRelation.CLOSEST:
        return min(candidates, key=dist).id
    if relation is SpatialRelation.FARTHEST:
        return max(candidates, key=dist).id
    if relation is SpatialRelation.NEXT_TO:
        matches = [c.id for c in candidates if dist(c) <= layout.config.next_to_radius]
    elif relation is SpatialRelation.LEFT:
        matches = [c.id for c in candidates if cross(c) > 0]
    else:
        matches = [c.id for c in candidates if cross(c) < 0]
    assert len(matches) == 1
    return matches[0]


def check_margin(layout):
    config = layout.config
    by_id = {o.id: o for o in layout.objects}
    target = by_id[layout.target_id]
    others = [by_id[i] for i in layout.candidate_ids if i != layout.target_id]
    if not others:
        return
    relation = layout.relation
    if relation in (SpatialRelation.LARGEST, SpatialRelation.SMALLEST):
        volumes = sorted(o.volume for o in others)
        if relation is SpatialRelation.LARGEST:
            assert target.volume >= volumes[-1] * (1 + config.margin_ratio) - 1e-12
        else:
            assert volumes[0] >= target.volume * (1 + config.margin_ratio) - 1e-12
        return
    a = by_id[layout.anchor_id].center

    def dist(o):
        return math.hypot(o.center.x - a.x, o.center.y - a.y)

    if relation is SpatialRelation.CLOSEST:
        assert min(dist(o) for o in others) - dist(target) >= config.margin - 1e-9
    elif relation is SpatialRelation.FARTHEST:
        assert dist(target) - max(dist(o) for o in others) >= config.margin - 1e-9
    elif relation is SpatialRelation.NEXT_TO:
        assert dist(target) <= config.next_to_radius
        assert all(dist(o) >= 2 * config.next_to_radius - 1e-9 for o in others)
    else:
        # positive offset is left of the viewer->anchor line
        side = 1.0 if relation is SpatialRelation.LEFT else -1.0
        assert side * lateral_offset(layout.viewer, a, target.center) >= config.margin - 1e-9
        assert all(side * lateral_offset(layout.viewer, a, o.center) <= -config.margin + 1e-9 for o in others)


def check_scene(layout):
    assert validate_scene(layout) == []
    assert len(layout.objects) >= layout.config.min_objects
    assert brute_force_target(layout) == layout.target_id
    assert layout.target_id in layout.candidate_ids
    ids = [o.id for o in layout.objects]
    assert ids == sorted(ids) == list(range(len(ids)))
    check_margin(layout)


@pytest.mark.parametrize("relation", list(SpatialRelation))
def test_generated_scenes_hold_every_invariant(scenes_per_relation, relation):
    for layout in scenes_per_relation[relation]:
        assert layout.relation is relation
        assert len(layout.objects) >= 51
        check_scene(layout)


@pytest.mark.parametrize("relation", list(SpatialRelation))
def test_anchor_presence_follows_relation(scenes_per_relation, relation):
    for layout in scenes_per_relation[relation]:
        assert (layout.anchor_id is not None) == relation.needs_anchor
        assert 2 <= len(layout.candidate_ids) <= 5


def test_closest_seed_42(catalog, templates):
    layout = generate_scene(SpatialRelation.CLOSEST, SceneConfig(seed=42), catalog, templates)
    check_scene(layout)
    assert layout.scene_id == "closest_seed42"


def test_generation_is_deterministic(catalog, templates):
    config = SceneConfig(seed=7)
    for relation in SpatialRelation:
        first = generate_scene(relation, config, catalog, templates)
        second = generate_scene(relation, config, catalog, templates)
        assert layout_to_record(first) == layout_to_record(second)


def test_different_seeds_differ(catalog, templates):
    a = generate_scene(SpatialRelation.FARTHEST, SceneConfig(seed=1), catalog, templates)
    b = generate_scene(SpatialRelation.FARTHEST, SceneConfig(seed=2), catalog, templates)
    assert layout_to_record(a)["objects"] != layout_to_record(b)["objects"]


def test_query_mentions_the_classes(scenes_per_relation):
    for layouts in scenes_per_relation.values():
        for layout in layouts:
            assert layout.candidate_class in layout.query
            if layout.anchor_id is not None:
                assert layout.object(layout.anchor_id).class_name in layout.query


def test_tiny_room_is_exhausted(catalog, templates):
    config = SceneConfig(room_width=0.5, room_length=0.5, min_objects=51)
    with pytest.raises(PlacementExhausted):
        generate_scene(SpatialRelation.CLOSEST, config, catalog, templates)


@pytest.mark.parametrize("changes", [
    {"min_objects": 6},
    {"jitter": 1.0},
    {"margin": 0.0},
    {"room_width": -1.0},
    {"candidate_count_range": (3, 2)},
    {"max_placement_retries": 0},
])
def test_invalid_config(catalog, templates, changes):
    with pytest.raises(InvalidSceneConfig):
        generate_scene(SpatialRelation.CLOSEST, replace(SceneConfig(), **changes), catalog, templates)


class TestEnrichment:
    @pytest.fixture
    def sparse_layout(self, catalog, templates):
        return generate_scene(SpatialRelation.CLOSEST, SceneConfig(min_objects=7, seed=11), catalog, templates)

    def test_fills_to_min_objects_and_keeps_originals(self, sparse_layout, catalog):
        config = replace(sparse_layout.config, min_objects=51)
        enriched = enrich_scene(sparse_layout, config, catalog, np.random.default_rng(0))
        assert len(enriched.objects) >= 51
        assert enriched.objects[:len(sparse_layout.objects)] == sparse_layout.objects
        assert enriched.target_id == sparse_layout.target_id
        assert enriched.anchor_id == sparse_layout.anchor_id
        assert enriched.candidate_ids == sparse_layout.candidate_ids
        assert validate_scene(replace(enriched, config=config)) == []

    def test_never_adds_candidate_or_anchor_class(self, sparse_layout, catalog):
        config = replace(sparse_layout.config, min_objects=51)
        enriched = enrich_scene(sparse_layout, config, catalog, np.random.default_rng(1))
        before = Counter(o.class_name for o in sparse_layout.objects)
        after = Counter(o.class_name for o in enriched.objects)
        assert after[sparse_layout.candidate_class] == before[sparse_layout.candidate_class]
        anchor_class = sparse_layout.object(sparse_layout.anchor_id).class_name
        assert after[anchor_class] == 1

    def test_unchanged_at_threshold(self, sparse_layout, catalog):
        config = replace(sparse_layout.config, min_objects=len(sparse_layout.objects))
        assert enrich_scene(sparse_layout, config, catalog, np.random.default_rng(0)) is sparse_layout


class TestValidateScene:
    @pytest.fixture
    def config(self):
        return SceneConfig(min_objects=3)

    def layout(self, config, objects, target_id=1, candidate_ids=(1, 2)):
        return SceneLayout(
            scene_id="constructed",
            config=config,
            objects=tuple(objects),
            relation=SpatialRelation.CLOSEST,
            anchor_id=0,
            candidate_ids=tuple(candidate_ids),
            target_id=target_id,
            query="The Chair that is closest to the Table.",
            template_index=0,
        )

    def test_valid_constructed_scene(self, config):
        objects = [make_object(0, "Table", 1, 1, (1.5, 1.0, 0.75)), make_object(1, "Chair", 2.5, 1),
                   make_object(2, "Chair", 5, 5)]
        assert validate_scene(self.layout(config, objects)) == []

    def test_co_located_chairs(self, config):
        objects = [make_object(0, "Table", 4, 4, (1.5, 1.0, 0.75)), make_object(1, "Chair", 1, 1),
                   make_object(2, "Chair", 1, 1)]
        overlaps = [v for v in validate_scene(self.layout(config, objects)) if v.kind == "FootprintOverlap"]
        assert overlaps == [Violation("FootprintOverlap", (1, 2))]

    def test_target_not_candidate(self, config):
        objects = [make_object(0, "Table", 1, 1, (1.5, 1.0, 0.75)), make_object(1, "Chair", 2.5, 1),
                   make_object(2, "Chair", 5, 5)]
        kinds = [v.kind for v in validate_scene(self.layout(config, objects, target_id=0))]
        assert "TargetNotCandidate" in kinds

    def test_out_of_bounds_and_off_floor(self, config):
        floating = make_object(2, "Chair", 5, 5)
        floating = replace(floating, center=replace(floating.center, z=2.0))
        objects = [make_object(0, "Table", 1, 1, (1.5, 1.0, 0.75)), make_object(1, "Chair", 5.9, 1), floating]
        kinds = {v.kind for v in validate_scene(self.layout(config, objects))}
        assert {"OutOfBounds", "NotOnFloor"} <= kinds

    def test_too_few_objects_and_relation_mismatch(self):
        objects = [make_object(0, "Table", 1, 1, (1.5, 1.0, 0.75)), make_object(1, "Chair", 2.5, 1),
                   make_object(2, "Chair", 5, 5)]
        layout = self.layout(SceneConfig(), objects, target_id=2)
        kinds = {v.kind for v in validate_scene(layout)}
        assert {"TooFewObjects", "RelationMismatch"} <= kinds

    def test_mixed_candidate_class(self, config):
        objects = [make_object(0, "Table", 1, 1, (1.5, 1.0, 0.75)), make_object(1, "Chair", 2.5, 1),
                   make_object(2, "Sofa", 5, 5)]
        kinds = {v.kind for v in validate_scene(self.layout(config, objects))}
        assert "MixedCandidateClass" in kinds


def test_scene_seeds_are_distinct_and_stable():
    seeds = {derive_scene_seed(0, relation, k) for relation in SpatialRelation for k in range(100)}
    assert len(seeds) == 700
    assert derive_scene_seed(5, SpatialRelation.LEFT, 3) == derive_scene_seed(5, SpatialRelation.LEFT, 3)


def test_generate_scenes_ids(catalog, templates, small_config):
    layouts = generate_scenes(SpatialRelation.RIGHT, 3, small_config, catalog, templates)
    assert [layout.scene_id for layout in layouts] == ["right_00000", "right_00001", "right_00002"]


@pytest.mark.slow
@pytest.mark.parametrize("relation", list(SpatialRelation))
def test_thousand_scenes_per_relation(catalog, templates, relation):
    for seed in range(1000):
        check_scene(generate_scene(relation, SceneConfig(seed=seed), catalog, templates))


@pytest.mark.parametrize("relation", [SpatialRelation.LEFT, SpatialRelation.RIGHT])
def test_lateral_margin_separates_target_from_the_rest(catalog, templates, relation):
    config = SceneConfig(min_objects=7, seed=21)
    for layout in generate_scenes(relation, 40, config, catalog, templates):
        anchor = layout.object(layout.anchor_id).center
        side = 1.0 if relation is SpatialRelation.LEFT else -1.0
        offsets = {i: side * lateral_offset(layout.viewer, anchor, layout.object(i).center)
                   for i in layout.candidate_ids}
        assert offsets[layout.target_id] >= config.margin - 1e-9
        assert sum(1 for value in offsets.values() if value > 0) == 1
        assert all(value <= -config.margin + 1e-9 for i, value in offsets.items() if i != layout.target_id)


class TestFootprintIndex:
    def test_empty_index_never_overlaps(self):
        assert not FootprintIndex().overlaps_rect(0, 0, 1, 1)

    def test_edge_contact_is_not_overlap(self):
        index = FootprintIndex([AABB(Point3(0, 0, 0), Point3(1, 1, 1))])
        assert not index.overlaps_rect(1, 0, 2, 1)
        assert index.overlaps_rect(0.99, 0, 2, 1)

    def test_rect_and_box_queries_agree(self):
        rng = np.random.default_rng(3)
        index = FootprintIndex()
        for _ in range(100):
            x, y = rng.uniform(0, 6, size=2)
            box = AABB(Point3(x, y, 0), Point3(x + 0.5, y + 0.4, 1))
            assert index.overlaps(box) == index.overlaps_rect(x, y, x + 0.5, y + 0.4)
            index.add(box)

    def test_grows_past_initial_capacity(self):
        index = FootprintIndex()
        for k in range(200):
            index.add_rect(k, 0, k + 1, 1)
        assert index.overlaps_rect(150.5, 0.5, 150.6, 0.6)
        assert not index.overlaps_rect(0, 2, 200, 3)


@pytest.mark.slow
def test_seven_thousand_scenes_with_recheck_within_a_minute(catalog, templates):
    started = time.perf_counter()
    for relation in SpatialRelation:
        for seed in range(1000):
            layout = generate_scene(relation, SceneConfig(seed=seed), catalog, templates)
            assert brute_force_target(layout) == layout.target_id
    assert time.perf_counter() - started < 60.0
