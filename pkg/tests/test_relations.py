import pytest

from errors import AmbiguousRelation, MissingAnchor, MissingAnchorClass, TemplateSchemaError, UnfilledPlaceholder
from scene.geometry import Point3
from scene.objects import SpatialRelation
from scene.relations import (
    QueryTemplate,
    TemplateBank,
    Viewer,
    lateral_offset,
    render_query,
    resolve_target,
    scene_center_viewer,
)
from tests.helpers import make_object

VIEWER = Viewer(Point3(3, 3, 0))


@pytest.fixture
def table_and_chairs():
    return [
        make_object(0, "Table", 0, 0, (1.5, 1.0, 0.75)),
        make_object(1, "Chair", 1, 1),
        make_object(2, "Chair", 3, 3),
        make_object(3, "Chair", 5, 1),
    ]


class TestResolveTarget:
    def test_closest(self, table_and_chairs):
        assert resolve_target(table_and_chairs, SpatialRelation.CLOSEST, 0, [1, 2, 3], VIEWER) == 1

    def test_farthest(self, table_and_chairs):
        assert resolve_target(table_and_chairs, SpatialRelation.FARTHEST, 0, [1, 2, 3], VIEWER) == 3

    def test_missing_anchor(self, table_and_chairs):
        with pytest.raises(MissingAnchor):
            resolve_target(table_and_chairs, SpatialRelation.CLOSEST, None, [1, 2, 3], VIEWER)

    def test_volume_tie_is_ambiguous(self):
        objects = [make_object(0, "Chair", 1, 1), make_object(1, "Chair", 3, 3)]
        with pytest.raises(AmbiguousRelation):
            resolve_target(objects, SpatialRelation.LARGEST, None, [0, 1], VIEWER)

    def test_largest_and_smallest(self):
        objects = [
            make_object(0, "Bed", 1, 1, (2.0, 2.2, 1.0)),
            make_object(1, "Bed", 4, 4, (1.8, 2.0, 0.9)),
        ]
        assert resolve_target(objects, SpatialRelation.LARGEST, None, [0, 1], VIEWER) == 0
        assert resolve_target(objects, SpatialRelation.SMALLEST, None, [0, 1], VIEWER) == 1

    def test_next_to(self):
        objects = [make_object(0, "Desk", 3, 3), make_object(1, "Lamp", 3.5, 3), make_object(2, "Lamp", 5.5, 3)]
        assert resolve_target(objects, SpatialRelation.NEXT_TO, 0, [1, 2], VIEWER) == 1

    def test_next_to_needs_exactly_one_in_radius(self):
        objects = [make_object(0, "Desk", 3, 3), make_object(1, "Lamp", 3.5, 3), make_object(2, "Lamp", 2.5, 3)]
        with pytest.raises(AmbiguousRelation):
            resolve_target(objects, SpatialRelation.NEXT_TO, 0, [1, 2], VIEWER)

    def test_left_and_right_from_scene_center(self):
        # viewer at the center faces the anchor straight north, so left is -x
        objects = [make_object(0, "Table", 3, 5), make_object(1, "Chair", 2, 5), make_object(2, "Chair", 4, 5)]
        assert resolve_target(objects, SpatialRelation.LEFT, 0, [1, 2], VIEWER) == 1
        assert resolve_target(objects, SpatialRelation.RIGHT, 0, [1, 2], VIEWER) == 2
        assert lateral_offset(VIEWER, objects[0].center, objects[1].center) == pytest.approx(1.0)

    def test_left_right_antisymmetry_under_mirroring(self):
        objects = [make_object(0, "Table", 3, 5), make_object(1, "Chair", 1.2, 4.1), make_object(2, "Chair", 4.4, 5.5)]
        # mirror about the viewer->anchor axis x = 3
        mirrored = [make_object(o.id, o.class_name, 6 - o.center.x, o.center.y) for o in objects]
        left = resolve_target(objects, SpatialRelation.LEFT, 0, [1, 2], VIEWER)
        assert resolve_target(mirrored, SpatialRelation.RIGHT, 0, [1, 2], VIEWER) == left

    def test_anchor_at_viewer_is_ambiguous(self):
        objects = [make_object(0, "Table", 3, 3), make_object(1, "Chair", 1, 1), make_object(2, "Chair", 5, 5)]
        with pytest.raises(AmbiguousRelation):
            resolve_target(objects, SpatialRelation.LEFT, 0, [1, 2], VIEWER)

    @pytest.mark.parametrize("k", [0.1, 2.5, 17.0])
    def test_closest_choice_is_scale_invariant(self, table_and_chairs, k):
        scaled = [make_object(o.id, o.class_name, o.center.x * k, o.center.y * k) for o in table_and_chairs]
        for relation in (SpatialRelation.CLOSEST, SpatialRelation.FARTHEST):
            assert (resolve_target(scaled, relation, 0, [1, 2, 3], VIEWER)
                    == resolve_target(table_and_chairs, relation, 0, [1, 2, 3], VIEWER))

    def test_scene_center_viewer(self):
        assert scene_center_viewer(6.0, 4.0).position == Point3(3.0, 2.0, 0.0)


class TestTemplates:
    def test_bank_has_seven_per_relation(self, templates):
        for relation in SpatialRelation:
            patterns = templates.for_relation(relation)
            assert [t.index for t in patterns] == list(range(7))
            for t in patterns:
                assert ("{anchor}" in t.pattern) == relation.needs_anchor
                assert "{target}" in t.pattern

    def test_closest_query_verbatim(self, templates):
        template = templates.get(SpatialRelation.CLOSEST, 0)
        assert render_query(template, "Chair", "Table") == "The Chair that is closest to the Table."

    def test_largest_query(self, templates):
        template = templates.get(SpatialRelation.LARGEST, 0)
        assert render_query(template, "Bed") == "The largest Bed in the room."

    def test_missing_anchor_class(self, templates):
        with pytest.raises(MissingAnchorClass):
            render_query(templates.get(SpatialRelation.CLOSEST, 0), "Chair")

    def test_unfilled_placeholder(self):
        template = QueryTemplate(SpatialRelation.CLOSEST, 0, "The {target} near the {anchor} by the {wall}.")
        with pytest.raises(UnfilledPlaceholder):
            render_query(template, "Chair", "Table")

    def test_bank_rejects_anchor_in_volume_template(self, templates):
        rows = [t for t in (templates.get(r, i) for r in SpatialRelation for i in range(7))]
        bad = QueryTemplate(SpatialRelation.LARGEST, 0, "The largest {target} near the {anchor}.")
        with pytest.raises(TemplateSchemaError):
            TemplateBank([bad] + [t for t in rows if not (t.relation is SpatialRelation.LARGEST and t.index == 0)])

    def test_bank_rejects_missing_index(self, templates):
        rows = [templates.get(r, i) for r in SpatialRelation for i in range(7)]
        with pytest.raises(TemplateSchemaError):
            TemplateBank(rows[1:])
