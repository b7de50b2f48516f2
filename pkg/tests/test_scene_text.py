import pytest

from errors import DuplicateId, EmptyScene, MalformedLine
from parser.scene_text_parser import SUB_RESOLUTION_SIZE, format_number, parse_scene_text, serialize_scene
from tests.helpers import make_object


def test_single_chair_line():
    text = serialize_scene([make_object(0, "Chair", 1, 1)])
    assert text.text == "ID 0: Chair, center=(1.00, 1.00, 0.50), size=(0.60, 0.60, 1.00)"


def test_empty_scene():
    with pytest.raises(EmptyScene):
        serialize_scene([])


def test_duplicate_ids():
    with pytest.raises(DuplicateId):
        serialize_scene([make_object(3, "Chair", 1, 1), make_object(3, "Table", 4, 4)])


def test_lines_sorted_by_id():
    text = serialize_scene([make_object(5, "Chair", 1, 1), make_object(2, "Table", 4, 4)])
    assert [line.split(":")[0] for line in text.lines] == ["ID 2", "ID 5"]


@pytest.mark.parametrize("value, expected", [
    (2.675, "2.68"),
    (0.125, "0.13"),
    (-0.125, "-0.13"),
    (-0.001, "0.00"),
    (3.0, "3.00"),
    (1.004999, "1.00"),
])
def test_rounding_half_away_from_zero(value, expected):
    assert format_number(value) == expected


def test_parse_empty_text():
    assert parse_scene_text("") == []


def test_malformed_line_number():
    with pytest.raises(MalformedLine) as info:
        parse_scene_text("ID x: Chair, center=(1.00, 1.00, 0.50), size=(0.60, 0.60, 1.00)")
    assert info.value.line_number == 1


def test_malformed_line_number_counts_blank_lines():
    text = "ID 0: Chair, center=(1.00, 1.00, 0.50), size=(0.60, 0.60, 1.00)\n\nID 1: Chair, center=(1, 1, 0.5)"
    with pytest.raises(MalformedLine) as info:
        parse_scene_text(text)
    assert info.value.line_number == 3


def test_negative_size_is_malformed():
    with pytest.raises(MalformedLine):
        parse_scene_text("ID 0: Chair, center=(1.00, 1.00, 0.50), size=(-0.60, 0.60, 1.00)")


def test_parse_rejects_duplicate_ids():
    line = "ID 0: Chair, center=(1.00, 1.00, 0.50), size=(0.60, 0.60, 1.00)"
    with pytest.raises(DuplicateId):
        parse_scene_text(f"{line}\n{line}")


def test_class_names_with_spaces():
    obj = make_object(4, "Trash Can", 2, 3, (0.4, 0.4, 0.6))
    (parsed,) = parse_scene_text(serialize_scene([obj]).text)
    assert parsed.class_name == "Trash Can"


def test_round_trip_on_generated_scenes(scenes_per_relation):
    for layouts in scenes_per_relation.values():
        for layout in layouts:
            parsed = parse_scene_text(serialize_scene(layout.objects).text)
            assert [(o.id, o.class_name) for o in parsed] == [(o.id, o.class_name) for o in layout.objects]
            for original, restored in zip(layout.objects, parsed):
                for a, b in zip(original.center.as_tuple(), restored.center.as_tuple()):
                    assert abs(a - b) <= 0.005 + 1e-9
                for a, b in zip(original.dims.as_tuple(), restored.dims.as_tuple()):
                    assert abs(a - b) <= 0.005 + 1e-9


def test_serialization_is_a_fixpoint(scenes_per_relation):
    for layouts in scenes_per_relation.values():
        for layout in layouts:
            text = serialize_scene(layout.objects)
            assert serialize_scene(parse_scene_text(text.text)) == text


def test_sub_resolution_size_survives():
    coin = make_object(0, "Coin", 1, 1, (0.03, 0.003, 0.03))
    text = serialize_scene([coin])
    assert "size=(0.03, 0.00, 0.03)" in text.text
    (parsed,) = parse_scene_text(text.text)
    assert parsed.dims.length == SUB_RESOLUTION_SIZE
    assert serialize_scene([parsed]) == text
