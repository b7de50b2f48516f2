import pytest

from parser.reasoning_output_parser import ANSWER_FORMAT, STAGES
from parser.scene_text_parser import serialize_scene
from template.collection_prompt import build_collection_prompt
from template.inference_prompt import build_inference_prompt
from tests.helpers import make_object

QUERY = "The Chair that is closest to the Table."


@pytest.fixture
def scene():
    return serialize_scene([
        make_object(0, "Table", 3, 3, (1.5, 1.0, 0.75)),
        make_object(1, "Chair", 1, 1),
        make_object(2, "Chair", 4.5, 3),
    ])


@pytest.mark.parametrize("build", [build_collection_prompt, build_inference_prompt])
def test_every_stage_tag_once(build, scene):
    prompt = build(scene, QUERY)
    for _, tag in STAGES:
        assert prompt.count(tag) == 1


@pytest.mark.parametrize("build", [build_collection_prompt, build_inference_prompt])
def test_scene_query_and_answer_format(build, scene):
    prompt = build(scene, QUERY)
    assert scene.text in prompt
    assert QUERY in prompt
    assert ANSWER_FORMAT in prompt
    assert "Never invent objects" in prompt


@pytest.mark.parametrize("build", [build_collection_prompt, build_inference_prompt])
def test_builders_are_pure(build, scene):
    assert build(scene, QUERY) == build(scene, QUERY)


def test_inference_prompt_fills_scene_slot(scene):
    prompt = build_inference_prompt(scene, QUERY)
    assert "{scene}" not in prompt
    assert "{query}" not in prompt
    assert "ID 0: Table" in prompt and "ID 1: Chair" in prompt


def test_two_proposals():
    scene = serialize_scene([make_object(0, "Chair", 1, 1), make_object(1, "Desk", 3, 3, (1.4, 0.8, 0.75))])
    prompt = build_inference_prompt(scene, "The Chair that is next to the Desk.")
    assert "ID 0: Chair" in prompt
    assert "ID 1: Desk" in prompt


def test_queries_only_change_the_query_region(scene):
    other = "The Chair that is farthest from the Table."
    first = build_inference_prompt(scene, QUERY)
    second = build_inference_prompt(scene, other)
    assert first != second
    assert first.replace(QUERY, "<query>") == second.replace(other, "<query>")


def test_inference_prompt_has_no_exemplar(scene):
    assert "EXAMPLE CALCULATION" in build_collection_prompt(scene, QUERY)
    assert "EXAMPLE CALCULATION" not in build_inference_prompt(scene, QUERY)


def test_default_situation_is_scene_center(scene):
    prompt = build_inference_prompt(scene, QUERY)
    assert "middle of the scene" in prompt
