import numpy as np
import pytest
from langchain_core.exceptions import OutputParserException

from errors import GroundingError
from parser.reasoning_output_parser import (
    MissingStage,
    NoAnswerFound,
    ReasoningFormatError,
    ReasoningOutputParser,
    parse_reasoning_response,
)

WELL_FORMED = """[RELATED OBJECTS]
ID 3: Chair, center=(1.00, 1.00, 0.50), size=(0.60, 0.60, 1.00)
ID 12: Chair, center=(2.00, 4.00, 0.50), size=(0.60, 0.60, 1.00)
ID 7: Table, center=(2.00, 3.50, 0.38), size=(1.50, 1.00, 0.75)
[SITUATION]
No situation is given, so I stand in the middle of the scene.
[REASONING]
Distance from ID 3 to the Table: sqrt(1.00 + 6.25) = 2.69.
Distance from ID 12 to the Table: sqrt(0.00 + 0.25) = 0.50.
[CONCLUSION]
The Chair closest to the Table is ID 12.
Final Answer: 12"""


def test_well_formed_response():
    response = parse_reasoning_response(WELL_FORMED)
    assert response.predicted_id == 12
    assert response.related_objects.startswith("ID 3: Chair")
    assert "middle of the scene" in response.situation
    assert response.reasoning.endswith("= 0.50.")
    assert response.conclusion.endswith("Final Answer: 12")


def test_missing_conclusion():
    text = WELL_FORMED.split("[CONCLUSION]")[0]
    with pytest.raises(MissingStage) as info:
        parse_reasoning_response(text)
    assert info.value.stage == "Conclusion"


def test_missing_situation():
    text = WELL_FORMED.replace("[SITUATION]", "")
    with pytest.raises(MissingStage) as info:
        parse_reasoning_response(text)
    assert info.value.stage == "Situation"


def test_answer_in_words():
    text = WELL_FORMED.replace("Final Answer: 12", "the answer is object twelve")
    with pytest.raises(NoAnswerFound):
        parse_reasoning_response(text)


def test_answer_outside_conclusion_is_not_used():
    text = WELL_FORMED.replace("Final Answer: 12", "").replace("[REASONING]", "[REASONING]\nFinal Answer: 3")
    with pytest.raises(NoAnswerFound):
        parse_reasoning_response(text)


def test_first_answer_wins():
    assert parse_reasoning_response(WELL_FORMED + "\nFinal Answer: 5").predicted_id == 12


def test_tags_are_case_and_space_insensitive():
    text = (WELL_FORMED.replace("[RELATED OBJECTS]", "[related  objects]")
            .replace("[CONCLUSION]", "[ Conclusion ]"))
    assert parse_reasoning_response(text).predicted_id == 12


def test_bytes_input():
    assert parse_reasoning_response(WELL_FORMED.encode("utf-8")).predicted_id == 12


def test_format_errors_are_langchain_parser_errors():
    with pytest.raises(OutputParserException):
        parse_reasoning_response("plain prose")
    assert issubclass(ReasoningFormatError, GroundingError)


def test_never_crashes_on_random_bytes():
    rng = np.random.default_rng(0)
    for _ in range(500):
        blob = rng.integers(0, 256, size=int(rng.integers(0, 400)), dtype=np.uint8).tobytes()
        try:
            parse_reasoning_response(blob)
        except ReasoningFormatError:
            pass


def test_never_crashes_on_shuffled_fragments():
    rng = np.random.default_rng(1)
    fragments = WELL_FORMED.split("\n")
    for _ in range(300):
        text = "\n".join(rng.permutation(fragments))
        try:
            response = parse_reasoning_response(text)
        except ReasoningFormatError:
            continue
        assert response.predicted_id == 12


def test_format_instructions_name_every_tag():
    instructions = ReasoningOutputParser().get_format_instructions()
    for tag in ("[RELATED OBJECTS]", "[SITUATION]", "[REASONING]", "[CONCLUSION]"):
        assert instructions.count(tag) == 1
    assert "Final Answer: <id>" in instructions
