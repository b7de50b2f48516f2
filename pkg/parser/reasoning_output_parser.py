import re
from dataclasses import dataclass
from typing import Any, List, Optional, Tuple

from langchain.schema import BaseOutputParser
from langchain_core.exceptions import OutputParserException

from errors import GroundingError

# (stage name, tag) in the order the model is asked to write them
STAGES: Tuple[Tuple[str, str], ...] = (
    ("Related Objects", "[RELATED OBJECTS]"),
    ("Situation", "[SITUATION]"),
    ("Reasoning", "[REASONING]"),
    ("Conclusion", "[CONCLUSION]"),
)
ANSWER_FORMAT = "Final Answer: <id>"
ANSWER_PATTERN = re.compile(r"Final Answer: (\d+)\b")


class ReasoningFormatError(OutputParserException, GroundingError):
    """A response the verification filter drops as malformed"""


class MissingStage(ReasoningFormatError):
    def __init__(self, stage: str, llm_output: Optional[str] = None):
        self.stage = stage
        super().__init__(f"Missing stage: {stage}", llm_output=llm_output)


class NoAnswerFound(ReasoningFormatError):
    def __init__(self, llm_output: Optional[str] = None):
        super().__init__(f"No '{ANSWER_FORMAT}' line in the conclusion", llm_output=llm_output)


@dataclass(frozen=True)
class ReasoningResponse:
    related_objects: str
    situation: str
    reasoning: str
    conclusion: str
    predicted_id: Optional[int]


def _tag_pattern(tag: str) -> "re.Pattern[str]":
    words = r"\s+".join(re.escape(w) for w in tag.strip("[]").split())
    return re.compile(rf"\[\s*{words}\s*\]", re.IGNORECASE)


_TAG_PATTERNS = [(name, _tag_pattern(tag)) for name, tag in STAGES]


class ReasoningOutputParser(BaseOutputParser[ReasoningResponse]):
    """Splits a four-stage response into its stages and extracts the predicted object id"""

    def parse(self, text: Any) -> ReasoningResponse:
        if isinstance(text, bytes):
            text = text.decode("utf-8", errors="replace")
        elif not isinstance(text, str):
            text = str(text)

        positions: List[Tuple[int, int, str]] = []
        for name, pattern in _TAG_PATTERNS:
            match = pattern.search(text)
            if match is None:
                raise MissingStage(name, llm_output=text)
            positions.append((match.start(), match.end(), name))

        positions.sort()
        sections = {}
        for k, (_, end, name) in enumerate(positions):
            stop = positions[k + 1][0] if k + 1 < len(positions) else len(text)
            sections[name] = text[end:stop].strip()

        answer = ANSWER_PATTERN.search(sections["Conclusion"])
        if answer is None:
            raise NoAnswerFound(llm_output=text)

        return ReasoningResponse(
            related_objects=sections["Related Objects"],
            situation=sections["Situation"],
            reasoning=sections["Reasoning"],
            conclusion=sections["Conclusion"],
            predicted_id=int(answer.group(1)),
        )

    def get_format_instructions(self) -> str:
        lines = ["Structure your response in four stages, each introduced by its tag on its own line:"]
        descriptions = {
            "Related Objects": "list every object that may matter for the query with its ID, class, center and size.",
            "Situation": "state where the viewer stands. If the query describes a situation, estimate its "
                         "coordinates; otherwise assume the viewer is in the middle of the scene.",
            "Reasoning": "work through the spatial relation step by step, writing out every distance, "
                         "volume or side computation with the numbers from the scene.",
            "Conclusion": f"end with exactly one line of the form '{ANSWER_FORMAT}' where <id> is the integer ID "
                          "of the target object.",
        }
        for name, tag in STAGES:
            lines.append(f"{tag} {descriptions[name]}")
        return "\n".join(lines)

    @property
    def _type(self) -> str:
        return "four_stage_reasoning"


_default_parser = ReasoningOutputParser()


def parse_reasoning_response(text: Any) -> ReasoningResponse:
    return _default_parser.parse(text)
