from langchain.prompts import PromptTemplate

from parser.reasoning_output_parser import ReasoningOutputParser
from parser.scene_text_parser import SceneText
from template.spatial_rules import SPATIAL_RULES

SYSTEM_PROMPT = "You are a 3D visual grounding assistant."

prompt = """
Below are the object proposals of a 3D scene and a query describing one of them. Find the object the query refers to.

SCENE:
Each line is one object: its ID, its class, the center (x, y, z) of its bounding box and its size (width, length, height) in meters.
{scene}

QUERY:
{query}

{format_instructions}

{spatial_rules}
"""

inference_template = PromptTemplate(
    input_variables=["scene", "query"],
    template=prompt,
    partial_variables={
        "format_instructions": ReasoningOutputParser().get_format_instructions(),
        "spatial_rules": SPATIAL_RULES,
    },
)


def build_inference_prompt(scene: SceneText, query: str) -> str:
    """The {scene} slot receives the serialized proposals"""
    return inference_template.format(scene=scene.text, query=query.strip())
