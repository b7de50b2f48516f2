from langchain.prompts import PromptTemplate

from parser.reasoning_output_parser import ReasoningOutputParser
from parser.scene_text_parser import SceneText
from template.spatial_rules import SPATIAL_RULES

SYSTEM_PROMPT = "You are an expert in 3D spatial reasoning who solves visual grounding questions step by step."

prompt = """
You are given the objects of an indoor 3D scene and a query that refers to exactly one of them. Identify the object the query refers to.

SCENE:
Each line is one object: its ID, its class, the center (x, y, z) of its bounding box and its size (width, length, height) in meters. The floor is the plane z = 0.
{scene}

QUERY:
{query}

INSTRUCTIONS:
1. Read every object in the scene before answering.
2. Select the objects the query mentions, both the target class and any reference object.
3. Fix the viewer position before reasoning about directions.
4. Do the calculations explicitly, keeping two decimals, and compare the results.
5. Answer with the ID of the single object that satisfies the query.

{format_instructions}

{spatial_rules}

EXAMPLE CALCULATION:
The distance between center=(1.00, 1.00, 0.50) and center=(4.00, 5.00, 0.40) is
sqrt((4.00 - 1.00)^2 + (5.00 - 1.00)^2) = sqrt(9.00 + 16.00) = 5.00.
The volume of size=(0.60, 0.50, 1.00) is 0.60 x 0.50 x 1.00 = 0.30.
"""

collection_template = PromptTemplate(
    input_variables=["scene", "query"],
    template=prompt,
    partial_variables={
        "format_instructions": ReasoningOutputParser().get_format_instructions(),
        "spatial_rules": SPATIAL_RULES,
    },
)


def build_collection_prompt(scene: SceneText, query: str) -> str:
    """Prompt asking the collector model for a four-stage reasoning response"""
    return collection_template.format(scene=scene.text, query=query.strip())
