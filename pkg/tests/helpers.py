"""Object and client builders shared by the test modules"""

import httpx

from parser.scene_text_parser import serialize_scene
from processor.model_client import MockReasoningClient
from scene.geometry import Dims3, Point3
from scene.objects import ObjectInstance
from template.collection_prompt import build_collection_prompt


def answer_key(layouts):
    return {
        build_collection_prompt(serialize_scene(layout.objects), layout.query): layout.target_id
        for layout in layouts
    }


def mock_collector(layouts, error_rate=0.0, seed=0):
    return MockReasoningClient(answer_key(layouts).get, error_rate=error_rate, seed=seed)


def make_object(object_id, class_name, x, y, dims=(0.6, 0.6, 1.0)):
    d = Dims3(*dims)
    return ObjectInstance(object_id, class_name, Point3(x, y, d.height / 2), d)


def provider_error(error_class, status_code, message="Incorrect API key provided"):
    """An SDK status error as the openai and groq clients raise it"""
    request = httpx.Request("POST", "https://api.example.com/v1/chat/completions")
    return error_class(message, response=httpx.Response(status_code, request=request), body=None)


class RejectingLLM:
    """Chat model stand-in whose every invoke raises ``error``"""

    def __init__(self, error):
        self.error = error
        self.calls = 0

    def invoke(self, messages):
        self.calls += 1
        raise self.error
