import hashlib
import os
import re
from abc import ABC, abstractmethod
from typing import Callable, List, Optional

import groq
import numpy as np
import openai
from langchain_core.messages import HumanMessage, SystemMessage
from langchain_groq import ChatGroq
from langchain_openai import ChatOpenAI

from config import EndpointConfig
from errors import AuthError, EndpointError

_SCENE_LINE = re.compile(r"^ID (\d+): (.+?), center=", re.MULTILINE)
_QUERY_BLOCK = re.compile(r"QUERY:\n(.*?)\n\s*\n", re.DOTALL)

# 401 and 403 from either SDK
PROVIDER_AUTH_ERRORS = (
    openai.AuthenticationError,
    openai.PermissionDeniedError,
    groq.AuthenticationError,
    groq.PermissionDeniedError,
)


class ModelClient(ABC):
    """Anything that turns a system + user message pair into assistant text"""

    @abstractmethod
    def complete(self, system: str, prompt: str) -> str:
        ...


class ChatModelClient(ModelClient):
    """LangChain chat model speaking the chat-completions message schema"""

    def __init__(self, llm):
        self.llm = llm

    def complete(self, system: str, prompt: str) -> str:
        try:
            response = self.llm.invoke([SystemMessage(content=system), HumanMessage(content=prompt)])
        except PROVIDER_AUTH_ERRORS as e:
            raise AuthError(f"Endpoint rejected the credentials: {e}") from e
        except Exception as e:
            if getattr(e, "status_code", None) in (401, 403):
                raise AuthError(f"Endpoint rejected the credentials: {e}") from e
            raise
        content = response.content if isinstance(response.content, str) else str(response.content)
        if not content or len(content.strip()) < 10:
            raise ValueError("Empty or too short response from LLM")
        return content


def build_chat_client(endpoint: EndpointConfig) -> ChatModelClient:
    """Wire backend for the configured provider; retries are handled by the caller"""
    api_key = os.getenv(endpoint.api_key_env_var) if endpoint.api_key_env_var else None
    if not api_key:
        raise AuthError(f"Environment variable {endpoint.api_key_env_var or '<unset>'} holds no API key")

    try:
        if endpoint.provider == "groq":
            llm = ChatGroq(
                api_key=api_key,
                model_name=endpoint.model_name,
                temperature=endpoint.temperature,
                timeout=endpoint.timeout,
                max_retries=0,
            )
        else:
            llm = ChatOpenAI(
                base_url=endpoint.base_url,
                api_key=api_key,
                model=endpoint.model_name,
                temperature=endpoint.temperature,
                timeout=endpoint.timeout,
                max_retries=0,
            )
    except Exception as e:
        raise EndpointError(f"Failed to initialize {endpoint.provider} model '{endpoint.model_name}': {e}")
    return ChatModelClient(llm)


# -- deterministic backends --------------------------------------------------------

def scripted_response(answer_id: int, related: str = "", reasoning: str = "") -> str:
    """A well-formed four-stage response naming answer_id"""
    return (
        "[RELATED OBJECTS]\n"
        f"{related or f'ID {answer_id}'}\n"
        "[SITUATION]\n"
        "No situation is given, so the viewer stands in the middle of the scene.\n"
        "[REASONING]\n"
        f"{reasoning or f'The object with ID {answer_id} satisfies the query.'}\n"
        "[CONCLUSION]\n"
        f"Final Answer: {answer_id}"
    )


def prompt_rng(seed: int, prompt: str) -> np.random.Generator:
    """Random stream fixed by (seed, prompt), independent of request order"""
    digest = hashlib.sha256(f"{seed}:{prompt}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def scene_ids_in_prompt(prompt: str) -> List[int]:
    return [int(m.group(1)) for m in _SCENE_LINE.finditer(prompt)]


class MockReasoningClient(ModelClient):
    """
    Offline collector: answers with the id given by ``resolver`` and, with
    probability ``error_rate``, with a different id from the same scene.
    """

    def __init__(self, resolver: Callable[[str], Optional[int]], error_rate: float = 0.0, seed: int = 0):
        if not 0 <= error_rate <= 1:
            raise ValueError(f"error_rate must lie in [0, 1], got {error_rate}")
        self.resolver = resolver
        self.error_rate = error_rate
        self.seed = seed

    def complete(self, system: str, prompt: str) -> str:
        answer = self.resolver(prompt)
        if answer is None:
            return "I could not find the object in this scene."
        rng = prompt_rng(self.seed, prompt)
        if rng.uniform() < self.error_rate:
            others = [i for i in scene_ids_in_prompt(prompt) if i != answer]
            answer = others[int(rng.integers(len(others)))] if others else answer + 1
        return scripted_response(answer)


class ScriptedPredictorClient(ModelClient):
    """Offline grounding baseline: the lowest-id proposal of the class the query names first"""

    def complete(self, system: str, prompt: str) -> str:
        proposals = [(int(m.group(1)), m.group(2)) for m in _SCENE_LINE.finditer(prompt)]
        if not proposals:
            return "There are no objects in this scene."
        query_match = _QUERY_BLOCK.search(prompt)
        query = query_match.group(1).lower() if query_match else ""
        positions = {}
        for _, class_name in proposals:
            match = re.search(rf"\b{re.escape(class_name.lower())}\b", query)
            if match:
                positions.setdefault(class_name, match.start())
        if positions:
            named = min(positions, key=lambda c: (positions[c], c))
            answer = min(i for i, class_name in proposals if class_name == named)
        else:
            answer = min(i for i, _ in proposals)
        return scripted_response(answer, reasoning="Picked the first proposal of the class the query names first.")
