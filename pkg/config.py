import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv

from errors import ConfigError, InvalidSceneConfig

VERSION = "1.0.0"

DEFAULT_CATALOG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "object_catalog.json")
DEFAULT_TEMPLATES_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "query_templates.json")


@dataclass(frozen=True)
class SceneConfig:
    """Parameters of one procedurally generated scene"""

    room_width: float = 6.0
    room_length: float = 6.0
    candidate_count_range: Tuple[int, int] = (2, 5)
    min_objects: int = 51
    jitter: float = 0.15
    margin: float = 0.3
    margin_ratio: float = 0.25
    next_to_radius: float = 0.8
    max_placement_retries: int = 200
    seed: int = 0

    def validate(self) -> "SceneConfig":
        if not (self.room_width > 0 and self.room_length > 0):
            raise InvalidSceneConfig("Room dimensions must be positive")
        low, high = self.candidate_count_range
        if low < 1 or high < low:
            raise InvalidSceneConfig(f"Invalid candidate_count_range: {self.candidate_count_range}")
        if self.min_objects < high + 2:
            raise InvalidSceneConfig(
                f"min_objects ({self.min_objects}) must be at least the largest candidate count + 2 ({high + 2})"
            )
        if not 0 <= self.jitter < 1:
            raise InvalidSceneConfig(f"jitter must satisfy 0 <= jitter < 1, got {self.jitter}")
        if self.margin <= 0 or self.margin_ratio <= 0 or self.next_to_radius <= 0:
            raise InvalidSceneConfig("margin, margin_ratio and next_to_radius must be positive")
        if self.max_placement_retries < 1:
            raise InvalidSceneConfig("max_placement_retries must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidSceneConfig("seed must be a 64-bit unsigned integer")
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["candidate_count_range"] = list(self.candidate_count_range)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SceneConfig":
        data = _check_keys(cls, data, "scene")
        if "candidate_count_range" in data:
            data["candidate_count_range"] = tuple(data["candidate_count_range"])
        return cls(**data)


@dataclass(frozen=True)
class EndpointConfig:
    """Chat-completion endpoint used for collection and inference"""

    provider: str = "openai"
    base_url: str = "https://api.openai.com/v1"
    model_name: str = "gpt-4o"
    api_key_env_var: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    max_in_flight: int = 4
    max_retries: int = 3
    timeout: float = 120.0
    backoff_factor: float = 1.0

    def validate(self) -> "EndpointConfig":
        if self.provider not in ("openai", "groq", "mock"):
            raise ConfigError(f"Unsupported provider: {self.provider}")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be at least 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be non-negative")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EndpointConfig":
        return cls(**_check_keys(cls, data, "endpoint"))


@dataclass(frozen=True)
class AppConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    scenes_per_relation: int = 500

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scene": self.scene.to_dict(),
            "endpoint": self.endpoint.to_dict(),
            "scenes_per_relation": self.scenes_per_relation,
        }


def _check_keys(cls, data: Dict[str, Any], section: str) -> Dict[str, Any]:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in config section '{section}': {', '.join(unknown)}")
    return dict(data)


def load_config(path: Optional[str] = None) -> AppConfig:
    """Load the JSON config file on top of the built-in defaults"""
    load_dotenv()
    if not path:
        return AppConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config file {path}: {e}")

    if not isinstance(data, dict):
        raise ConfigError("Config file must contain a JSON object")
    unknown = sorted(set(data) - {"scene", "endpoint", "scenes_per_relation"})
    if unknown:
        raise ConfigError(f"Unknown top-level config keys: {', '.join(unknown)}")

    try:
        return AppConfig(
            scene=SceneConfig.from_dict(data.get("scene", {})),
            endpoint=EndpointConfig.from_dict(data.get("endpoint", {})),
            scenes_per_relation=int(data.get("scenes_per_relation", 500)),
        )
    except TypeError as e:
        raise ConfigError(f"Invalid config file {path}: {e}")


def apply_overrides(config: AppConfig, scene: Dict[str, Any], endpoint: Dict[str, Any],
                    scenes_per_relation: Optional[int] = None) -> AppConfig:
    """Layer command-line flags over the loaded config; None means 'not given'"""
    scene_changes = {k: v for k, v in scene.items() if v is not None}
    endpoint_changes = {k: v for k, v in endpoint.items() if v is not None}
    return AppConfig(
        scene=replace(config.scene, **scene_changes),
        endpoint=replace(config.endpoint, **endpoint_changes),
        scenes_per_relation=scenes_per_relation if scenes_per_relation is not None else config.scenes_per_relation,
    )


def debug_enabled() -> bool:
    """DEBUG=true dumps prompts and responses"""
    return os.getenv("DEBUG", "false").lower() == "true"
