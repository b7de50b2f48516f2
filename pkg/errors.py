"""Exception hierarchy shared by the scene factory, collector and evaluation harness."""

from typing import Optional, Sequence


class GroundingError(Exception):
    """Base class for every error this package raises on purpose"""


class ConfigError(GroundingError):
    """Invalid or unknown configuration values"""


class RecordSchemaError(GroundingError):
    """A record file line does not match its schema"""

    def __init__(self, path: str, line_number: int, detail: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {detail}")


# geometry

class GeometryError(GroundingError):
    pass


class InvalidGeometry(GeometryError):
    pass


# catalog

class CatalogError(GroundingError):
    pass


class UnknownClass(CatalogError):
    def __init__(self, class_name: str):
        self.class_name = class_name
        super().__init__(f"Unknown object class: {class_name!r}")


class InvalidJitter(CatalogError):
    def __init__(self, jitter: float):
        self.jitter = jitter
        super().__init__(f"Jitter must satisfy 0 <= jitter < 1, got {jitter}")


class CatalogSchemaError(CatalogError):
    pass


# scene generation

class SceneError(GroundingError):
    pass


class InvalidSceneConfig(SceneError):
    pass


class PlacementExhausted(SceneError):
    pass


# relations and query templates

class RelationError(GroundingError):
    pass


class MissingAnchor(RelationError):
    pass


class AmbiguousRelation(RelationError):
    pass


class MissingAnchorClass(RelationError):
    pass


class UnfilledPlaceholder(RelationError):
    pass


class TemplateSchemaError(RelationError):
    pass


# scene text

class SceneTextError(GroundingError):
    pass


class EmptyScene(SceneTextError):
    pass


class DuplicateId(SceneTextError):
    def __init__(self, object_id: int):
        self.object_id = object_id
        super().__init__(f"Duplicate object id: {object_id}")


class MalformedLine(SceneTextError):
    def __init__(self, line_number: int, line: str):
        self.line_number = line_number
        self.line = line
        super().__init__(f"Malformed scene line {line_number}: {line!r}")


# endpoint

class EndpointError(GroundingError):
    pass


class AuthError(EndpointError):
    pass


# evaluation

class EvaluationError(GroundingError):
    pass


class ClassNotInScene(EvaluationError):
    def __init__(self, class_name: str):
        self.class_name = class_name
        super().__init__(f"Class {class_name!r} has no ground-truth object in the scene")


class PredictionMismatch(EvaluationError):
    def __init__(self, scene_id: str, query_id: str, detail: str):
        self.scene_id = scene_id
        self.query_id = query_id
        super().__init__(f"{detail}: scene={scene_id} query={query_id}")


class MissingPrediction(PredictionMismatch):
    def __init__(self, scene_id: str, query_id: str):
        super().__init__(scene_id, query_id, "No prediction for item")


class DuplicatePrediction(PredictionMismatch):
    def __init__(self, scene_id: str, query_id: str):
        super().__init__(scene_id, query_id, "More than one prediction for item")


class UnmatchedPrediction(PredictionMismatch):
    def __init__(self, scene_id: str, query_id: str):
        super().__init__(scene_id, query_id, "Prediction has no ground-truth item")


class MissingSplitLabel(EvaluationError):
    def __init__(self, scene_id: str, query_id: str, expected: Sequence[str]):
        self.scene_id = scene_id
        self.query_id = query_id
        super().__init__(
            f"Item scene={scene_id} query={query_id} needs one of {'/'.join(expected)}"
        )


class UnknownProposalId(EvaluationError):
    def __init__(self, scene_id: Optional[str], proposal_id: int):
        self.scene_id = scene_id
        self.proposal_id = proposal_id
        super().__init__(f"Proposal id {proposal_id} not found in scene {scene_id}")
