"""
Grounding benchmark scoring.

Two protocols are supported:

* box protocol: a prediction is correct at threshold t when its box has
  IoU >= t with the ground-truth box; accuracy is split into Unique and
  Multiple queries.
* id protocol: a prediction is correct when it names the ground-truth object
  id; accuracy is split into Easy/Hard and view-Dependent/Independent queries.

Either protocol adds an InDomain/OutOfDomain split when the ground truth
carries those labels; then every item needs one of them.

Scoring is a pure fold over items, so the report does not depend on the order
of items or predictions.
"""
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config import EndpointConfig
from errors import (
    AuthError,
    ClassNotInScene,
    DuplicatePrediction,
    EndpointError,
    EvaluationError,
    GroundingError,
    MissingPrediction,
    MissingSplitLabel,
    RecordSchemaError,
    UnknownProposalId,
    UnmatchedPrediction,
)
from parser.reasoning_output_parser import ReasoningFormatError, parse_reasoning_response
from parser.scene_text_parser import SUB_RESOLUTION_SIZE, serialize_scene
from processor.collection_processor import ordered_results, request_reasoning, require_api_key, write_debug
from processor.dataset_io import iter_records
from processor.model_client import ModelClient
from scene.geometry import AABB, Dims3, Point3, iou
from scene.objects import ObjectInstance
from template.inference_prompt import SYSTEM_PROMPT, build_inference_prompt

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS: Tuple[float, ...] = (0.25, 0.5)


class SplitLabel(str, Enum):
    UNIQUE = "Unique"
    MULTIPLE = "Multiple"
    EASY = "Easy"
    HARD = "Hard"
    DEP = "Dep"
    INDEP = "Indep"
    IN_DOMAIN = "InDomain"
    OUT_OF_DOMAIN = "OutOfDomain"


# partition name -> the labels that partition the items
BOX_PARTITIONS: Dict[str, Tuple[SplitLabel, ...]] = {
    "unique_multiple": (SplitLabel.UNIQUE, SplitLabel.MULTIPLE),
}
ID_PARTITIONS: Dict[str, Tuple[SplitLabel, ...]] = {
    "easy_hard": (SplitLabel.EASY, SplitLabel.HARD),
    "view": (SplitLabel.DEP, SplitLabel.INDEP),
}
# scored only when some item carries one of the labels
OPTIONAL_PARTITIONS: Dict[str, Tuple[SplitLabel, ...]] = {
    "domain": (SplitLabel.IN_DOMAIN, SplitLabel.OUT_OF_DOMAIN),
}


@dataclass(frozen=True)
class Proposal:
    id: int
    class_name: str
    box: AABB


@dataclass(frozen=True)
class ProposalSet:
    scene_id: str
    proposals: Tuple[Proposal, ...]

    def __post_init__(self):
        ids = [p.id for p in self.proposals]
        if len(ids) != len(set(ids)):
            duplicated = sorted(i for i, n in Counter(ids).items() if n > 1)
            raise EvaluationError(f"Duplicate proposal ids in scene {self.scene_id}: {duplicated}")

    def get(self, proposal_id: int) -> Optional[Proposal]:
        for proposal in self.proposals:
            if proposal.id == proposal_id:
                return proposal
        return None

    def to_objects(self) -> List[ObjectInstance]:
        """Proposals as scene objects; degenerate extents are widened to the smallest printable size"""
        objects = []
        for p in self.proposals:
            lo, hi = p.box.min_corner, p.box.max_corner
            extents = [max(b - a, SUB_RESOLUTION_SIZE) for a, b in zip(lo.as_tuple(), hi.as_tuple())]
            objects.append(ObjectInstance(p.id, p.class_name, p.box.center, Dims3(*extents)))
        return objects


@dataclass(frozen=True)
class EvalItem:
    scene_id: str
    query_id: str
    query: str
    gt_box: Optional[AABB] = None
    gt_id: Optional[int] = None
    gt_class: Optional[str] = None
    split_labels: FrozenSet[SplitLabel] = frozenset()
    scene_gt_classes: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.gt_box is None and self.gt_id is None:
            raise EvaluationError(f"Item scene={self.scene_id} query={self.query_id} has neither gt_box nor gt_id")

    @property
    def key(self) -> Tuple[str, str]:
        return (self.scene_id, self.query_id)


@dataclass(frozen=True)
class Prediction:
    scene_id: str
    query_id: str
    box: Optional[AABB] = None
    predicted_id: Optional[int] = None

    @property
    def key(self) -> Tuple[str, str]:
        return (self.scene_id, self.query_id)


@dataclass(frozen=True)
class SplitScore:
    count: int
    correct: Tuple[int, ...]

    def accuracy(self) -> Tuple[float, ...]:
        return tuple(c / self.count if self.count else 0.0 for c in self.correct)


@dataclass(frozen=True)
class MetricsReport:
    protocol: str
    metric_names: Tuple[str, ...]
    thresholds: Tuple[float, ...]
    overall: SplitScore
    partitions: Dict[str, Dict[str, SplitScore]]
    unresolved_ids: int = 0
    unanswered: int = 0

    def to_dict(self) -> Dict:
        def score(s: SplitScore) -> Dict:
            return {
                "count": s.count,
                "correct": dict(zip(self.metric_names, s.correct)),
                "accuracy": dict(zip(self.metric_names, s.accuracy())),
            }

        return {
            "protocol": self.protocol,
            "thresholds": list(self.thresholds),
            "overall": score(self.overall),
            "splits": {
                name: {label: score(s) for label, s in splits.items()}
                for name, splits in self.partitions.items()
            },
            "unresolved_ids": self.unresolved_ids,
            "unanswered": self.unanswered,
        }

    def to_table(self) -> pd.DataFrame:
        """Accuracies (3 decimals) with one column per split and an Overall column"""
        columns: Dict[str, SplitScore] = {}
        for splits in self.partitions.values():
            columns.update(splits)
        columns["Overall"] = self.overall
        rows = {
            metric: [round(s.accuracy()[k], 3) for s in columns.values()]
            for k, metric in enumerate(self.metric_names)
        }
        rows["# of queries"] = [s.count for s in columns.values()]
        return pd.DataFrame.from_dict(rows, orient="index", columns=list(columns))


# -- split labels ---------------------------------------------------------------

def classify_unique_multiple(gt_class: str, scene_gt_classes: Sequence[str]) -> SplitLabel:
    """Unique when the scene holds exactly one ground-truth object of the target class"""
    count = sum(1 for c in scene_gt_classes if c == gt_class)
    if count == 0:
        raise ClassNotInScene(gt_class)
    return SplitLabel.UNIQUE if count == 1 else SplitLabel.MULTIPLE


def _label_for(item: EvalItem, partition: str, labels: Tuple[SplitLabel, ...]) -> SplitLabel:
    present = [label for label in labels if label in item.split_labels]
    if len(present) == 1:
        return present[0]
    if not present and partition == "unique_multiple" and item.gt_class and item.scene_gt_classes is not None:
        return classify_unique_multiple(item.gt_class, item.scene_gt_classes)
    raise MissingSplitLabel(item.scene_id, item.query_id, [label.value for label in labels])


# -- matching ------------------------------------------------------------------

def match_predictions(items: Sequence[EvalItem], predictions: Sequence[Prediction]) -> Dict[Tuple[str, str], Prediction]:
    """Exactly one prediction per item, and no prediction without an item"""
    if not items:
        raise EvaluationError("No ground-truth items to score")
    item_keys = Counter(item.key for item in items)
    for key in sorted(k for k, n in item_keys.items() if n > 1):
        raise EvaluationError(f"Duplicate ground-truth item: scene={key[0]} query={key[1]}")

    matched: Dict[Tuple[str, str], Prediction] = {}
    for prediction in sorted(predictions, key=lambda p: p.key):
        if prediction.key in matched:
            raise DuplicatePrediction(*prediction.key)
        if prediction.key not in item_keys:
            raise UnmatchedPrediction(*prediction.key)
        matched[prediction.key] = prediction
    for key in sorted(item_keys):
        if key not in matched:
            raise MissingPrediction(*key)
    return matched


def resolve_predicted_box(proposals: ProposalSet, predicted_id: int) -> AABB:
    """Box of the proposal a predicted id points at"""
    proposal = proposals.get(predicted_id)
    if proposal is None:
        raise UnknownProposalId(proposals.scene_id, predicted_id)
    return proposal.box


def _partitions_for(items: Sequence[EvalItem],
                    base: Dict[str, Tuple[SplitLabel, ...]]) -> Dict[str, Tuple[SplitLabel, ...]]:
    partitions = dict(base)
    for name, labels in OPTIONAL_PARTITIONS.items():
        if any(label in item.split_labels for item in items for label in labels):
            partitions[name] = labels
    return partitions


def _fold(items: Sequence[EvalItem], partitions: Dict[str, Tuple[SplitLabel, ...]],
          hits: Dict[Tuple[str, str], Tuple[bool, ...]], width: int) -> Tuple[SplitScore, Dict[str, Dict[str, SplitScore]]]:
    def empty():
        return [0, [0] * width]

    overall = empty()
    tallies = {name: {label.value: empty() for label in labels} for name, labels in partitions.items()}
    for item in items:
        item_hits = hits[item.key]
        buckets = [overall] + [
            tallies[name][_label_for(item, name, labels).value] for name, labels in partitions.items()
        ]
        for bucket in buckets:
            bucket[0] += 1
            for k, hit in enumerate(item_hits):
                bucket[1][k] += int(hit)

    def freeze(bucket) -> SplitScore:
        return SplitScore(bucket[0], tuple(bucket[1]))

    return freeze(overall), {
        name: {label: freeze(b) for label, b in splits.items()} for name, splits in tallies.items()
    }


def _check_thresholds(thresholds: Sequence[float]) -> Tuple[float, ...]:
    if not thresholds:
        raise EvaluationError("At least one IoU threshold is required")
    for t in thresholds:
        if not 0 < t < 1:
            raise EvaluationError(f"IoU thresholds must lie in (0, 1), got {t}")
    return tuple(sorted(set(float(t) for t in thresholds)))


def score_box_protocol(items: Sequence[EvalItem], predictions: Sequence[Prediction],
                       thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                       proposals: Optional[Dict[str, ProposalSet]] = None) -> MetricsReport:
    """
    Accuracy@t for every threshold, overall and per Unique/Multiple split.

    Id predictions are turned into boxes through ``proposals``; an id that is
    not among the scene's proposals scores 0 and is tallied in the report.
    """
    thresholds = _check_thresholds(thresholds)
    matched = match_predictions(items, predictions)

    hits: Dict[Tuple[str, str], Tuple[bool, ...]] = {}
    unresolved = unanswered = 0
    for item in items:
        if item.gt_box is None:
            raise EvaluationError(f"Item scene={item.scene_id} query={item.query_id} has no gt_box")
        prediction = matched[item.key]
        box = prediction.box
        if box is None and prediction.predicted_id is not None:
            if proposals is None:
                raise EvaluationError("Id predictions need a proposal file for the box protocol")
            scene_proposals = proposals.get(item.scene_id, ProposalSet(item.scene_id, ()))
            try:
                box = resolve_predicted_box(scene_proposals, prediction.predicted_id)
            except UnknownProposalId as e:
                logger.warning("%s, scored as incorrect", e)
                unresolved += 1
        elif box is None:
            unanswered += 1
        overlap = iou(box, item.gt_box) if box is not None else 0.0
        hits[item.key] = tuple(box is not None and overlap >= t for t in thresholds)

    overall, partitions = _fold(items, _partitions_for(items, BOX_PARTITIONS), hits, len(thresholds))
    return MetricsReport(
        protocol="box",
        metric_names=tuple(f"Acc@{t:g}" for t in thresholds),
        thresholds=thresholds,
        overall=overall,
        partitions=partitions,
        unresolved_ids=unresolved,
        unanswered=unanswered,
    )


def score_id_protocol(items: Sequence[EvalItem], predictions: Sequence[Prediction]) -> MetricsReport:
    """Id accuracy, overall and per Easy/Hard and Dep/Indep split"""
    matched = match_predictions(items, predictions)
    hits: Dict[Tuple[str, str], Tuple[bool, ...]] = {}
    unanswered = 0
    for item in items:
        if item.gt_id is None:
            raise EvaluationError(f"Item scene={item.scene_id} query={item.query_id} has no gt_id")
        predicted_id = matched[item.key].predicted_id
        if predicted_id is None:
            unanswered += 1
        hits[item.key] = (predicted_id is not None and predicted_id == item.gt_id,)

    overall, partitions = _fold(items, _partitions_for(items, ID_PARTITIONS), hits, 1)
    return MetricsReport(
        protocol="id",
        metric_names=("Acc",),
        thresholds=(),
        overall=overall,
        partitions=partitions,
        unanswered=unanswered,
    )


# -- file schemas --------------------------------------------------------------

class BoxRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    min: List[float] = Field(min_length=3, max_length=3)
    max: List[float] = Field(min_length=3, max_length=3)

    def to_aabb(self) -> AABB:
        return AABB(Point3(*self.min), Point3(*self.max))

    @classmethod
    def from_aabb(cls, box: AABB) -> "BoxRecord":
        return cls(min=list(box.min_corner.as_tuple()), max=list(box.max_corner.as_tuple()))


class ProposalRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int = Field(ge=0)
    class_name: str = Field(min_length=1)
    min: List[float] = Field(min_length=3, max_length=3)
    max: List[float] = Field(min_length=3, max_length=3)


class ProposalSetRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scene_id: str
    proposals: List[ProposalRecord]


class GroundTruthRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scene_id: str
    query_id: str
    query: str
    gt_id: Optional[int] = None
    gt_box: Optional[BoxRecord] = None
    gt_class: Optional[str] = None
    split_labels: List[SplitLabel] = Field(default_factory=list)
    scene_gt_classes: Optional[List[str]] = None

    @model_validator(mode="after")
    def _has_ground_truth(self):
        if self.gt_id is None and self.gt_box is None:
            raise ValueError("needs gt_id and/or gt_box")
        return self


class PredictionRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scene_id: str
    query_id: str
    predicted_id: Optional[int] = None
    predicted_box: Optional[BoxRecord] = None

    @model_validator(mode="after")
    def _at_most_one(self):
        if self.predicted_id is not None and self.predicted_box is not None:
            raise ValueError("give predicted_id or predicted_box, not both")
        return self


def _load(path: str, model):
    for line_number, data in iter_records(path):
        try:
            yield line_number, model(**data)
        except (ValidationError, TypeError) as e:
            raise RecordSchemaError(path, line_number, str(e))
        except GroundingError as e:
            raise RecordSchemaError(path, line_number, str(e))


def load_proposals(path: str) -> Dict[str, ProposalSet]:
    """One line per scene: {"scene_id", "proposals": [{"id", "class_name", "min", "max"}]}"""
    scenes: Dict[str, ProposalSet] = {}
    for line_number, record in _load(path, ProposalSetRecord):
        if record.scene_id in scenes:
            raise RecordSchemaError(path, line_number, f"scene {record.scene_id} listed twice")
        try:
            scenes[record.scene_id] = ProposalSet(record.scene_id, tuple(
                Proposal(p.id, p.class_name, AABB(Point3(*p.min), Point3(*p.max))) for p in record.proposals
            ))
        except GroundingError as e:
            raise RecordSchemaError(path, line_number, str(e))
    return scenes


def load_ground_truth(path: str) -> List[EvalItem]:
    """Read ground-truth items; each needs gt_id or gt_box"""
    items = []
    for line_number, r in _load(path, GroundTruthRecord):
        try:
            items.append(EvalItem(
                scene_id=r.scene_id,
                query_id=r.query_id,
                query=r.query,
                gt_box=r.gt_box.to_aabb() if r.gt_box else None,
                gt_id=r.gt_id,
                gt_class=r.gt_class,
                split_labels=frozenset(r.split_labels),
                scene_gt_classes=tuple(r.scene_gt_classes) if r.scene_gt_classes is not None else None,
            ))
        except GroundingError as e:
            raise RecordSchemaError(path, line_number, str(e))
    return items


def load_predictions(path: str) -> List[Prediction]:
    predictions = []
    for line_number, r in _load(path, PredictionRecord):
        try:
            box = r.predicted_box.to_aabb() if r.predicted_box else None
        except GroundingError as e:
            raise RecordSchemaError(path, line_number, str(e))
        predictions.append(Prediction(r.scene_id, r.query_id, box, r.predicted_id))
    return predictions


def prediction_to_record(prediction: Prediction) -> Dict:
    record = PredictionRecord(
        scene_id=prediction.scene_id,
        query_id=prediction.query_id,
        predicted_id=prediction.predicted_id,
        predicted_box=BoxRecord.from_aabb(prediction.box) if prediction.box else None,
    )
    return record.model_dump(exclude_none=True)


# -- inference -----------------------------------------------------------------

@dataclass
class InferenceStats:
    attempted: int = 0
    answered: int = 0
    malformed: int = 0
    endpoint_failures: int = 0
    missing_scene: int = 0

    def to_dict(self) -> Dict:
        return {
            "attempted": self.attempted,
            "answered": self.answered,
            "malformed": self.malformed,
            "endpoint_failures": self.endpoint_failures,
            "missing_scene": self.missing_scene,
        }


def run_inference(items: Sequence[EvalItem], proposals: Dict[str, ProposalSet], endpoint: EndpointConfig,
                  client: ModelClient, debug_dir: Optional[str] = None) -> Tuple[List[Prediction], InferenceStats]:
    """
    Ask the endpoint to ground every query against its scene's proposals.

    Every item gets exactly one prediction; a response without a parseable
    answer becomes an unanswered prediction, which scores as incorrect.
    """
    if not items:
        raise GroundingError("No queries to ground")
    endpoint.validate()
    require_api_key(endpoint)

    def work(item: EvalItem) -> Tuple[Prediction, str]:
        scene = proposals.get(item.scene_id)
        if scene is None or not scene.proposals:
            return Prediction(item.scene_id, item.query_id), "missing_scene"
        prompt = build_inference_prompt(serialize_scene(scene.to_objects()), item.query)
        try:
            raw_text = request_reasoning(endpoint, prompt, client, system=SYSTEM_PROMPT)
        except AuthError:
            raise
        except EndpointError as e:
            logger.warning("✗ %s/%s unanswered, endpoint failure: %s", item.scene_id, item.query_id, e)
            return Prediction(item.scene_id, item.query_id), "endpoint_failure"
        if debug_dir:
            write_debug(debug_dir, f"{item.scene_id}.{item.query_id}", prompt, raw_text)
        try:
            response = parse_reasoning_response(raw_text)
        except ReasoningFormatError as e:
            logger.debug("%s/%s malformed response: %s", item.scene_id, item.query_id, e)
            return Prediction(item.scene_id, item.query_id), "malformed"
        return Prediction(item.scene_id, item.query_id, predicted_id=response.predicted_id), "answered"

    stats = InferenceStats()
    predictions: List[Prediction] = []
    with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
        for prediction, outcome in ordered_results(pool, work, items, "Grounding"):
            stats.attempted += 1
            if outcome == "answered":
                stats.answered += 1
            elif outcome == "malformed":
                stats.malformed += 1
            elif outcome == "endpoint_failure":
                stats.endpoint_failures += 1
            else:
                stats.missing_scene += 1
            predictions.append(prediction)

    logger.info("✓ Grounded %d queries: %d answered, %d malformed, %d endpoint failures",
                stats.attempted, stats.answered, stats.malformed, stats.endpoint_failures)
    return predictions, stats
