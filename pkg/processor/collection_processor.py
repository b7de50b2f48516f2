"""
Reasoning-data collection: prompt an endpoint for every generated scene, keep
only responses whose final answer matches the generated ground truth, and emit
prompt/completion training records.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Set, Tuple, Union

import backoff
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from tqdm import tqdm

from config import EndpointConfig
from errors import AuthError, ConfigError, EndpointError, GroundingError, RecordSchemaError
from parser.reasoning_output_parser import (
    ReasoningFormatError,
    ReasoningResponse,
    parse_reasoning_response,
)
from parser.scene_text_parser import serialize_scene
from processor.dataset_io import iter_records, write_records
from processor.model_client import ModelClient
from scene.generator import SceneLayout
from scene.objects import SpatialRelation
from scene.serialization import layout_from_record, layout_to_record
from template.collection_prompt import SYSTEM_PROMPT, build_collection_prompt
from template.inference_prompt import build_inference_prompt

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    KEEP = "keep"
    DROP_WRONG_ANSWER = "drop_wrong_answer"
    DROP_MALFORMED = "drop_malformed"


@dataclass(frozen=True)
class VerifiedSample:
    scene: SceneLayout
    query: str
    response: ReasoningResponse
    raw_text: str

    def __post_init__(self):
        if self.response.predicted_id != self.scene.target_id:
            raise ValueError(
                f"Sample {self.scene.scene_id} predicts {self.response.predicted_id}, "
                f"target is {self.scene.target_id}"
            )


@dataclass
class CollectionStats:
    attempted: int = 0
    kept: int = 0
    dropped_wrong: int = 0
    dropped_malformed: int = 0
    per_relation_kept: Dict[str, int] = field(default_factory=lambda: {r.value: 0 for r in SpatialRelation})
    per_relation_attempted: Dict[str, int] = field(default_factory=lambda: {r.value: 0 for r in SpatialRelation})
    skipped_resumed: int = 0
    endpoint_failures: int = 0
    prompt_chars: int = 0
    completion_chars: int = 0

    @property
    def consistent(self) -> bool:
        return self.attempted == self.kept + self.dropped_wrong + self.dropped_malformed

    @property
    def retention(self) -> float:
        return self.kept / self.attempted if self.attempted else 0.0

    def record(self, relation: SpatialRelation, verdict: Verdict) -> None:
        self.attempted += 1
        self.per_relation_attempted[relation.value] += 1
        if verdict is Verdict.KEEP:
            self.kept += 1
            self.per_relation_kept[relation.value] += 1
        elif verdict is Verdict.DROP_WRONG_ANSWER:
            self.dropped_wrong += 1
        else:
            self.dropped_malformed += 1

    def to_dict(self) -> Dict:
        return {
            "attempted": self.attempted,
            "kept": self.kept,
            "dropped_wrong": self.dropped_wrong,
            "dropped_malformed": self.dropped_malformed,
            "retention": round(self.retention, 4),
            "per_relation_kept": dict(self.per_relation_kept),
            "per_relation_attempted": dict(self.per_relation_attempted),
            "skipped_resumed": self.skipped_resumed,
            "endpoint_failures": self.endpoint_failures,
            "prompt_chars": self.prompt_chars,
            "completion_chars": self.completion_chars,
        }


# -- single request -----------------------------------------------------------

def require_api_key(endpoint: EndpointConfig) -> None:
    if endpoint.api_key_env_var and not os.getenv(endpoint.api_key_env_var):
        raise AuthError(f"Environment variable {endpoint.api_key_env_var} is not set")


def request_reasoning(endpoint: EndpointConfig, prompt: str, client: ModelClient,
                      system: str = SYSTEM_PROMPT) -> str:
    """Send one prompt, retrying transient failures with exponential backoff"""
    if not prompt.strip():
        raise EndpointError("Refusing to send an empty prompt")
    require_api_key(endpoint)

    @backoff.on_exception(
        backoff.expo,
        Exception,
        max_tries=endpoint.max_retries + 1,
        giveup=lambda e: isinstance(e, AuthError),
        factor=endpoint.backoff_factor,
        max_value=60,
    )
    def _call() -> str:
        return client.complete(system, prompt)

    try:
        return _call()
    except AuthError:
        raise
    except Exception as e:
        raise EndpointError(f"Request failed after {endpoint.max_retries + 1} attempts: {e}") from e


def ordered_results(pool: ThreadPoolExecutor, fn: Callable, items: Sequence, desc: str) -> Iterator:
    """pool.map in input order under a progress bar; an AuthError cancels every request not yet started"""
    try:
        yield from tqdm(pool.map(fn, items), total=len(items), desc=desc, disable=None)
    except AuthError:
        pool.shutdown(wait=False, cancel_futures=True)
        raise


def verify_sample(response: Union[ReasoningResponse, Exception], target_id: int) -> Verdict:
    """Keep only well-formed responses whose final answer is the generated target"""
    if isinstance(response, Exception) or response.predicted_id is None:
        return Verdict.DROP_MALFORMED
    if response.predicted_id == target_id:
        return Verdict.KEEP
    return Verdict.DROP_WRONG_ANSWER


# -- batch collection ---------------------------------------------------------

@dataclass
class _Outcome:
    layout: SceneLayout
    query: str
    prompt: str
    raw_text: Optional[str]
    response: Union[ReasoningResponse, Exception, None]
    verdict: Verdict
    endpoint_failure: bool = False


def _read_resume(path: Optional[str]) -> Set[str]:
    if not path or not os.path.exists(path):
        return set()
    with open(path, "r", encoding="utf-8") as f:
        return {line.strip() for line in f if line.strip()}


def write_debug(debug_dir: str, scene_id: str, prompt: str, raw_text: Optional[str]) -> None:
    os.makedirs(debug_dir, exist_ok=True)
    with open(os.path.join(debug_dir, f"{scene_id}.prompt.txt"), "w", encoding="utf-8") as f:
        f.write(prompt)
    if raw_text is not None:
        with open(os.path.join(debug_dir, f"{scene_id}.response.txt"), "w", encoding="utf-8") as f:
            f.write(raw_text)


def run_collection(samples: Sequence[Tuple[SceneLayout, str]], endpoint: EndpointConfig, client: ModelClient,
                   resume_path: Optional[str] = None, sink_path: Optional[str] = None,
                   debug_dir: Optional[str] = None) -> Tuple[List[VerifiedSample], CollectionStats]:
    """
    Collect and verify one response per (scene, query) sample.

    Endpoint failures drop the sample and the batch carries on; only
    configuration problems (bad endpoint settings, missing key) abort.
    With ``resume_path`` completed scene ids are appended as they finish and
    skipped on the next run; ``sink_path`` receives kept samples incrementally.
    """
    if not samples:
        raise GroundingError("No samples to collect")
    endpoint.validate()
    require_api_key(endpoint)

    stats = CollectionStats()
    done = _read_resume(resume_path)
    pending = [(layout, query) for layout, query in samples if layout.scene_id not in done]
    stats.skipped_resumed = len(samples) - len(pending)
    if stats.skipped_resumed:
        logger.info("Resuming: %d of %d samples already completed", stats.skipped_resumed, len(samples))

    def work(item: Tuple[SceneLayout, str]) -> _Outcome:
        layout, query = item
        prompt = build_collection_prompt(serialize_scene(layout.objects), query)
        try:
            raw_text = request_reasoning(endpoint, prompt, client)
        except AuthError:
            raise
        except EndpointError as e:
            logger.warning("✗ %s dropped, endpoint failure: %s", layout.scene_id, e)
            return _Outcome(layout, query, prompt, None, e, Verdict.DROP_MALFORMED, endpoint_failure=True)
        if debug_dir:
            write_debug(debug_dir, layout.scene_id, prompt, raw_text)
        try:
            response = parse_reasoning_response(raw_text)
        except ReasoningFormatError as e:
            response = e
        return _Outcome(layout, query, prompt, raw_text, response, verify_sample(response, layout.target_id))

    kept: List[VerifiedSample] = []
    resume_file = open(resume_path, "a", encoding="utf-8") if resume_path else None
    try:
        with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
            # map preserves input order, so this loop is the single merge point
            for outcome in ordered_results(pool, work, pending, "Collecting"):
                stats.record(outcome.layout.relation, outcome.verdict)
                stats.prompt_chars += len(outcome.prompt)
                stats.completion_chars += len(outcome.raw_text or "")
                if outcome.endpoint_failure:
                    stats.endpoint_failures += 1
                elif outcome.verdict is Verdict.DROP_MALFORMED:
                    logger.debug("%s dropped as malformed: %s", outcome.layout.scene_id, outcome.response)
                elif outcome.verdict is Verdict.DROP_WRONG_ANSWER:
                    logger.debug("%s dropped, predicted %s, target %s", outcome.layout.scene_id,
                                 outcome.response.predicted_id, outcome.layout.target_id)

                if outcome.verdict is Verdict.KEEP:
                    sample = VerifiedSample(outcome.layout, outcome.query, outcome.response, outcome.raw_text)
                    kept.append(sample)
                    if sink_path:
                        write_records(sink_path, [verified_sample_to_record(sample)], append=True)
                if resume_file:
                    resume_file.write(outcome.layout.scene_id + "\n")
                    resume_file.flush()
    finally:
        if resume_file:
            resume_file.close()

    logger.info("✓ Collected %d samples: kept %d, wrong %d, malformed %d (retention %.1f%%)",
                stats.attempted, stats.kept, stats.dropped_wrong, stats.dropped_malformed, 100 * stats.retention)
    return kept, stats


# -- verified sample files -------------------------------------------------------

def verified_sample_to_record(sample: VerifiedSample) -> Dict:
    return {"scene": layout_to_record(sample.scene), "query": sample.query, "raw_text": sample.raw_text}


def write_verified_samples(path: str, samples: Sequence[VerifiedSample]) -> int:
    return write_records(path, (verified_sample_to_record(s) for s in samples))


def read_verified_samples(path: str) -> List[VerifiedSample]:
    """Read verified samples, rebuilding each scene layout"""
    samples = []
    for line_number, record in iter_records(path):
        if set(record) != {"scene", "query", "raw_text"}:
            raise RecordSchemaError(path, line_number, "verified sample needs exactly scene, query, raw_text")
        layout = layout_from_record(record["scene"], path, line_number)
        try:
            response = parse_reasoning_response(record["raw_text"])
            samples.append(VerifiedSample(layout, record["query"], response, record["raw_text"]))
        except (ReasoningFormatError, ValueError) as e:
            raise RecordSchemaError(path, line_number, f"not a verified sample: {e}")
    return samples


# -- training records ---------------------------------------------------------

class TrainingRecord(BaseModel):
    """Input x (scene text + query) and target y (verified response) for next-token fine-tuning"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    prompt: str = Field(min_length=1)
    completion: str = Field(min_length=1)
    relation: SpatialRelation
    scene_id: str
    target_id: int


def to_training_record(sample: VerifiedSample, include_reasoning: bool = True) -> TrainingRecord:
    completion = sample.raw_text if include_reasoning else f"Final Answer: {sample.scene.target_id}"
    return TrainingRecord(
        prompt=build_inference_prompt(serialize_scene(sample.scene.objects), sample.query),
        completion=completion,
        relation=sample.scene.relation,
        scene_id=sample.scene.scene_id,
        target_id=sample.scene.target_id,
    )


def sample_subset(dataset: Sequence[VerifiedSample], limit: Optional[int] = None,
                  fraction: Optional[float] = None, seed: int = 0) -> List[VerifiedSample]:
    """Seeded subset of at most ``limit`` samples, or ``fraction`` of them; input order is kept"""
    if limit is not None and fraction is not None:
        raise ConfigError("Give a limit or a fraction, not both")
    if limit is None and fraction is None:
        return list(dataset)
    if fraction is not None:
        if not 0 < fraction <= 1:
            raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
        limit = max(1, round(fraction * len(dataset)))
    if limit < 1:
        raise ConfigError(f"limit must be at least 1, got {limit}")
    if limit >= len(dataset):
        return list(dataset)
    chosen = np.random.default_rng(seed).choice(len(dataset), size=limit, replace=False)
    return [dataset[i] for i in sorted(int(i) for i in chosen)]


def emit_training_records(dataset: Sequence[VerifiedSample], path: str, include_reasoning: bool = True) -> int:
    """Write one prompt/completion record per verified sample; returns the record count"""
    if not dataset:
        raise GroundingError("No verified samples to emit")
    records = [to_training_record(sample, include_reasoning) for sample in dataset]
    count = write_records(path, (r.model_dump(mode="json") for r in records))
    logger.info("✓ Wrote %d training records to %s", count, path)
    return count


def read_training_records(path: str) -> List[TrainingRecord]:
    records = []
    for line_number, data in iter_records(path):
        try:
            records.append(TrainingRecord(**data))
        except ValidationError as e:
            raise RecordSchemaError(path, line_number, str(e))
    return records


def relation_counts(relations: Sequence[SpatialRelation]) -> Dict[SpatialRelation, int]:
    """Count per relation, zero for relations that never occur"""
    counts = {relation: 0 for relation in SpatialRelation}
    for relation in relations:
        counts[relation] += 1
    return counts


def statistics_table(counts: Dict[SpatialRelation, int]) -> pd.DataFrame:
    """Per-relation sample counts laid out like the training data statistics table"""
    table = pd.DataFrame(
        [[counts.get(relation, 0) for relation in SpatialRelation]],
        columns=[relation.label for relation in SpatialRelation],
        index=["# of data"],
    )
    table.columns.name = "Relationship"
    table["Total"] = table.sum(axis=1)
    return table
