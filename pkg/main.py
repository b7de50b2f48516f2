"""
Command-line front end.

    python main.py generate --relation closest --count 10 --seed 7 --out data/scenes.jsonl
    python main.py collect --layouts data/scenes.jsonl --endpoint mock --out data/verified.jsonl
    python main.py emit --samples data/verified.jsonl --out data/train.jsonl
    python main.py score --protocol box --ground-truth gt.jsonl --predictions pred.jsonl --out report.json

Logs go to stderr, data to files (and tables to stdout). Every run writes
``<out>.manifest.json`` next to its output.
"""
import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from config import (
    VERSION,
    AppConfig,
    EndpointConfig,
    apply_overrides,
    debug_enabled,
    load_config,
)
from errors import ConfigError, GroundingError
from parser.report_to_xlsx import table_to_xlsx
from parser.scene_text_parser import serialize_scene
from processor.collection_processor import (
    emit_training_records,
    read_training_records,
    read_verified_samples,
    relation_counts,
    run_collection,
    sample_subset,
    statistics_table,
)
from processor.dataset_io import iter_records, read_layouts, write_json, write_layouts, write_records
from processor.evaluation_processor import (
    load_ground_truth,
    load_predictions,
    load_proposals,
    prediction_to_record,
    run_inference,
    score_box_protocol,
    score_id_protocol,
)
from processor.model_client import (
    MockReasoningClient,
    ModelClient,
    ScriptedPredictorClient,
    build_chat_client,
)
from scene.catalog import load_catalog
from scene.generator import generate_scenes, validate_scene
from scene.objects import SpatialRelation
from scene.relations import load_template_bank
from template.collection_prompt import SYSTEM_PROMPT, build_collection_prompt

logger = logging.getLogger("grounding")

DEBUG_DIR = "debug"


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    seed: Optional[int]
    inputs: Dict[str, Optional[str]]
    outputs: List[str]
    started_at: str
    finished_at: str = ""
    duration_seconds: float = 0.0
    version: str = VERSION
    summary: Dict[str, Any] = field(default_factory=dict)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# -- configuration ------------------------------------------------------------

def _endpoint_changes(args: argparse.Namespace, current: EndpointConfig) -> Dict[str, Any]:
    changes: Dict[str, Any] = {
        "model_name": getattr(args, "model", None),
        "max_in_flight": getattr(args, "max_in_flight", None),
    }
    endpoint = getattr(args, "endpoint", None)
    if endpoint:
        if endpoint in ("openai", "groq", "mock"):
            changes["provider"] = endpoint
        elif endpoint.startswith(("http://", "https://")):
            changes["provider"] = "openai"
            changes["base_url"] = endpoint
        else:
            raise ConfigError(f"--endpoint must be openai, groq, mock or an http(s) base URL, got {endpoint!r}")

    provider = changes.get("provider") or current.provider
    if provider == "mock":
        changes["api_key_env_var"] = ""
    elif provider == "groq" and current.api_key_env_var == EndpointConfig.api_key_env_var:
        changes["api_key_env_var"] = "GROQ_API_KEY"
    return changes


def resolve_config(args: argparse.Namespace) -> AppConfig:
    """flags > config file > defaults"""
    config = load_config(getattr(args, "config", None))
    scene = {
        "min_objects": getattr(args, "min_objects", None),
        "jitter": getattr(args, "jitter", None),
        "margin": getattr(args, "margin", None),
        "seed": getattr(args, "seed", None),
    }
    try:
        config = apply_overrides(config, scene, _endpoint_changes(args, config.endpoint))
    except TypeError as e:
        raise ConfigError(str(e))
    config.scene.validate()
    config.endpoint.validate()
    return config


def _debug_dir() -> Optional[str]:
    return DEBUG_DIR if debug_enabled() else None


# -- subcommands ----------------------------------------------------------------

def cmd_generate(args: argparse.Namespace, config: AppConfig, manifest: RunManifest) -> int:
    catalog = load_catalog(args.catalog)
    templates = load_template_bank(args.templates)
    relations = list(SpatialRelation) if args.relation == "all" else [SpatialRelation.parse(args.relation)]
    count = args.count if args.count is not None else config.scenes_per_relation
    if count < 1:
        raise ConfigError("--count must be at least 1")

    layouts = []
    for relation in relations:
        logger.info("Generating %d '%s' scenes...", count, relation.value)
        layouts.extend(generate_scenes(relation, count, config.scene, catalog, templates))
    written = write_layouts(args.out, layouts)
    logger.info("✓ Wrote %d layouts to %s", written, args.out)
    manifest.summary = {"layouts": written, "relations": [r.value for r in relations], "per_relation": count}
    return 0


def cmd_prompt(args: argparse.Namespace, config: AppConfig, manifest: RunManifest) -> int:
    layouts = read_layouts(args.layouts)
    records = (
        {
            "scene_id": layout.scene_id,
            "relation": layout.relation.value,
            "system": SYSTEM_PROMPT,
            "prompt": build_collection_prompt(serialize_scene(layout.objects), layout.query),
        }
        for layout in layouts
    )
    written = write_records(args.out, records)
    logger.info("✓ Wrote %d collection prompts to %s", written, args.out)
    manifest.summary = {"prompts": written}
    return 0


def _collection_client(endpoint: EndpointConfig, layouts, error_rate: float, seed: int) -> ModelClient:
    if endpoint.provider != "mock":
        return build_chat_client(endpoint)
    answers = {
        build_collection_prompt(serialize_scene(layout.objects), layout.query): layout.target_id
        for layout in layouts
    }
    return MockReasoningClient(answers.get, error_rate=error_rate, seed=seed)


def cmd_collect(args: argparse.Namespace, config: AppConfig, manifest: RunManifest) -> int:
    layouts = read_layouts(args.layouts)
    client = _collection_client(config.endpoint, layouts, args.mock_error_rate, config.scene.seed)
    if not args.resume and os.path.exists(args.out):
        os.remove(args.out)
    write_records(args.out, [], append=True)

    _, stats = run_collection(
        [(layout, layout.query) for layout in layouts],
        config.endpoint,
        client,
        resume_path=args.resume,
        sink_path=args.out,
        debug_dir=_debug_dir(),
    )
    stats_path = f"{args.out}.stats.json"
    write_json(stats_path, stats.to_dict())
    manifest.outputs.append(stats_path)
    manifest.summary = stats.to_dict()
    return 0


def cmd_emit(args: argparse.Namespace, config: AppConfig, manifest: RunManifest) -> int:
    samples = read_verified_samples(args.samples)
    subset = sample_subset(samples, args.limit, args.fraction, config.scene.seed)
    if len(subset) < len(samples):
        logger.info("Emitting a seeded subset of %d of %d samples", len(subset), len(samples))
    written = emit_training_records(subset, args.out, include_reasoning=not args.no_reasoning)
    manifest.summary = {"records": written, "available": len(samples), "include_reasoning": not args.no_reasoning}
    return 0


def cmd_infer(args: argparse.Namespace, config: AppConfig, manifest: RunManifest) -> int:
    proposals = load_proposals(args.proposals)
    items = load_ground_truth(args.ground_truth)
    if config.endpoint.provider == "mock":
        client: ModelClient = ScriptedPredictorClient()
    else:
        client = build_chat_client(config.endpoint)
    predictions, stats = run_inference(items, proposals, config.endpoint, client, debug_dir=_debug_dir())
    write_records(args.out, (prediction_to_record(p) for p in predictions))
    manifest.summary = stats.to_dict()
    return 0


def cmd_score(args: argparse.Namespace, config: AppConfig, manifest: RunManifest) -> int:
    items = load_ground_truth(args.ground_truth)
    predictions = load_predictions(args.predictions)
    if args.protocol == "box":
        proposals = load_proposals(args.proposals) if args.proposals else None
        report = score_box_protocol(items, predictions, args.thresholds, proposals)
    else:
        report = score_id_protocol(items, predictions)

    write_json(args.out, report.to_dict())
    table = report.to_table()
    print(table.to_string())
    if args.xlsx:
        table_to_xlsx(table, args.xlsx, sheet_name="Metrics", title=f"Grounding accuracy ({report.protocol} protocol)")
        manifest.outputs.append(args.xlsx)
    manifest.summary = {"overall_count": report.overall.count, "unresolved_ids": report.unresolved_ids}
    return 0


def _dataset_relations(path: str) -> List[SpatialRelation]:
    first = next((record for _, record in iter_records(path)), None)
    if first is None:
        raise GroundingError(f"Dataset {path} is empty")
    if "completion" in first:
        return [record.relation for record in read_training_records(path)]
    return [sample.scene.relation for sample in read_verified_samples(path)]


def cmd_stats(args: argparse.Namespace, config: AppConfig, manifest: RunManifest) -> int:
    counts = relation_counts(_dataset_relations(args.dataset))
    table = statistics_table(counts)
    print(table.to_string())
    write_json(args.out, {column: int(table[column].iloc[0]) for column in table.columns})
    if args.xlsx:
        table_to_xlsx(table, args.xlsx, sheet_name="Training data", title="Training data statistics")
        manifest.outputs.append(args.xlsx)
    manifest.summary = {"total": int(table["Total"].iloc[0])}
    return 0


def cmd_validate(args: argparse.Namespace, config: AppConfig, manifest: RunManifest) -> int:
    layouts = read_layouts(args.layouts)
    report = []
    for layout in layouts:
        violations = validate_scene(layout)
        if violations:
            report.append({"scene_id": layout.scene_id, "violations": [str(v) for v in violations]})
    write_records(args.out, report)
    invalid = len(report)
    manifest.summary = {"layouts": len(layouts), "invalid": invalid}
    if invalid:
        logger.error("✗ %d of %d layouts violate scene invariants, see %s", invalid, len(layouts), args.out)
        print(json.dumps({"error": "InvalidLayouts", "message": f"{invalid} of {len(layouts)} layouts are invalid"}),
              file=sys.stderr)
        return 1
    logger.info("✓ All %d layouts are valid", len(layouts))
    return 0


# -- argument parsing -----------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (keys: scene, endpoint, scenes_per_relation)")
    p.add_argument("--out", required=True, help="Output path")
    p.add_argument("--seed", type=int, help="Base random seed")


def _add_scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--min-objects", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("--margin", type=float)


def _add_endpoint_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--endpoint", help="openai, groq, mock or an OpenAI-compatible base URL")
    p.add_argument("--model", help="Model name")
    p.add_argument("--max-in-flight", type=int, help="Concurrent requests")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="main.py", description="3D visual grounding data factory and evaluation harness")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Generate scene layouts")
    _add_common(p)
    _add_scene_flags(p)
    p.add_argument("--relation", default="all", help="One relation, or 'all'")
    p.add_argument("--count", type=int, help="Scenes per relation")
    p.add_argument("--catalog", help="Object catalog file")
    p.add_argument("--templates", help="Query template file")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("prompt", help="Render collection prompts for layouts")
    _add_common(p)
    p.add_argument("--layouts", required=True)
    p.set_defaults(handler=cmd_prompt)

    p = sub.add_parser("collect", help="Collect and verify reasoning responses")
    _add_common(p)
    _add_endpoint_flags(p)
    p.add_argument("--layouts", required=True)
    p.add_argument("--resume", help="Resume file of completed scene ids")
    p.add_argument("--mock-error-rate", type=float, default=0.0, help="Wrong-answer rate of the mock endpoint")
    p.set_defaults(handler=cmd_collect)

    p = sub.add_parser("emit", help="Write training records from verified samples")
    _add_common(p)
    p.add_argument("--samples", required=True)
    p.add_argument("--no-reasoning", action="store_true", help="Completion is only the final answer line")
    size = p.add_mutually_exclusive_group()
    size.add_argument("--limit", type=int, help="Emit a seeded subset of at most N samples")
    size.add_argument("--fraction", type=float, help="Emit a seeded subset holding this fraction of the samples")
    p.set_defaults(handler=cmd_emit)

    p = sub.add_parser("infer", help="Ground benchmark queries against proposals")
    _add_common(p)
    _add_endpoint_flags(p)
    p.add_argument("--proposals", required=True)
    p.add_argument("--ground-truth", required=True, help="Query file (ground-truth records)")
    p.set_defaults(handler=cmd_infer)

    p = sub.add_parser("score", help="Score predictions against ground truth")
    _add_common(p)
    p.add_argument("--protocol", choices=["box", "id"], required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--proposals", help="Proposal file for id predictions under the box protocol")
    p.add_argument("--thresholds", type=float, nargs="+", default=[0.25, 0.5])
    p.add_argument("--xlsx", help="Also export the table to Excel")
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("stats", help="Per-relation counts of a dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="Verified samples or training records")
    p.add_argument("--xlsx", help="Also export the table to Excel")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("validate", help="Check layouts against the scene invariants")
    _add_common(p)
    p.add_argument("--layouts", required=True)
    p.set_defaults(handler=cmd_validate)

    return parser


def _inputs(args: argparse.Namespace) -> Dict[str, Optional[str]]:
    names = ("config", "layouts", "samples", "proposals", "ground_truth", "predictions", "dataset", "resume",
             "catalog", "templates")
    return {name: getattr(args, name) for name in names if getattr(args, name, None)}


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def run(argv: Sequence[str]) -> int:
    """Parse argv, run one subcommand and return its exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    configure_logging(args.log_level)
    load_dotenv()
    handler: Callable[..., int] = args.handler
    started = time.perf_counter()
    try:
        config = resolve_config(args)
        manifest = RunManifest(
            command=args.command,
            config=config.to_dict(),
            seed=config.scene.seed,
            inputs=_inputs(args),
            outputs=[args.out],
            started_at=_now(),
        )
        code = handler(args, config, manifest)
        manifest.finished_at = _now()
        manifest.duration_seconds = round(time.perf_counter() - started, 3)
        write_json(f"{args.out}.manifest.json", asdict(manifest))
        return code
    except GroundingError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1
    except Exception as e:
        logger.debug("Unexpected failure", exc_info=True)
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
