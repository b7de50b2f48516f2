"""Line-delimited JSON record files shared by every pipeline stage"""
import functools
import json
import os
from typing import Any, Dict, Iterable, Iterator, List, Tuple

import jsonlines

from errors import GroundingError, RecordSchemaError
from scene.generator import SceneLayout
from scene.serialization import layout_from_record, layout_to_record

_dumps = functools.partial(json.dumps, ensure_ascii=False, separators=(", ", ": "))


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_records(path: str, records: Iterable[Dict[str, Any]], append: bool = False) -> int:
    """Write records one per line, creating parent directories; returns the count"""
    _ensure_parent(path)
    count = 0
    try:
        with jsonlines.open(path, mode="a" if append else "w", dumps=_dumps) as writer:
            for record in records:
                writer.write(record)
                count += 1
    except OSError as e:
        raise GroundingError(f"Cannot write {path}: {e}")
    return count


def iter_records(path: str) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (physical line number, record) pairs; blank lines are skipped but still counted"""
    try:
        with open(path, encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise RecordSchemaError(path, line_number, f"invalid JSON: {e.msg}")
                if not isinstance(record, dict):
                    raise RecordSchemaError(path, line_number, "expected a JSON object")
                yield line_number, record
    except OSError as e:
        raise GroundingError(f"Cannot read {path}: {e}")


def read_records(path: str) -> List[Dict[str, Any]]:
    return [record for _, record in iter_records(path)]


def write_layouts(path: str, layouts: Iterable[SceneLayout]) -> int:
    return write_records(path, (layout_to_record(layout) for layout in layouts))


def read_layouts(path: str) -> List[SceneLayout]:
    """Read layout records, reporting schema errors with their line numbers"""
    return [layout_from_record(record, path, line_number) for line_number, record in iter_records(path)]


def write_json(path: str, data: Any) -> None:
    """Pretty-printed JSON for manifests, stats and reports"""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
        f.write("\n")
