"""File formats: JSONL scenario datasets and versioned JSON reports.

Floats are written with 17 significant digits so that every value reads
back to the identical double.  Writers never emit trailing whitespace and
always end files with a single newline.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

from .types import InvalidInputError, ScenarioRecord, StepContext

FORMAT_VERSION = 1
STEP_KEYS = ("logits", "intent_to_action", "true_intent")
RECORD_KEYS = ("scenario_id", "steps")


class DatasetFormatError(InvalidInputError):
    """Malformed dataset line; ``line`` is 1-based."""

    def __init__(self, path: str, line: int, reason: str) -> None:
        super().__init__(f"{path}: line {line}: {reason}")
        self.path = path
        self.line = line


def format_float(x: float) -> str:
    """17-significant-digit representation; non-finite values become ``null``."""
    x = float(x)
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    # keep a marker so the value reads back as a float
    if "." not in s and "e" not in s:
        s += ".0"
    return s


def _scalar(v: Any) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format_float(v)
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if hasattr(v, "item"):  # numpy scalar
        return _scalar(v.item())
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _is_flat(v: Any) -> bool:
    """Containers holding no dicts are written on one line."""
    if isinstance(v, dict):
        return all(not isinstance(x, dict) and _is_flat(x) for x in v.values())
    if isinstance(v, (list, tuple)):
        return all(not isinstance(x, dict) and _is_flat(x) for x in v)
    return True


def _inline(v: Any) -> str:
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_inline(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_inline(x) for x in v) + "]"
    return _scalar(v)


def _block(v: Any, depth: int) -> str:
    if _is_flat(v) or depth >= 2:
        return _inline(v)
    pad, inner = "  " * depth, "  " * (depth + 1)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_block(x, depth + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if not v:
        return "[]"
    items = [f"{inner}{_block(x, depth + 1)}" for x in v]
    return "[\n" + ",\n".join(items) + "\n" + pad + "]"


def dumps(obj: Any) -> str:
    """Deterministic JSON text; key order is insertion order."""
    return _block(obj, 0) + "\n"


def write_text(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_json(path: str | Path, obj: Any) -> None:
    write_text(path, dumps(obj))


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(str(path), exc.lineno, exc.msg) from None


# -- datasets ---------------------------------------------------------------------

def record_to_line(record: ScenarioRecord) -> str:
    steps = []
    for s in record.steps:
        logits = ", ".join(format_float(v) for v in s.logits)
        amap = ", ".join(str(int(a)) for a in s.intent_to_action)
        steps.append(f'{{"logits": [{logits}], "intent_to_action": [{amap}], "true_intent": {int(s.true_intent)}}}')
    return f'{{"scenario_id": {json.dumps(record.scenario_id, ensure_ascii=False)}, "steps": [{", ".join(steps)}]}}'


def record_from_obj(obj: Any) -> ScenarioRecord:
    if not isinstance(obj, dict) or tuple(obj) != RECORD_KEYS:
        raise InvalidInputError(f"record must be an object with keys {list(RECORD_KEYS)} in this order")
    sid, steps = obj["scenario_id"], obj["steps"]
    if not isinstance(sid, str):
        raise InvalidInputError("scenario_id must be a string")
    if not isinstance(steps, list) or not steps:
        raise InvalidInputError("steps must be a non-empty list")
    out = []
    for j, st in enumerate(steps):
        if not isinstance(st, dict) or tuple(st) != STEP_KEYS:
            raise InvalidInputError(f"step {j} must be an object with keys {list(STEP_KEYS)} in this order")
        logits, amap, z = st["logits"], st["intent_to_action"], st["true_intent"]
        if not isinstance(logits, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in logits):
            raise InvalidInputError(f"step {j}: logits must be a list of numbers")
        if not isinstance(amap, list) or any(isinstance(a, bool) or not isinstance(a, int) for a in amap):
            raise InvalidInputError(f"step {j}: intent_to_action must be a list of integers")
        if isinstance(z, bool) or not isinstance(z, int):
            raise InvalidInputError(f"step {j}: true_intent must be an integer")
        out.append(StepContext(tuple(float(v) for v in logits), tuple(amap), z))
    return ScenarioRecord(sid, tuple(out))


def write_dataset(path: str | Path, records: Iterable[ScenarioRecord]) -> None:
    write_text(path, "".join(record_to_line(r) + "\n" for r in records))


def read_dataset(path: str | Path) -> list[ScenarioRecord]:
    """Parse a JSONL dataset; errors name the offending 1-based line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise DatasetFormatError(str(path), lineno, "blank line")
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(str(path), lineno, f"malformed JSON ({exc.msg})") from None
            try:
                records.append(record_from_obj(obj))
            except InvalidInputError as exc:
                raise DatasetFormatError(str(path), lineno, str(exc)) from None
    if not records:
        raise DatasetFormatError(str(path), 1, "dataset is empty")
    return records


# -- delimited text ----------------------------------------------------------------

def csv_cell(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format_float(v)
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    lines = [",".join(header)] + [",".join(csv_cell(v) for v in row) for row in rows]
    write_text(path, "\n".join(lines) + "\n")
