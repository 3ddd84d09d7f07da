"""JSON reports, their schema, and CSV trajectory traces."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np

from .suites import TRACE_COLUMNS, CheckReport

_PAIR = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_NUM_OR_NULL = {"type": ["number", "null"]}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["case", "checks", "pass"],
    "properties": {
        "case": {
            "type": "object",
            "required": ["n", "a", "z", "seed"],
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "a": {"type": "array", "items": _PAIR},
                "z": {"type": "array", "items": _PAIR},
                "seed": {"type": "integer"},
            },
        },
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "max_residual", "tol", "pass", "signs", "ms"],
                "properties": {
                    "name": {"type": "string"},
                    "max_residual": _NUM_OR_NULL,
                    "tol": {"type": "number"},
                    "pass": {"type": "boolean"},
                    "signs": {"type": ["object", "null"]},
                    "ms": {"type": "number", "minimum": 0},
                    "message": {"type": "string"},
                    "suite": {"type": "string"},
                    "singular": {"type": "boolean"},
                },
            },
        },
        "pass": {"type": "boolean"},
        "exit_code": {"type": "integer"},
    },
}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def report_dict(report: CheckReport) -> dict:
    return _clean(
        {
            "case": report.case,
            "checks": [c.as_json() for c in report.checks],
            "pass": report.passed,
            "exit_code": report.exit_code(),
        }
    )


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, REPORT_SCHEMA)


def strip_timing(doc: dict) -> dict:
    """Copy without wall-time fields, for determinism comparisons."""
    out = json.loads(json.dumps(doc))
    for c in out["checks"]:
        c.pop("ms", None)
    return out


def emit_report(report: CheckReport, path: str | Path | None, fmt: str = "json") -> str:
    """Serialize, validate and (if a path is given) write the report."""
    if fmt != "json":
        raise ValueError(f"unsupported report format {fmt!r}")
    doc = report_dict(report)
    validate_report(doc)
    text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def write_trace(rows: np.ndarray, path: str | Path) -> None:
    """One row per integration step (t = 0 included); blank cells for absent data."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in rows:
            w.writerow(["" if not np.isfinite(v) else repr(float(v)) for v in row])


def emit_traces(report: CheckReport, directory: str | Path) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for key, rows in sorted(report.traces.items()):
        p = d / f"trace_{key}.csv"
        write_trace(rows, p)
        written.append(p)
    return written
