"""Serialisation of reports, sweeps and traces; atomic file output.

Floats are written with ``repr`` (shortest round-trip form, always ``.``
as decimal separator), non-finite floats become JSON ``null``, and files
are written to a temporary name in the target directory and renamed into
place.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

SWEEP_CSV_HEADER = ("k", "n_blocks", "estimate", "std_error", "gap", "gap_cv",
                    "gap_cv_std_error", "var_x", "var_y")
COUPLE_CSV_HEADER = ("coupling", "k", "n", "gap", "gap_std_error", "var_x", "var_y",
                     "prop2_bound", "corollary_bound")

_NUMBER = {"type": "number"}
_NULLABLE_NUMBER = {"type": ["number", "null"]}
_ORDER_MAP = {
    "type": "object",
    "properties": {"1": _NUMBER, "2": _NUMBER},
    "required": ["1", "2"],
    "additionalProperties": False,
}

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "GapBoundReport",
    "type": "object",
    "required": [
        "gap", "prop2_bound", "corollary_bound", "mu_x", "sigma_x", "sigma_y",
        "applicable_prop2", "applicable_corollary", "n", "seed",
    ],
    "properties": {
        "gap": _NUMBER,
        "gap_std_error": {"type": "number", "minimum": 0},
        "gap_exact": _NULLABLE_NUMBER,
        "prop1_cx": _ORDER_MAP,
        "prop1_cy": _ORDER_MAP,
        "prop2_bound": _NULLABLE_NUMBER,
        "corollary_bound": _NULLABLE_NUMBER,
        "mu_x": _NUMBER,
        "sigma_x": {"type": "number", "minimum": 0},
        "sigma_y": {"type": "number", "minimum": 0},
        "mu_y": _NUMBER,
        "median_x": _NUMBER,
        "median_y": _NUMBER,
        "applicable_prop2": {"type": "boolean"},
        "applicable_corollary": {"type": "boolean"},
        "p_v": _NUMBER,
        "log_evidence": _NUMBER,
        "log_normalizer": _NUMBER,
        "n": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "coupling": {"enum": ["iid", "antithetic", "stratified"]},
        "mode": {"type": "string"},
        "error_bars": {"type": "object"},
    },
    "allOf": [
        {"if": {"properties": {"applicable_prop2": {"const": False}}},
         "then": {"properties": {"prop2_bound": {"type": "null"}}}},
        {"if": {"properties": {"applicable_corollary": {"const": False}}},
         "then": {"properties": {"corollary_bound": {"type": "null"}}}},
    ],
}


def clean(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps_json(obj: Any) -> str:
    return json.dumps(clean(obj), indent=2, allow_nan=False) + "\n"


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return repr(f) if math.isfinite(f) else ""
    return str(v)


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
