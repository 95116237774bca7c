"""Deterministic CSV and JSON writers.

CSV cells use comma separation, '.' decimals, LF line endings and repr-level
float precision, so equal numbers always produce equal bytes.  Missing values
(None or NaN) become empty cells.  Timestamps belong in run metadata only,
never in data files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        return "" if math.isnan(x) else repr(x)
    raise TypeError(f"cannot format {value!r} for CSV output")


def write_csv(path, header, rows) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(cell) for cell in row])


def jsonable(obj):
    """Recursively convert numpy containers and scalars to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    with path.open("w") as handle:
        json.dump(jsonable(obj), handle, indent=2, sort_keys=True)
        handle.write("\n")
