"""Byte-stable CSV and JSON record writers.

Floats are written with 17 significant digits so that every value survives a
round trip, and record keys are sorted.  Both writers return the exact text
they produce so callers can hash or compare it.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from dataclasses import asdict, is_dataclass

import numpy as np

__all__ = [
    "CHECK_COLUMNS",
    "BOUNDS_SCAN_COLUMNS",
    "DIM_SCAN_COLUMNS",
    "KERNEL_TABLE_COLUMNS",
    "format_float",
    "dumps_record",
    "loads_record",
    "csv_text",
    "emit_report",
]

CHECK_COLUMNS = (
    "name",
    "closed_form_value",
    "empirical_value",
    "mc_standard_error",
    "passed",
    "rule",
)
BOUNDS_SCAN_COLUMNS = ("R", "regime", "variance_bound", "b_uniform", "paper_literal_b")
DIM_SCAN_COLUMNS = ("D", "lambda1_exact", "lambda1_fisher")
KERNEL_TABLE_COLUMNS = ("tau", "h", "dh", "d2h")


def format_float(x):
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return asdict(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    return obj


def _encode(obj, out):
    obj = _plain(obj)
    if obj is None or isinstance(obj, bool):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj, key=str)):
            if i:
                out.append(", ")
            out.append(json.dumps(str(key)))
            out.append(": ")
            _encode(obj[key], out)
        out.append("}")
    elif isinstance(obj, list):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(", ")
            _encode(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_record(obj):
    """JSON text with sorted keys and 17-digit floats, newline terminated."""
    parts = []
    _encode(obj, parts)
    return "".join(parts) + "\n"


def loads_record(text):
    return json.loads(text)


def _cell(v):
    v = _plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_float(v)
    if v is None:
        return ""
    return str(v)


def csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row[c] for c in columns]
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def emit_report(payload, fmt, path=None, columns=None, rows=None):
    """Write ``payload`` as a record, or ``rows`` under ``columns`` as CSV.

    Returns the text written.  With ``path=None`` nothing touches the disk.
    I/O failures are re-raised as ``OSError`` naming the path.
    """
    if fmt == "record":
        text = dumps_record(payload)
    elif fmt == "csv":
        if columns is None:
            raise ValueError("csv output needs a column schema")
        text = csv_text(columns, rows or [])
    else:
        raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'record'")
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(exc.errno, f"cannot write report to {os.fspath(path)}: {exc.strerror}") from exc
    return text
