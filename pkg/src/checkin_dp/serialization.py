"""Locale-independent JSON and CSV output with round-trip-safe floats."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, Sequence

import numpy as np


def format_number(x) -> str:
    """17 significant digits for floats, plain digits for integers and booleans."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _encode(obj, parts: list) -> None:
    if obj is None:
        parts.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        parts.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        text = format_number(obj)
        # JSON has no literal for nan/inf; a string keeps the record parseable.
        parts.append(json.dumps(text) if text in ("nan", "inf", "-inf") else text)
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, dict):
        parts.append("{")
        for k, (key, value) in enumerate(obj.items()):
            if k:
                parts.append(", ")
            parts.append(json.dumps(str(key)) + ": ")
            _encode(value, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        parts.append("[")
        for k, value in enumerate(obj):
            if k:
                parts.append(", ")
            _encode(value, parts)
        parts.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Serializes ``obj`` to single-line JSON, keys in insertion order, floats at 17 digits."""
    parts: list = []
    _encode(obj, parts)
    return "".join(parts)


def write_csv(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([v if isinstance(v, str) else ("" if v is None else format_number(v))
                         for v in row])
    return buf.getvalue()
