"""
Plain CSV files with a commented key/value header.

Header lines read ``# key: value``; values that are not plain strings are
stored as JSON.  The body is written with ``repr``-exact floats so that
identical inputs give byte-identical bodies.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

CSV_SCHEMA = "coopg2-csv/1"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "value"):  # enums
        return obj.value
    raise TypeError(f"not serializable: {type(obj).__name__}")


def fingerprint(obj, length: int = 16) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:length]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path, columns: dict, header: dict) -> Path:
    """Write equal-length ``columns`` (ordered) under a ``# key: value`` header.

    The file is written to a temporary name and renamed, so readers never
    see a partial file.
    """
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    if len({len(d) for d in data}) > 1:
        raise ValueError("columns differ in length")
    lines = [f"# schema: {CSV_SCHEMA}"]
    for key, value in header.items():
        text = value if isinstance(value, str) else canonical_json(value)
        if "\n" in text:
            raise ValueError(f"header field {key!r} spans lines")
        lines.append(f"# {key}: {text}")
    lines.append(",".join(names))
    for row in zip(*data):
        lines.append(",".join(_fmt(x) for x in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)
    return path


def read_csv(path):
    """Return ``(columns, header)``; header values are JSON-decoded when possible."""
    header = {}
    names = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            value = value.strip()
            try:
                header[key.strip()] = json.loads(value)
            except json.JSONDecodeError:
                header[key.strip()] = value
        elif names is None:
            names = [n.strip() for n in line.split(",")]
        else:
            rows.append([float(x) for x in line.split(",")])
    if names is None:
        raise ValueError(f"{path}: no column line")
    arr = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return {n: arr[:, i] for i, n in enumerate(names)}, header


def body_digest(path) -> str:
    """SHA-256 of the non-comment lines (reproducibility checks)."""
    body = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return hashlib.sha256("\n".join(body).encode()).hexdigest()
