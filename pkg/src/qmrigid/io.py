"""Flat-file persistence: distance/point CSVs and versioned JSON reports."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .metric_core import FiniteMetricSpace

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


# -- CSV


def write_distance_csv(path, space: FiniteMetricSpace) -> None:
    """First line is n, then n rows of distances (repr precision, round-trips exactly)."""
    with open(path, "w", newline="") as f:
        f.write(f"{space.n}\n")
        w = csv.writer(f)
        for row in space.dist:
            w.writerow([repr(float(x)) for x in row])


def read_distance_csv(path, label: str | None = None, check_triangle: bool | None = None):
    with open(path, newline="") as f:
        first = f.readline().strip()
        try:
            n = int(first)
        except ValueError:
            raise SchemaError(f"{path}: first line must be the point count, got {first!r}") from None
        rows = [list(map(float, r)) for r in csv.reader(f) if r]
    d = np.array(rows, dtype=float)
    if d.shape != (n, n):
        raise SchemaError(f"{path}: expected a {n}x{n} matrix, got shape {d.shape}")
    return FiniteMetricSpace(d, None, label or Path(path).stem, check_triangle=check_triangle)


def write_points_csv(path, points) -> None:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id"] + [f"x{i + 1}" for i in range(pts.shape[1])])
        for i, row in enumerate(pts):
            w.writerow([i] + [repr(float(x)) for x in row])


def read_points_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        r = csv.reader(f)
        head = next(r, None)
        if not head or head[0] != "id":
            raise SchemaError(f"{path}: expected a header 'id,x1,...'")
        rows = [row for row in r if row]
    pts = np.array([[float(x) for x in row[1:]] for row in rows], dtype=float)
    ids = [int(row[0]) for row in rows]
    return pts[np.argsort(ids, kind="stable")]


# -- JSON


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(payload) -> str:
    return json.dumps(to_jsonable(payload), indent=1, sort_keys=True) + "\n"


def write_report(path, kind: str, body: dict, provenance: dict) -> str:
    """Write a report with schema version and provenance; returns its sha256."""
    text = dumps({"schema": SCHEMA_VERSION, "kind": kind, "provenance": provenance, **body})
    Path(path).write_text(text)
    return sha256_text(text)


def read_report(path_or_dict) -> dict:
    rep = path_or_dict if isinstance(path_or_dict, dict) else json.loads(Path(path_or_dict).read_text())
    v = rep.get("schema")
    if v != SCHEMA_VERSION:
        raise SchemaError(f"unsupported report schema {v!r} (this version reads {SCHEMA_VERSION})")
    return rep


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()
