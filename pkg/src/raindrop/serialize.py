"""Trace tables and JSON documents on disk.

CSV floats are written with 17 significant digits and JSON floats with the
shortest repr that round-trips, so CSV -> JSON -> CSV reproduces the bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ode import DomainError
from .profile import AngleProfile, Curve, curvature_profile

TRACE_COLUMNS = ("s", "theta", "kappa", "kappa_s", "kappa_ss", "x", "y")


@dataclass
class TraceTable:
    columns: dict
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.columns["s"])

    def curve(self) -> Curve:
        s = np.asarray(self.columns["s"], dtype=float)
        ds = float(s[1] - s[0]) if len(s) > 1 else 0.0
        return Curve(s, np.asarray(self.columns["x"], dtype=float),
                     np.asarray(self.columns["y"], dtype=float), ds)


def trace_table(profile: AngleProfile, curve: Curve, metadata: dict | None = None) -> TraceTable:
    cp = curvature_profile(profile, curve.s)
    cols = {
        "s": curve.s, "theta": cp.theta, "kappa": cp.kappa, "kappa_s": cp.kappa_s,
        "kappa_ss": cp.kappa_ss, "x": curve.x, "y": curve.y,
    }
    return TraceTable({k: [float(v) for v in cols[k]] for k in TRACE_COLUMNS}, dict(metadata or {}))


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def sidecar(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_trace_csv(table: TraceTable, path: Path) -> None:
    lines = [",".join(TRACE_COLUMNS)]
    cols = [table.columns[c] for c in TRACE_COLUMNS]
    for row in zip(*cols):
        lines.append(",".join("%.17g" % v for v in row))
    write_text(path, "\n".join(lines) + "\n")
    write_text(sidecar(path), dumps_json(table.metadata))


def write_trace_json(table: TraceTable, path: Path) -> None:
    doc = {"columns": list(TRACE_COLUMNS), "data": {c: table.columns[c] for c in TRACE_COLUMNS},
           "metadata": table.metadata}
    write_text(path, dumps_json(doc))


def read_trace_csv(path: Path) -> TraceTable:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    rows = [ln for ln in text.split("\n") if ln]
    if not rows:
        raise DomainError(f"{path}: empty trace")
    header = tuple(rows[0].split(","))
    if header != TRACE_COLUMNS:
        raise DomainError(f"{path}: unexpected header {rows[0]!r}")
    cols: dict = {c: [] for c in TRACE_COLUMNS}
    for ln in rows[1:]:
        vals = ln.split(",")
        if len(vals) != len(TRACE_COLUMNS):
            raise DomainError(f"{path}: malformed row {ln!r}")
        for c, v in zip(TRACE_COLUMNS, vals):
            cols[c].append(float(v))
    meta = {}
    if sidecar(path).exists():
        meta = json.loads(sidecar(path).read_text(encoding="utf-8"))
    return TraceTable(cols, meta)


def read_trace_json(path: Path) -> TraceTable:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        data = doc["data"]
        cols = {c: [float(v) for v in data[c]] for c in TRACE_COLUMNS}
    except (KeyError, TypeError) as exc:
        raise DomainError(f"{path}: not a trace document ({exc})") from exc
    return TraceTable(cols, doc.get("metadata", {}))


def read_trace(path: Path) -> TraceTable:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return read_trace_json(path)
    return read_trace_csv(path)


def write_trace(table: TraceTable, path: Path, fmt: str) -> None:
    if fmt == "csv":
        write_trace_csv(table, path)
    elif fmt == "json":
        write_trace_json(table, path)
    else:
        raise DomainError(f"unknown format {fmt!r}")
