"""Snapshot and CSV files.

Every float is written with ``repr``, the shortest decimal that reads back
to the same double, so files round-trip bit for bit.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS
from .mesh import MeshGeometry, MeshKind, build_mesh


def _fmt(x):
    return repr(float(x))


def format_snapshot(mesh: MeshGeometry, t, u) -> str:
    u = mesh.check(u)
    lines = [f"mesh {mesh.kind.value} {' '.join(str(r) for r in mesh.resolution)}", f"t {_fmt(t)}"]
    lines.extend(",".join(_fmt(v) for v in row) for row in u)
    return "\n".join(lines) + "\n"


def write_snapshot(path, mesh: MeshGeometry, t, u):
    Path(path).write_text(format_snapshot(mesh, t, u))


def read_snapshot(path):
    """Return ``(mesh, t, u)`` from a snapshot file."""
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2:
        raise ValueError(f"{path}: truncated snapshot")
    head = lines[0].split()
    if len(head) < 3 or head[0] != "mesh":
        raise ValueError(f"{path}: line 1 should read 'mesh <kind> <resolution>'")
    kind = MeshKind(head[1])
    res = [int(v) for v in head[2:]]
    mesh = build_mesh(kind, res[0] if kind is MeshKind.TORUS else res)
    tag, _, tval = lines[1].partition(" ")
    if tag != "t":
        raise ValueError(f"{path}: line 2 should read 't <float>'")
    rows = [[float(v) for v in line.split(",")] for line in lines[2:] if line.strip()]
    u = np.array(rows, dtype=float)
    return mesh, float(tval), mesh.check(u, "snapshot")


def write_series(path, records):
    """DiagnosticsRecord rows as CSV with a header line."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow([_fmt(v) for v in rec.as_row()])


def read_series(path):
    """Columns of a series file as a dict of float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}
