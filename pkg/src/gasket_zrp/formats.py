"""Plain-text graph files and grid-function CSVs."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .gasket import GasketGraph, build_gasket

__all__ = [
    "GRAPH_FORMAT",
    "GRID_FORMAT",
    "write_graph",
    "read_graph",
    "write_grid_function",
    "read_grid_function",
]

GRAPH_FORMAT = "gasket_zrp-graph v1"
GRID_FORMAT = "gasket_zrp-gridfunction v1"


def write_graph(graph: GasketGraph, path=None, metadata: dict | None = None) -> str:
    """Line-oriented export: a ``# {json}`` header, then vertex and edge lines.

    Vertex lines read ``vertex <id> <a> <b>`` in integer lattice
    coordinates; edge lines read ``edge <id1> <id2>`` with id1 < id2.
    """
    meta = {
        "format": GRAPH_FORMAT,
        "level": graph.level,
        "vertices": graph.n_vertices,
        "edges": graph.n_edges,
    }
    meta.update(metadata or {})
    lines = ["# " + json.dumps(meta, sort_keys=True)]
    lines += [f"vertex {i} {a} {b}" for i, (a, b) in enumerate(graph.coords.tolist())]
    lines += [f"edge {i} {j}" for i, j in graph.edges.tolist()]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_graph(path) -> tuple[GasketGraph, dict]:
    """Parse a graph file and check it against a fresh construction."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError(f"{path}: missing metadata header")
    meta = json.loads(lines[0][2:])
    if meta.get("format") != GRAPH_FORMAT:
        raise ValueError(f"{path}: unsupported format {meta.get('format')!r}")
    coords, edges = [], []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "vertex" and len(parts) == 4:
            coords.append([int(parts[2]), int(parts[3])])
        elif parts[0] == "edge" and len(parts) == 3:
            edges.append([int(parts[1]), int(parts[2])])
        else:
            raise ValueError(f"{path}:{ln}: cannot parse {line!r}")
    graph = build_gasket(int(meta["level"]))
    if not (np.array_equal(graph.coords, coords) and np.array_equal(graph.edges, edges)):
        raise ValueError(f"{path}: contents do not match the level-{meta['level']} gasket")
    return graph, meta


def write_grid_function(f, graph: GasketGraph, path=None, metadata: dict | None = None) -> str:
    """CSV with columns ``vertex,value``; values written with full precision."""
    f = np.asarray(f, dtype=float)
    if f.shape != (graph.n_vertices,):
        raise ValueError(f"need {graph.n_vertices} values, got shape {f.shape}")
    meta = {"format": GRID_FORMAT, "level": graph.level}
    meta.update(metadata or {})
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["vertex", "value"])
    for i, v in enumerate(f.tolist()):
        w.writerow([i, repr(v)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_grid_function(path, graph: GasketGraph | None = None) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`write_grid_function`.

    Every vertex must appear exactly once. When ``graph`` is given its level
    must match the file's.
    """
    lines = Path(path).read_text().splitlines()
    meta = {}
    if lines and lines[0].startswith("# "):
        meta = json.loads(lines[0][2:])
        lines = lines[1:]
    rows = list(csv.reader(lines))
    if not rows or rows[0] != ["vertex", "value"]:
        raise ValueError(f"{path}: expected a 'vertex,value' header")
    level = meta.get("level", graph.level if graph is not None else None)
    if graph is not None and level != graph.level:
        raise ValueError(f"{path}: level {level} does not match graph level {graph.level}")
    ids = np.array([int(r[0]) for r in rows[1:] if r], dtype=np.int64)
    vals = np.array([float(r[1]) for r in rows[1:] if r])
    size = graph.n_vertices if graph is not None else len(ids)
    if len(ids) != size or not np.array_equal(np.sort(ids), np.arange(size)):
        raise ValueError(f"{path}: vertex ids must cover 0..{size - 1} exactly once")
    out = np.empty(size)
    out[ids] = vals
    return out, meta
