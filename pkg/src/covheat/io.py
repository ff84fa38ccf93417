"""JSON model files.

Schema::

    {"rank": int,
     "vertices": [{"id": str, "m": float, "V": matrix}, ...],
     "edges":    [{"u": str, "v": str, "b": float, "Phi": matrix}, ...],
     "sections": {name: {vertex id: [c, ...]}}}

A matrix is a list of rows; every complex entry is an ``[re, im]`` pair (a
bare real number is also accepted).  ``Phi`` on the record ``(u, v)`` is the
map F_u -> F_v.  ``m`` defaults to 1, ``V`` to zero and ``Phi`` to the
identity.  Each unordered vertex pair may appear in at most one edge record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bundle import BundleData, make_bundle, section_from_mapping, validate_bundle
from .errors import ParseError, RankMismatch, ValidationFailed
from .graph import WeightedGraph, build_graph

SCHEMA_KEYS = {"rank", "vertices", "edges", "sections"}


@dataclass
class Model:
    graph: WeightedGraph
    bundle: BundleData
    sections: dict[str, np.ndarray] = field(default_factory=dict)


def _complex(v, where) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(float(v), 0.0)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in v):
        return complex(float(v[0]), float(v[1]))
    raise ParseError(f"{where}: complex entries must be [re, im] pairs, got {v!r}", [where])


def _matrix(rows, where) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ParseError(f"{where}: matrix must be a non-empty list of rows", [where])
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ParseError(f"{where}: ragged matrix rows", [where])
    return np.array([[_complex(v, where) for v in r] for r in rows], dtype=complex)


def _vector(vals, where) -> np.ndarray:
    if not isinstance(vals, list):
        raise ParseError(f"{where}: section value must be a list", [where])
    return np.array([_complex(v, where) for v in vals], dtype=complex)


def parse_model_data(data: dict, strict: bool = True) -> Model:
    """Build a model from already-decoded JSON data.

    With ``strict`` (the default) non-unitary connections or non-Hermitian
    potentials raise :class:`ValidationFailed`; otherwise they are left for
    the caller to report.
    """
    if not isinstance(data, dict):
        raise ParseError("top level must be a JSON object", ["<root>"])
    unknown = set(data) - SCHEMA_KEYS
    if unknown:
        raise ParseError(f"unknown top-level keys {sorted(unknown)}", ["<root>"])
    rank = data.get("rank")
    if not isinstance(rank, int) or isinstance(rank, bool) or rank < 1:
        raise ParseError(f"rank must be a positive integer, got {rank!r}", ["rank"])

    verts = data.get("vertices")
    if not isinstance(verts, list) or not verts:
        raise ParseError("vertices must be a non-empty list", ["vertices"])
    ids, measure, pots = [], {}, {}
    for k, rec in enumerate(verts):
        where = f"vertices[{k}]"
        if not isinstance(rec, dict) or "id" not in rec:
            raise ParseError(f"{where}: vertex record needs an 'id'", [where])
        x = rec["id"]
        if not isinstance(x, str):
            raise ParseError(f"{where}: vertex id must be a string", [where])
        ids.append(x)
        m = rec.get("m", 1.0)
        if not isinstance(m, (int, float)) or isinstance(m, bool):
            raise ParseError(f"{where}: measure must be a number", [where])
        measure[x] = float(m)
        if "V" in rec:
            pots[x] = _matrix(rec["V"], f"{where}.V")

    edges_raw = data.get("edges", [])
    if not isinstance(edges_raw, list):
        raise ParseError("edges must be a list", ["edges"])
    seen: dict[frozenset, int] = {}
    raw_edges, conn = [], {}
    for k, rec in enumerate(edges_raw):
        where = f"edges[{k}]"
        if not isinstance(rec, dict) or "u" not in rec or "v" not in rec:
            raise ParseError(f"{where}: edge record needs 'u' and 'v'", [where])
        u, v = rec["u"], rec["v"]
        b = rec.get("b", 1.0)
        if not isinstance(b, (int, float)) or isinstance(b, bool):
            raise ParseError(f"{where}: weight must be a number", [where])
        key = frozenset((u, v))
        if key in seen:
            first = seen[key]
            other = edges_raw[first]
            detail = "different weights" if other.get("b", 1.0) != b else "duplicate record"
            raise ParseError(
                f"edge {{{u!r}, {v!r}}} given twice ({detail}) in edges[{first}] and {where}",
                [f"edges[{first}]", where],
            )
        seen[key] = k
        raw_edges.append((u, v, float(b)))
        if "Phi" in rec:
            conn[(u, v)] = _matrix(rec["Phi"], f"{where}.Phi")

    g = build_graph(ids, raw_edges, measure)

    for (u, v), M in conn.items():
        if M.shape != (rank, rank):
            raise RankMismatch(f"connection on ({u!r}, {v!r}) is {M.shape[0]}x{M.shape[1]} but rank is {rank}")
    for x, M in pots.items():
        if M.shape != (rank, rank):
            raise RankMismatch(f"potential at {x!r} is {M.shape[0]}x{M.shape[1]} but rank is {rank}")
    eye = np.eye(rank, dtype=complex)
    full_conn = {}
    for i, j, _ in g.edges():
        x, y = g.vertices[i], g.vertices[j]
        if (x, y) in conn:
            full_conn[(x, y)] = conn[(x, y)]
        elif (y, x) in conn:
            full_conn[(y, x)] = conn[(y, x)]
        else:
            full_conn[(x, y)] = eye
    bundle = make_bundle(g, rank, full_conn, pots)
    report = validate_bundle(g, bundle)
    if strict and not report.passed:
        raise ValidationFailed("; ".join(report.failures()))

    sections = {}
    raw_sec = data.get("sections", {}) or {}
    if not isinstance(raw_sec, dict):
        raise ParseError("sections must be an object", ["sections"])
    for name, vals in raw_sec.items():
        where = f"sections.{name}"
        if not isinstance(vals, dict):
            raise ParseError(f"{where}: expected an object mapping vertex ids to vectors", [where])
        sections[name] = section_from_mapping(
            g, rank, {x: _vector(vec, f"{where}.{x}") for x, vec in vals.items()}
        )
    return Model(g, bundle, sections)


def parse_model(path, strict: bool = True) -> Model:
    """Read and validate a model file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                         [f"line {exc.lineno}"]) from exc
    return parse_model_data(data, strict)


def _pair(z) -> list[float]:
    return [float(z.real), float(z.imag)]


def _mat(M) -> list:
    return [[_pair(z) for z in row] for row in np.asarray(M)]


def model_to_data(model: Model) -> dict:
    g, b = model.graph, model.bundle
    return {
        "rank": b.rank,
        "vertices": [
            {"id": x, "m": float(g.measure[i]), "V": _mat(b.potential[i])} for i, x in enumerate(g.vertices)
        ],
        "edges": [
            {"u": g.vertices[i], "v": g.vertices[j], "b": float(w), "Phi": _mat(b.connection[(i, j)])}
            for i, j, w in g.edges()
        ],
        "sections": {
            name: {x: [_pair(z) for z in f[i]] for i, x in enumerate(g.vertices)}
            for name, f in model.sections.items()
        },
    }


def serialize_model(model: Model) -> str:
    """JSON text with one vertex, edge or section record per line."""
    data = model_to_data(model)

    def block(lines, open_, close):
        return f"{open_}\n" + ",\n".join("  " + ln for ln in lines) + f"\n {close}" if lines else open_ + close

    verts = block([json.dumps(r) for r in data["vertices"]], "[", "]")
    edges = block([json.dumps(r) for r in data["edges"]], "[", "]")
    secs = block([f"{json.dumps(k)}: {json.dumps(v)}" for k, v in data["sections"].items()], "{", "}")
    return f'{{\n "rank": {data["rank"]},\n "vertices": {verts},\n "edges": {edges},\n "sections": {secs}\n}}'



def write_model(model: Model, path) -> None:
    Path(path).write_text(serialize_model(model) + "\n")
