"""Finite connected weighted graphs (X, b, m)."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    Disconnected,
    DuplicateEdge,
    DuplicateVertex,
    EmptySubset,
    NegativeWeight,
    NonPositiveMeasure,
    SelfLoop,
    UnknownVertex,
)


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Validated weighted graph.

    Vertex identifiers are opaque strings; numeric code works with the dense
    index given by their position in ``vertices``.  Edge weights are stored
    once per unordered pair, keyed ``(i, j)`` with ``i < j``.
    """

    vertices: tuple[str, ...]
    measure: np.ndarray
    weights: Mapping[tuple[int, int], float]
    index: Mapping[str, int] = field(repr=False)
    # neighbours[i] -> sorted tuple of (j, b(i, j))
    neighbours: tuple[tuple[tuple[int, float], ...], ...] = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def idx(self, x: str | int) -> int:
        if isinstance(x, (int, np.integer)):
            if 0 <= x < self.n:
                return int(x)
            raise UnknownVertex(f"vertex index {x} out of range")
        try:
            return self.index[x]
        except KeyError:
            raise UnknownVertex(f"unknown vertex {x!r}") from None

    def weight(self, x, y) -> float:
        i, j = self.idx(x), self.idx(y)
        if i > j:
            i, j = j, i
        return self.weights.get((i, j), 0.0)

    def edges(self) -> list[tuple[int, int, float]]:
        """Canonical edges ``(i, j, b)`` with ``i < j``, sorted."""
        return [(i, j, b) for (i, j), b in sorted(self.weights.items())]

    def weight_matrix(self) -> np.ndarray:
        B = np.zeros((self.n, self.n))
        for (i, j), b in self.weights.items():
            B[i, j] = B[j, i] = b
        return B

    def deg1(self) -> np.ndarray:
        return np.array([sum(b for _, b in nb) for nb in self.neighbours], dtype=float)

    def degm(self) -> np.ndarray:
        return self.deg1() / self.measure

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return (
            self.vertices == other.vertices
            and np.array_equal(self.measure, other.measure)
            and dict(self.weights) == dict(other.weights)
        )

    __hash__ = object.__hash__


@dataclass(frozen=True)
class VertexSubset:
    graph: WeightedGraph
    members: frozenset[int]

    def __post_init__(self):
        if not self.members:
            raise EmptySubset("vertex subset must be nonempty")
        for i in self.members:
            if not 0 <= i < self.graph.n:
                raise UnknownVertex(f"vertex index {i} not in parent graph")

    @classmethod
    def of(cls, g: WeightedGraph, ids: Iterable) -> "VertexSubset":
        return cls(g, frozenset(g.idx(x) for x in ids))

    def sorted_indices(self) -> list[int]:
        return sorted(self.members)

    def ids(self) -> set[str]:
        return {self.graph.vertices[i] for i in self.members}

    def mask(self) -> np.ndarray:
        out = np.zeros(self.graph.n, dtype=bool)
        out[list(self.members)] = True
        return out

    def __contains__(self, x) -> bool:
        return self.graph.idx(x) in self.members

    def __len__(self) -> int:
        return len(self.members)


def build_graph(raw_vertices: Iterable[str], raw_edges: Iterable, raw_measure=None) -> WeightedGraph:
    """Validate raw data into a :class:`WeightedGraph`.

    ``raw_edges`` holds ``(u, v, b)`` triples describing unordered pairs;
    each pair may appear only once.  Zero weights are dropped.  ``raw_measure``
    maps vertex id to m(x) and defaults to the counting measure.
    """
    vertices = tuple(str(v) for v in raw_vertices)
    index: dict[str, int] = {}
    for i, v in enumerate(vertices):
        if v in index:
            raise DuplicateVertex(f"duplicate vertex {v!r}")
        index[v] = i

    if raw_measure is None:
        measure = np.ones(len(vertices))
    else:
        measure = np.empty(len(vertices))
        for v in vertices:
            if v not in raw_measure:
                raise NonPositiveMeasure(f"no measure given for vertex {v!r}")
            measure[index[v]] = float(raw_measure[v])
        extra = set(raw_measure) - set(vertices)
        if extra:
            raise UnknownVertex(f"measure given for unknown vertices {sorted(extra)}")
    for v, mv in zip(vertices, measure):
        if not (mv > 0 and np.isfinite(mv)):
            raise NonPositiveMeasure(f"m({v!r}) = {mv} is not positive")

    weights: dict[tuple[int, int], float] = {}
    seen: set[tuple[int, int]] = set()
    for u, v, b in raw_edges:
        u, v, b = str(u), str(v), float(b)
        if u not in index or v not in index:
            missing = u if u not in index else v
            raise UnknownVertex(f"edge ({u!r}, {v!r}) references unknown vertex {missing!r}")
        if u == v:
            raise SelfLoop(f"self loop at {u!r}")
        if not np.isfinite(b) or b < 0:
            raise NegativeWeight(f"b({u!r}, {v!r}) = {b} is negative")
        i, j = sorted((index[u], index[v]))
        if (i, j) in seen:
            raise DuplicateEdge(f"edge {{{u!r}, {v!r}}} listed twice")
        seen.add((i, j))
        if b > 0:
            weights[(i, j)] = b

    nbrs: list[list[tuple[int, float]]] = [[] for _ in vertices]
    for (i, j), b in weights.items():
        nbrs[i].append((j, b))
        nbrs[j].append((i, b))
    neighbours = tuple(tuple(sorted(nb)) for nb in nbrs)

    g = WeightedGraph(vertices, measure, weights, index, neighbours)
    if not vertices:
        raise Disconnected("graph has no vertices")
    reached = sum(len(layer) for layer in _bfs_layers(g, 0))
    if reached != len(vertices):
        raise Disconnected(f"graph is not connected ({reached} of {len(vertices)} vertices reachable)")
    return g


def degrees(g: WeightedGraph, x) -> tuple[float, float]:
    """Return ``(deg_1(x), deg_m(x))``."""
    i = g.idx(x)
    d1 = float(sum(b for _, b in g.neighbours[i]))
    return d1, d1 / g.measure[i]


def _bfs_layers(g: WeightedGraph, root: int) -> list[list[int]]:
    dist = {root: 0}
    layers = [[root]]
    queue = deque([root])
    while queue:
        i = queue.popleft()
        for j, _ in g.neighbours[i]:
            if j not in dist:
                dist[j] = dist[i] + 1
                if dist[j] == len(layers):
                    layers.append([])
                layers[dist[j]].append(j)
                queue.append(j)
    return layers


def exhaustion(g: WeightedGraph, root, step: int = 1) -> list[VertexSubset]:
    """Nested breadth-first balls around ``root``.

    Ball ``k`` collects the BFS layers ``0 .. (k+1)*step - 1``, so every ball
    adds ``step`` layers and the last ball is the whole vertex set.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    r = g.idx(root)
    layers = _bfs_layers(g, r)
    balls = []
    members: set[int] = set()
    for k, layer in enumerate(layers):
        members.update(layer)
        if (k + 1) % step == 0 or k == len(layers) - 1:
            balls.append(VertexSubset(g, frozenset(members)))
    return balls


def induced_path_graph(n: int, weight: float = 1.0, prefix: str = "v") -> WeightedGraph:
    """Path graph v0 - v1 - ... - v(n-1) with unit measure."""
    ids = [f"{prefix}{k}" for k in range(n)]
    return build_graph(ids, [(ids[k], ids[k + 1], weight) for k in range(n - 1)])


def cycle_graph(n: int, weight: float = 1.0, prefix: str = "v") -> WeightedGraph:
    ids = [f"{prefix}{k}" for k in range(n)]
    return build_graph(ids, [(ids[k], ids[(k + 1) % n], weight) for k in range(n)])
