"""Hermitian bundle data over a weighted graph: connections, potentials, sections.

Fibres are represented in orthonormal frames, so every fibre inner product is
the standard one on C^rank.  Sections are ``(n, rank)`` complex arrays indexed
by the graph's dense vertex index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import (
    ExtraConnection,
    MissingConnection,
    NotAnEdge,
    NotAntisymmetric,
    RankMismatch,
)
from .graph import WeightedGraph

UNITARITY_TOL = 1e-10
HERMITICITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BundleData:
    """Rank, unitary connection on canonical edges and Hermitian potential.

    ``connection[(i, j)]`` with ``i < j`` is Phi_{x_i, x_j} : F_{x_i} -> F_{x_j}.
    The reverse direction is always the adjoint and is never stored.
    """

    graph: WeightedGraph
    rank: int
    connection: Mapping[tuple[int, int], np.ndarray]
    potential: np.ndarray  # (n, rank, rank)
    _eig: list = field(default_factory=list, repr=False, compare=False)

    def phi(self, x, y) -> np.ndarray:
        """Phi_{x,y} for an edge in either orientation."""
        i, j = self.graph.idx(x), self.graph.idx(y)
        if i < j:
            try:
                return self.connection[(i, j)]
            except KeyError:
                raise NotAnEdge(f"({x!r}, {y!r}) is not an edge") from None
        if i > j:
            try:
                return self.connection[(j, i)].conj().T
            except KeyError:
                raise NotAnEdge(f"({x!r}, {y!r}) is not an edge") from None
        raise NotAnEdge("self loops carry no connection")

    def potential_eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-vertex eigendecomposition ``V(x) = W diag(lam) W*`` (cached)."""
        if not self._eig:
            Vh = 0.5 * (self.potential + self.potential.conj().transpose(0, 2, 1))
            lam, W = np.linalg.eigh(Vh)
            self._eig.append((lam, W))
        return self._eig[0]

    def directed_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense lookup for transport kernels.

        Returns ``(edge_id, mats)`` where ``edge_id[i, j]`` indexes ``mats``
        with ``mats[edge_id[i, j]] = Phi_{x_i, x_j}`` (``-1`` off edges).
        """
        n, nu = self.graph.n, self.rank
        edge_id = -np.ones((n, n), dtype=np.int64)
        mats = np.empty((2 * len(self.connection), nu, nu), dtype=complex)
        for k, ((i, j), U) in enumerate(sorted(self.connection.items())):
            edge_id[i, j] = 2 * k
            edge_id[j, i] = 2 * k + 1
            mats[2 * k] = U
            mats[2 * k + 1] = U.conj().T
        return edge_id, mats

    def with_potential(self, potential) -> "BundleData":
        return BundleData(self.graph, self.rank, self.connection, np.asarray(potential, dtype=complex))

    def with_connection(self, connection) -> "BundleData":
        return BundleData(self.graph, self.rank, dict(connection), self.potential)


@dataclass
class ValidationReport:
    unitarity_defect: dict[tuple[str, str], float]
    hermiticity_defect: dict[str, float]
    tolerance: float

    @property
    def max_unitarity_defect(self) -> float:
        return max(self.unitarity_defect.values(), default=0.0)

    @property
    def max_hermiticity_defect(self) -> float:
        return max(self.hermiticity_defect.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return (
            self.max_unitarity_defect <= self.tolerance
            and self.max_hermiticity_defect <= self.tolerance
        )

    def failures(self) -> list[str]:
        out = [
            f"connection on {e} not unitary (defect {d:.3g})"
            for e, d in self.unitarity_defect.items()
            if d > self.tolerance
        ]
        out += [
            f"potential at {x!r} not Hermitian (defect {d:.3g})"
            for x, d in self.hermiticity_defect.items()
            if d > self.tolerance
        ]
        return out


def _as_matrix(a, rank, what) -> np.ndarray:
    M = np.atleast_2d(np.asarray(a, dtype=complex))
    if M.shape != (rank, rank):
        raise RankMismatch(f"{what} has shape {M.shape}, expected ({rank}, {rank})")
    return M


def make_bundle(
    g: WeightedGraph,
    rank: int,
    connection: Mapping | None = None,
    potential: Mapping | np.ndarray | None = None,
) -> BundleData:
    """Build bundle data from vertex-id keyed mappings.

    ``connection`` maps ``(x, y)`` to Phi_{x,y}; either orientation may be
    given (not both).  Missing entries default to the identity connection
    when ``connection`` is None, and the potential defaults to zero.
    """
    if rank < 1:
        raise RankMismatch("rank must be positive")
    conn: dict[tuple[int, int], np.ndarray] = {}
    if connection is None:
        for i, j, _ in g.edges():
            conn[(i, j)] = np.eye(rank, dtype=complex)
    else:
        for (x, y), U in connection.items():
            i, j = g.idx(x), g.idx(y)
            U = _as_matrix(U, rank, f"connection on ({x!r}, {y!r})")
            key = (min(i, j), max(i, j))
            if key in conn:
                raise ExtraConnection(f"connection on {{{x!r}, {y!r}}} given in both orientations")
            conn[key] = U if i < j else U.conj().T

    n = g.n
    if potential is None:
        V = np.zeros((n, rank, rank), dtype=complex)
    elif isinstance(potential, Mapping):
        V = np.zeros((n, rank, rank), dtype=complex)
        for x, M in potential.items():
            V[g.idx(x)] = _as_matrix(M, rank, f"potential at {x!r}")
    else:
        V = np.asarray(potential, dtype=complex)
        if V.shape != (n, rank, rank):
            raise RankMismatch(f"potential array has shape {V.shape}, expected {(n, rank, rank)}")
    return BundleData(g, rank, conn, V)


def validate_bundle(g: WeightedGraph, bundle: BundleData, tol: float = UNITARITY_TOL) -> ValidationReport:
    """Check structure (raising) and unitarity / Hermiticity (reported)."""
    nu = bundle.rank
    if bundle.potential.shape != (g.n, nu, nu):
        raise RankMismatch(f"potential has shape {bundle.potential.shape}, expected {(g.n, nu, nu)}")
    for key, U in bundle.connection.items():
        if np.shape(U) != (nu, nu):
            i, j = key
            raise RankMismatch(
                f"connection on ({g.vertices[i]!r}, {g.vertices[j]!r}) has shape {np.shape(U)}, rank is {nu}"
            )
    edges = set(g.weights)
    have = set(bundle.connection)
    for i, j in sorted(edges - have):
        raise MissingConnection(f"edge ({g.vertices[i]!r}, {g.vertices[j]!r}) has no connection matrix")
    for i, j in sorted(have - edges):
        raise ExtraConnection(f"connection given on non-edge ({i}, {j})")

    eye = np.eye(nu)
    unit = {
        (g.vertices[i], g.vertices[j]): float(np.linalg.norm(U.conj().T @ U - eye, 2))
        for (i, j), U in sorted(bundle.connection.items())
    }
    herm = {
        g.vertices[i]: float(np.linalg.norm(V - V.conj().T, 2)) for i, V in enumerate(bundle.potential)
    }
    return ValidationReport(unit, herm, tol)


def reverse_connection(bundle: BundleData, x, y) -> np.ndarray:
    """Phi_{y,x}, computed as the adjoint of Phi_{x,y}."""
    return bundle.phi(x, y).conj().T


def lq_norm(section, g: WeightedGraph, q: float) -> float:
    """Weighted l^q_m norm of a section (q in [1, inf])."""
    f = np.asarray(section)
    if f.ndim == 1:
        f = f[:, None]
    fib = np.linalg.norm(f, axis=1)
    if q == np.inf:
        return float(fib.max(initial=0.0))
    if q < 1:
        raise ValueError("q must be >= 1")
    return float(np.sum(fib**q * g.measure) ** (1.0 / q))


def fibre_norms(section) -> np.ndarray:
    """|f|(x) = |f(x)|_x as a real function on vertices."""
    f = np.asarray(section)
    if f.ndim == 1:
        return np.abs(f)
    return np.linalg.norm(f, axis=1)


def potential_spec_bounds(bundle: BundleData, x) -> tuple[float, float]:
    lam, _ = bundle.potential_eigh()
    i = bundle.graph.idx(x)
    return float(lam[i, 0]), float(lam[i, -1])


def min_spec_potential(bundle: BundleData) -> np.ndarray:
    """The scalar comparison potential w(x) = min spec V(x)."""
    lam, _ = bundle.potential_eigh()
    return lam[:, 0].copy()


def negative_part_bound(bundle: BundleData) -> np.ndarray:
    """w^-(x) = max spec V^-(x) = max(0, -min spec V(x))."""
    return np.maximum(0.0, -min_spec_potential(bundle))


def truncate_potential(bundle: BundleData, level: float) -> BundleData:
    """Spectral truncation V_n(x) = max(-level, V(x))."""
    lam, W = bundle.potential_eigh()
    lam_n = np.maximum(lam, -level)
    Vn = np.einsum("xij,xj,xkj->xik", W, lam_n, W.conj())
    return bundle.with_potential(Vn)


def scalar_embed(g: WeightedGraph, theta: Mapping, v=None) -> BundleData:
    """Rank-one magnetic bundle Phi_{x,y} = exp(i theta(x,y)), V(x) = v(x).

    ``theta`` maps ordered edges to reals; when both orientations are given
    they must be negatives of each other.
    """
    phases: dict[tuple[int, int], float] = {}
    for (x, y), th in theta.items():
        i, j = g.idx(x), g.idx(y)
        val = float(th) if i < j else -float(th)
        key = (min(i, j), max(i, j))
        if key in phases and not np.isclose(phases[key], val, rtol=0, atol=1e-12):
            raise NotAntisymmetric(f"theta({x!r}, {y!r}) = {th} is not minus theta({y!r}, {x!r})")
        phases[key] = val
    conn = {}
    for i, j, _ in g.edges():
        conn[(i, j)] = np.array([[np.exp(1j * phases.get((i, j), 0.0))]])
    extra = set(phases) - set(conn)
    if extra:
        raise ExtraConnection(f"theta given on non-edges {sorted(extra)}")

    if v is None:
        pot = np.zeros((g.n, 1, 1), dtype=complex)
    elif isinstance(v, Mapping):
        pot = np.zeros((g.n, 1, 1), dtype=complex)
        for x, val in v.items():
            pot[g.idx(x), 0, 0] = float(val)
    else:
        pot = np.asarray(v, dtype=float).reshape(g.n, 1, 1).astype(complex)
    return BundleData(g, 1, conn, pot)


def trivial_bundle(g: WeightedGraph, rank: int = 1, potential=None) -> BundleData:
    return make_bundle(g, rank, None, potential)


def scalar_bundle(g: WeightedGraph, w) -> BundleData:
    """Rank-one bundle with trivial connection and real potential w."""
    w = np.asarray(w, dtype=float)
    return BundleData(
        g, 1, {(i, j): np.ones((1, 1), dtype=complex) for i, j, _ in g.edges()}, w.reshape(-1, 1, 1).astype(complex)
    )


def section_from_mapping(g: WeightedGraph, rank: int, values: Mapping) -> np.ndarray:
    """Build an ``(n, rank)`` section; vertices not listed are zero."""
    f = np.zeros((g.n, rank), dtype=complex)
    for x, vec in values.items():
        vec = np.asarray(vec, dtype=complex).reshape(-1)
        if vec.shape != (rank,):
            raise RankMismatch(f"section value at {x!r} has length {vec.size}, rank is {rank}")
        f[g.idx(x)] = vec
    return f
