"""Random test models: connected weighted graphs with unitary connections and
Hermitian potentials, plus a few named small models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import unitary_group

from .bundle import BundleData, make_bundle, scalar_embed
from .graph import WeightedGraph, build_graph


@dataclass(frozen=True)
class FixtureSpec:
    n_min: int = 5
    n_max: int = 30
    ranks: tuple[int, ...] = (1, 2, 4)
    weight_range: tuple[float, float] = (0.5, 2.0)
    measure_range: tuple[float, float] = (0.5, 2.0)
    spectrum: tuple[float, float] = (-3.0, 3.0)
    extra_edge_prob: float = 0.1


def random_unitary(rng: np.random.Generator, nu: int) -> np.ndarray:
    if nu == 1:
        return np.array([[np.exp(2j * np.pi * rng.random())]])
    return unitary_group.rvs(nu, random_state=rng)


def random_hermitian(rng: np.random.Generator, nu: int, lo: float, hi: float) -> np.ndarray:
    U = random_unitary(rng, nu)
    return (U * rng.uniform(lo, hi, nu)) @ U.conj().T


def random_graph(rng: np.random.Generator, n: int, spec: FixtureSpec = FixtureSpec()) -> WeightedGraph:
    """Random spanning tree plus independent extra edges."""
    ids = [f"v{i}" for i in range(n)]
    edges = set()
    order = rng.permutation(n)
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(k)])
        edges.add((min(a, b), max(a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < spec.extra_edge_prob:
                edges.add((i, j))
    lo, hi = spec.weight_range
    raw = [(ids[i], ids[j], float(rng.uniform(lo, hi))) for i, j in sorted(edges)]
    mlo, mhi = spec.measure_range
    m = {x: float(rng.uniform(mlo, mhi)) for x in ids}
    return build_graph(ids, raw, m)


def random_bundle(rng: np.random.Generator, g: WeightedGraph, nu: int, spec: FixtureSpec = FixtureSpec()) -> BundleData:
    conn = {(g.vertices[i], g.vertices[j]): random_unitary(rng, nu) for i, j, _ in g.edges()}
    lo, hi = spec.spectrum
    pot = np.stack([random_hermitian(rng, nu, lo, hi) for _ in range(g.n)])
    return make_bundle(g, nu, conn, pot)


def random_fixture(rng: np.random.Generator, spec: FixtureSpec = FixtureSpec(), nu: int | None = None):
    n = int(rng.integers(spec.n_min, spec.n_max + 1))
    nu = int(rng.choice(spec.ranks)) if nu is None else nu
    g = random_graph(rng, n, spec)
    return g, random_bundle(rng, g, nu, spec)


def random_section(rng: np.random.Generator, n: int, nu: int) -> np.ndarray:
    return rng.standard_normal((n, nu)) + 1j * rng.standard_normal((n, nu))


def random_magnetic(rng: np.random.Generator, g: WeightedGraph, v=None) -> BundleData:
    theta = {(g.vertices[i], g.vertices[j]): float(rng.uniform(-np.pi, np.pi)) for i, j, _ in g.edges()}
    return scalar_embed(g, theta, v)


def rotation(alpha: float) -> np.ndarray:
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s], [s, c]], dtype=complex)


def two_vertex_graph(b: float = 1.0) -> WeightedGraph:
    return build_graph(["a", "b"], [("a", "b", b)])


def single_vertex_graph() -> WeightedGraph:
    return build_graph(["o"], [])
