"""Sampling the continuous-time jump process on a weighted graph.

At vertex y the process holds for an exponential time with rate deg_m(y) and
then jumps to a neighbour z with probability b(y, z) / deg_1(y).

Random numbers come from one counter-based Philox stream per path, keyed by
the master seed with the path index in the counter.  Step k of a path uses
uniforms 2k (holding time) and 2k + 1 (jump target) of its stream, in both the
single-path sampler and the vectorised batch sampler, so a path is a pure
function of ``(seed, path index)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

import numpy as np

from .errors import BeyondHorizon, Censored, GraphError, StartOutsideSubset, UnknownVertex
from .graph import VertexSubset, WeightedGraph

DEFAULT_MAX_JUMPS = 10**6
_INITIAL_STEPS = 16


def path_stream(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for path ``index`` under master ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(index), 0]))


def _uniform_block(seed: int, index: int, steps: int) -> np.ndarray:
    return path_stream(seed, index).random(2 * steps)


@dataclass(frozen=True)
class PathSample:
    """One realisation of the jump process.

    ``chain[k]`` is the vertex occupied on [tau_k, tau_{k+1}); ``jump_times``
    holds tau_1 < tau_2 < ... (tau_0 = 0 implicit).  A censored path hit the
    jump cap before the horizon and is only resolved up to its last jump.
    """

    start: Hashable
    chain: tuple
    jump_times: tuple[float, ...]
    horizon: float
    censored: bool = False

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    @property
    def resolved_until(self) -> float:
        if self.censored:
            return self.jump_times[-1] if self.jump_times else 0.0
        return self.horizon


@dataclass(frozen=True)
class NeighborOracle:
    """Lazily generated graph for Monte Carlo on possibly infinite graphs.

    ``neighbors(x)`` returns ``[(y, b(x, y), m(y)), ...]`` and ``measure(x)``
    returns m(x).  Symmetry b(x, y) = b(y, x) is the caller's responsibility;
    the sampler spot-checks it whenever both directions get queried.
    """

    neighbors: Callable[[Hashable], Sequence[tuple[Hashable, float, float]]]
    measure: Callable[[Hashable], float]


def oracle_from_graph(g: WeightedGraph) -> NeighborOracle:
    def neighbors(x):
        i = g.idx(x)
        return [(g.vertices[j], b, float(g.measure[j])) for j, b in g.neighbours[i]]

    return NeighborOracle(neighbors, lambda x: float(g.measure[g.idx(x)]))


def half_line_oracle(edge_weight: Callable[[int], float], measure: Callable[[int], float] = lambda k: 1.0):
    """Oracle on {0, 1, 2, ...} with b(k, k+1) = edge_weight(k)."""

    def neighbors(k):
        out = [] if k == 0 else [(k - 1, edge_weight(k - 1), measure(k - 1))]
        out.append((k + 1, edge_weight(k), measure(k + 1)))
        return out

    return NeighborOracle(neighbors, measure)


class _OracleCache:
    def __init__(self, oracle: NeighborOracle):
        self.oracle = oracle
        self.table: dict = {}

    def get(self, x):
        hit = self.table.get(x)
        if hit is not None:
            return hit
        nbrs = list(self.oracle.neighbors(x))
        mx = float(self.oracle.measure(x))
        for y, b, my in nbrs:
            other = self.table.get(y)
            if other is not None:
                back = {z: (bz, mz) for z, bz, mz in other[0]}
                if x in back and (back[x][0] != b or back[x][1] != mx):
                    raise GraphError(f"neighbour oracle inconsistent on edge ({x!r}, {y!r})")
        weights = [b for _, b, _ in nbrs]
        deg1 = sum(weights)
        cum = _cumulative(weights, deg1)
        entry = (nbrs, [y for y, _, _ in nbrs], cum, deg1 / mx if deg1 > 0 else 0.0)
        self.table[x] = entry
        return entry


def _cumulative(weights, deg1) -> np.ndarray:
    if deg1 <= 0:
        return np.empty(0)
    cum = np.cumsum(np.asarray(weights, dtype=float)) / deg1
    cum[-1] = 1.0
    return cum


def sample_path(source, x, t_max: float, rng: np.random.Generator, max_jumps: int = DEFAULT_MAX_JUMPS) -> PathSample:
    """Sample one path started at ``x`` and resolved up to ``t_max``.

    ``source`` is a :class:`WeightedGraph` or a :class:`NeighborOracle`.
    """
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    if max_jumps < 1:
        raise ValueError("max_jumps must be >= 1")
    if isinstance(source, WeightedGraph):
        source.idx(x)
        cache = _OracleCache(oracle_from_graph(source))
    else:
        cache = _OracleCache(source)

    chain = [x]
    times: list[float] = []
    now = 0.0
    cur = x
    censored = False
    while True:
        if len(times) >= max_jumps:
            censored = True
            break
        _, ids, cum, rate = cache.get(cur)
        u_hold, u_jump = rng.random(2)
        if rate == 0.0:
            break
        nxt_time = float(now + (-np.log1p(-u_hold)) / rate)
        if nxt_time > t_max:
            break
        k = int(np.searchsorted(cum, u_jump, side="right"))
        cur = ids[k]
        now = nxt_time
        chain.append(cur)
        times.append(now)
    return PathSample(x, tuple(chain), tuple(times), float(t_max), censored)


def count_jumps(path: PathSample, t: float) -> int:
    """N(t) = #{k >= 1 : tau_k <= t}."""
    _check_query(path, t)
    return int(np.searchsorted(path.jump_times, t, side="right"))


def position(path: PathSample, t: float):
    """X_t = Y_{N(t)} (right-continuous)."""
    return path.chain[count_jumps(path, t)]


def _check_query(path: PathSample, t: float) -> None:
    if t < 0 or t > path.horizon:
        raise BeyondHorizon(f"t = {t} outside [0, {path.horizon}]")
    if path.censored and t > path.resolved_until:
        raise Censored(f"path censored after t = {path.resolved_until}")


def first_exit(path: PathSample, U) -> float | None:
    """First jump time landing outside ``U``; ``None`` if the resolved path stays in U."""
    members = U.ids() if isinstance(U, VertexSubset) else set(U)
    if path.start not in members:
        raise StartOutsideSubset(f"start {path.start!r} not in subset")
    for y, tj in zip(path.chain[1:], path.jump_times):
        if y not in members:
            return tj
    return None


# ---------------------------------------------------------------------------
# vectorised batch sampling on finite graphs


@dataclass
class PathBatch:
    """A block of paths on a finite graph, stored as index arrays.

    ``chain[p, k]`` is Y_k (vertex index, -1 past the end); ``times[p, k]`` is
    tau_k (``inf`` past the end, ``times[:, 0] == 0``).
    """

    start: int
    chain: np.ndarray
    times: np.ndarray
    n_jumps: np.ndarray
    censored: np.ndarray
    horizon: float
    first_index: int = 0

    def __len__(self) -> int:
        return self.chain.shape[0]

    def sample(self, p: int, g: WeightedGraph) -> PathSample:
        k = int(self.n_jumps[p])
        return PathSample(
            g.vertices[self.start],
            tuple(g.vertices[i] for i in self.chain[p, : k + 1]),
            tuple(float(s) for s in self.times[p, 1 : k + 1]),
            self.horizon,
            bool(self.censored[p]),
        )


class JumpTables:
    """Dense per-vertex rate / cumulative-transition tables for a graph."""

    def __init__(self, g: WeightedGraph):
        n = g.n
        width = max((len(nb) for nb in g.neighbours), default=0)
        width = max(width, 1)
        self.rate = np.zeros(n)
        self.cum = np.full((n, width), 2.0)
        self.nbr = np.full((n, width), -1, dtype=np.int64)
        deg1 = g.deg1()
        for i, nb in enumerate(g.neighbours):
            if not nb:
                continue
            weights = [b for _, b in nb]
            self.rate[i] = deg1[i] / g.measure[i]
            self.cum[i, : len(nb)] = _cumulative(weights, deg1[i])
            self.nbr[i, : len(nb)] = [j for j, _ in nb]


def sample_batch(
    g: WeightedGraph,
    x,
    t_max: float,
    seed: int,
    first_index: int,
    count: int,
    max_jumps: int = DEFAULT_MAX_JUMPS,
    tables: JumpTables | None = None,
) -> PathBatch:
    """Sample paths ``first_index .. first_index + count - 1`` in lockstep."""
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    if max_jumps < 1:
        raise ValueError("max_jumps must be >= 1")
    x0 = g.idx(x)
    tab = tables or JumpTables(g)
    steps = _INITIAL_STEPS
    U = np.stack([_uniform_block(seed, first_index + p, steps) for p in range(count)]) if count else np.empty((0, 2 * steps))

    chain_cols = [np.full(count, x0, dtype=np.int64)]
    time_cols = [np.zeros(count)]
    cur = chain_cols[0].copy()
    now = np.zeros(count)
    active = np.ones(count, dtype=bool) if tab.rate[x0] > 0 else np.zeros(count, dtype=bool)
    n_jumps = np.zeros(count, dtype=np.int64)
    k = 0
    while active.any() and k < max_jumps:
        if 2 * k + 1 >= U.shape[1]:
            steps *= 2
            grown = np.full((count, 2 * steps), np.nan)
            for p in np.flatnonzero(active):
                grown[p] = _uniform_block(seed, first_index + p, steps)
            U = grown
        act = np.flatnonzero(active)
        c = cur[act]
        rate = tab.rate[c]
        with np.errstate(divide="ignore"):
            hold = np.where(rate > 0, -np.log1p(-U[act, 2 * k]) / np.where(rate > 0, rate, 1.0), np.inf)
        t_new = now[act] + hold
        jumps = t_new <= t_max
        active[act[~jumps]] = False
        jp = act[jumps]
        cj = c[jumps]
        u = U[jp, 2 * k + 1]
        idx = (tab.cum[cj] <= u[:, None]).sum(axis=1)
        nxt = tab.nbr[cj, idx]
        col_c = np.full(count, -1, dtype=np.int64)
        col_t = np.full(count, np.inf)
        col_c[jp] = nxt
        col_t[jp] = t_new[jumps]
        chain_cols.append(col_c)
        time_cols.append(col_t)
        cur[jp] = nxt
        now[jp] = t_new[jumps]
        n_jumps[jp] += 1
        k += 1
    censored = active.copy()
    # one trailing padding column so segment ends are always addressable
    chain_cols.append(np.full(count, -1, dtype=np.int64))
    time_cols.append(np.full(count, np.inf))
    return PathBatch(
        x0,
        np.stack(chain_cols, axis=1),
        np.stack(time_cols, axis=1),
        n_jumps,
        censored,
        float(t_max),
        first_index,
    )
