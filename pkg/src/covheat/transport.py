"""Parallel transport and path-ordered exponentials along jump paths.

Between jumps the integrand A(s) = -//_s^* V(X_s) //_s is constant, so the
ordered exponential is an exact product of matrix exponentials:

    V_t = prod_k  exp(dt_k A_k)     (later intervals multiplied on the right)

with exp(dt A_k) = T_k^* e^{-dt V(Y_k)} T_k, T_k the transport at tau_k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import gammainc

from .bundle import BundleData
from .errors import BeyondHorizon, Censored
from .paths import PathBatch, PathSample

DYSON_MAX_ORDER = 30


@dataclass
class TransportAccumulator:
    """State (//_t, V_t) after evolving a path up to ``clock``."""

    base: object
    current: object
    par_transport: np.ndarray
    ordered_exp: np.ndarray
    clock: float


def _check_time(path: PathSample, t: float) -> None:
    if t < 0 or t > path.horizon:
        raise BeyondHorizon(f"t = {t} outside [0, {path.horizon}]")
    if path.censored and t > path.resolved_until:
        raise Censored(f"path censored after t = {path.resolved_until}")


def _segments(path: PathSample, bundle: BundleData, t: float):
    """Yield (vertex index, duration, transport at segment start) up to t."""
    _check_time(path, t)
    g = bundle.graph
    T = np.eye(bundle.rank, dtype=complex)
    bounds = (0.0,) + path.jump_times
    for k, y in enumerate(path.chain):
        start = bounds[k]
        if start > t:
            break
        end = bounds[k + 1] if k + 1 < len(bounds) else np.inf
        yield g.idx(y), min(end, t) - start, T
        if end <= t:
            T = bundle.phi(y, path.chain[k + 1]) @ T


def _exp_potential(bundle: BundleData, i: int, dt: float) -> np.ndarray:
    lam, W = bundle.potential_eigh()
    return (W[i] * np.exp(-dt * lam[i])) @ W[i].conj().T


def parallel_transport(path: PathSample, bundle: BundleData, t: float) -> np.ndarray:
    """//_t = Phi_{Y_{N-1},Y_N} ... Phi_{Y_0,Y_1} (identity if no jumps)."""
    _check_time(path, t)
    T = np.eye(bundle.rank, dtype=complex)
    for k, tj in enumerate(path.jump_times):
        if tj > t:
            break
        T = bundle.phi(path.chain[k], path.chain[k + 1]) @ T
    return T


def evolve(path: PathSample, bundle: BundleData, t: float) -> TransportAccumulator:
    """Evolve (//, V) along ``path`` up to time t."""
    Vt = np.eye(bundle.rank, dtype=complex)
    cur = path.start
    T = np.eye(bundle.rank, dtype=complex)
    for i, dt, T in _segments(path, bundle, t):
        if dt > 0:
            Vt = Vt @ T.conj().T @ _exp_potential(bundle, i, dt) @ T
        cur = bundle.graph.vertices[i]
    return TransportAccumulator(path.start, cur, parallel_transport(path, bundle, t), Vt, t)


def ordered_exponential(path: PathSample, bundle: BundleData, t: float) -> np.ndarray:
    """Solution V_t of V_t = I + int_0^t V_s A(s) ds."""
    return evolve(path, bundle, t).ordered_exp


def integrand_pieces(path: PathSample, bundle: BundleData, t: float) -> list[tuple[np.ndarray, float]]:
    """Piecewise-constant integrand as ``[(A_k, dt_k), ...]``."""
    return [(-(T.conj().T @ bundle.potential[i] @ T), dt) for i, dt, T in _segments(path, bundle, t)]


def potential_path_integral(path: PathSample, bundle: BundleData, t: float, w) -> float:
    """int_0^t w(X_s) ds for a real vertex function w."""
    w = np.asarray(w, dtype=float)
    return float(sum(w[i] * dt for i, dt, _ in _segments(path, bundle, t)))


def dyson_series(path: PathSample, bundle: BundleData, t: float, n_max: int) -> tuple[np.ndarray, float]:
    """Partial Dyson sum up to order ``n_max`` and the a-priori tail bound.

    Iterated simplex integrals of the piecewise-constant integrand are exact:
    points falling in one interval of length dt contribute (dt A)^m / m!.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    n_max = min(n_max, DYSON_MAX_ORDER)
    nu = bundle.rank
    terms = [np.eye(nu, dtype=complex)] + [np.zeros((nu, nu), dtype=complex) for _ in range(n_max)]
    L = 0.0
    for A, dt in integrand_pieces(path, bundle, t):
        L += np.linalg.norm(A, 2) * dt
        powers = [np.eye(nu, dtype=complex)]
        for m in range(1, n_max + 1):
            powers.append(powers[-1] @ (dt * A) / m)
        terms = [sum(terms[k] @ powers[n - k] for k in range(n + 1)) for n in range(n_max + 1)]
    return sum(terms), dyson_tail(L, n_max)


def dyson_tail(L: float, n_max: int) -> float:
    """sum_{n > n_max} L^n / n!."""
    return float(np.exp(L) * gammainc(n_max + 1, L)) if L > 0 else 0.0


def inverse_ordered_exponential(path: PathSample, bundle: BundleData, t: float) -> np.ndarray:
    """Solution of B_t = I - int_0^t A(s) B_s ds (generic matrix exponentials)."""
    B = np.eye(bundle.rank, dtype=complex)
    for A, dt in integrand_pieces(path, bundle, t):
        B = expm(-dt * A) @ B
    return B


def adjoint_ordered_exponential(path: PathSample, bundle: BundleData, t: float) -> np.ndarray:
    """Solution of C_t = I + int_0^t A(s)^* C_s ds."""
    C = np.eye(bundle.rank, dtype=complex)
    for A, dt in integrand_pieces(path, bundle, t):
        C = expm(dt * A.conj().T) @ C
    return C


def shifted_path(path: PathSample, r: float) -> PathSample:
    """The path s -> X_{r+s}, resolved up to ``horizon - r``."""
    _check_time(path, r)
    n = int(np.searchsorted(path.jump_times, r, side="right"))
    return PathSample(
        path.chain[n],
        path.chain[n:],
        tuple(tj - r for tj in path.jump_times[n:]),
        path.horizon - r,
        path.censored,
    )


def reversed_path(path: PathSample, r: float) -> PathSample:
    """The path s -> X_{r-s} on [0, r]."""
    _check_time(path, r)
    n = int(np.searchsorted(path.jump_times, r, side="right"))
    chain = path.chain[: n + 1][::-1]
    times = tuple(r - tj for tj in path.jump_times[:n][::-1])
    return PathSample(chain[0], chain, times, r, False)


def shifted_transport(path: PathSample, bundle: BundleData, r: float, s: float) -> np.ndarray:
    """//^{r}_s: transport over the jumps in (r, r+s]."""
    return parallel_transport(shifted_path(path, r), bundle, s)


def shifted_ordered_exponential(path: PathSample, bundle: BundleData, r: float, s: float) -> np.ndarray:
    return ordered_exponential(shifted_path(path, r), bundle, s)


def reversed_transport(path: PathSample, bundle: BundleData, r: float, t: float) -> np.ndarray:
    """//^{(r)}_t: jumps in (r-t, r] undone in reverse order."""
    if t > r:
        raise BeyondHorizon(f"t = {t} exceeds reversal time r = {r}")
    return parallel_transport(reversed_path(path, r), bundle, t)


def reversed_ordered_exponential(path: PathSample, bundle: BundleData, r: float, t: float) -> np.ndarray:
    if t > r:
        raise BeyondHorizon(f"t = {t} exceeds reversal time r = {r}")
    return ordered_exponential(reversed_path(path, r), bundle, t)


def perturbation_bound(path: PathSample, b1: BundleData, b2: BundleData, t: float) -> float:
    """e^{2 int|A| + int|A~|} int|A - A~| for two potentials on one path."""
    p1 = integrand_pieces(path, b1, t)
    p2 = integrand_pieces(path, b2, t)
    n1 = sum(np.linalg.norm(A, 2) * dt for A, dt in p1)
    n2 = sum(np.linalg.norm(A, 2) * dt for A, dt in p2)
    diff = sum(np.linalg.norm(A - B, 2) * dt for (A, dt), (B, _) in zip(p1, p2))
    return float(np.exp(2 * n1 + n2) * diff)


# ---------------------------------------------------------------------------
# batch evaluation


@dataclass
class BatchTransport:
    """Transport data of a path batch at query times (axis 1)."""

    times: np.ndarray
    ordered_exp: np.ndarray  # (N, Q, nu, nu)
    par_transport: np.ndarray  # (N, Q, nu, nu)
    position: np.ndarray  # (N, Q) vertex index
    alive: np.ndarray  # (N, Q): resolved and not yet exited the subset

    def weights(self) -> np.ndarray:
        """V_t //_t^* with dead paths zeroed."""
        M = self.ordered_exp @ np.conj(np.swapaxes(self.par_transport, -1, -2))
        return M * self.alive[..., None, None]


def evaluate_batch(batch: PathBatch, bundle: BundleData, times, inside=None) -> BatchTransport:
    """Evaluate V_t and //_t for every path of ``batch`` at every query time.

    ``inside`` is an optional boolean vertex mask; paths that jump to a vertex
    outside it at or before t are marked dead (first-exit killing).
    """
    ts = np.atleast_1d(np.asarray(times, dtype=float))
    if ts.size and (ts.min() < 0 or ts.max() > batch.horizon):
        raise BeyondHorizon(f"query times must lie in [0, {batch.horizon}]")
    N, L = batch.chain.shape
    Q = ts.size
    nu = bundle.rank
    lam, W = bundle.potential_eigh()
    edge_id, mats = bundle.directed_table()
    eye = np.eye(nu, dtype=complex)

    out_V = np.zeros((N, Q, nu, nu), dtype=complex)
    out_T = np.zeros((N, Q, nu, nu), dtype=complex)
    pos = np.full((N, Q), -1, dtype=np.int64)
    alive_out = np.zeros((N, Q), dtype=bool)

    Vacc = np.broadcast_to(eye, (N, nu, nu)).copy()
    T = np.broadcast_to(eye, (N, nu, nu)).copy()
    alive = np.ones(N, dtype=bool)
    if inside is not None:
        alive &= np.asarray(inside)[batch.start]
    tq_max = ts.max() if Q else -1.0

    def propagate(rows, v, dt):
        E = (W[v] * np.exp(-dt[:, None] * lam[v])[:, None, :]) @ np.conj(np.swapaxes(W[v], -1, -2))
        Tr = T[rows]
        return Vacc[rows] @ np.conj(np.swapaxes(Tr, -1, -2)) @ E @ Tr

    for k in range(L - 1):
        v_all = batch.chain[:, k]
        start = batch.times[:, k]
        end = batch.times[:, k + 1]
        has = (v_all >= 0) & (start <= tq_max)
        if not has.any():
            break
        resolved = ~(batch.censored & (batch.n_jumps == k))
        hit = has[:, None] & (start[:, None] <= ts[None, :]) & (ts[None, :] < end[:, None])
        pp, qq = np.nonzero(hit)
        if pp.size:
            v = v_all[pp]
            out_V[pp, qq] = propagate(pp, v, ts[qq] - start[pp])
            out_T[pp, qq] = T[pp]
            pos[pp, qq] = v
            alive_out[pp, qq] = alive[pp] & resolved[pp]
        adv = np.flatnonzero(has & (end <= tq_max))
        if adv.size:
            v = v_all[adv]
            Vacc[adv] = propagate(adv, v, end[adv] - start[adv])
            nxt = batch.chain[adv, k + 1]
            T[adv] = mats[edge_id[v, nxt]] @ T[adv]
            if inside is not None:
                alive[adv] &= np.asarray(inside)[nxt]
    return BatchTransport(ts, out_V, out_T, pos, alive_out)

