"""Monte Carlo Feynman-Kac estimators and the scalar comparison machinery.

Every estimator averages per-path contributions of

    1_{t < tau} V_t //_t^* f(X_t)

over paths sampled from per-path Philox streams.  Paths are processed in
fixed-size chunks (independent of the worker count) and the contributions are
concatenated in path order before reduction, so results are bit-identical for
any number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.integrate import simpson
from scipy.special import roots_genlaguerre

from .bundle import BundleData, fibre_norms, min_spec_potential, scalar_bundle
from .errors import (
    CensoredFractionExceeded,
    NonPositiveTime,
    SpectralConditionViolated,
    StartOutsideSubset,
)
from .graph import VertexSubset, WeightedGraph
from .operator import (
    OperatorMatrix,
    apply_semigroup,
    assemble,
    heat_kernel,
    quadratic_form,
    resolvent_power,
    scalar_operator,
)
from .paths import DEFAULT_MAX_JUMPS, JumpTables, sample_batch
from .transport import evaluate_batch

CHUNK_SIZE = 4096
DEFAULT_CENSOR_THRESHOLD = 1e-3
WORKERS_ENV = "COVHEAT_WORKERS"


@dataclass
class McEstimate:
    """Monte Carlo estimate with its standard error.

    ``stderr`` has the shape of ``value``; for complex values its real and
    imaginary parts are the standard errors of the real and imaginary parts.
    """

    value: np.ndarray
    stderr: np.ndarray
    samples: int
    censored_fraction: float
    seed: int

    def agrees_with(self, target, n_sigma: float = 4.0, floor: float = 1e-12) -> np.ndarray:
        """Componentwise |Re/Im difference| <= n_sigma * stderr + floor."""
        d = np.asarray(self.value) - np.asarray(target)
        se = np.asarray(self.stderr)
        ok_re = np.abs(d.real) <= n_sigma * np.real(se) + floor
        ok_im = np.abs(d.imag) <= n_sigma * np.imag(se) + floor
        return ok_re & ok_im


@dataclass
class McConfig:
    n_samples: int = 100_000
    seed: int = 0
    max_jumps: int = DEFAULT_MAX_JUMPS
    censor_threshold: float = DEFAULT_CENSOR_THRESHOLD
    workers: int | None = None


@dataclass
class LaguerreSpec:
    """Gauss-Laguerre rule for the outer Laplace integral."""

    nodes: int = 40


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


# ---------------------------------------------------------------------------
# chunked path simulation


@dataclass
class _SectionReducer:
    f: np.ndarray  # (n, nu)

    def __call__(self, bt):
        M = bt.weights()
        fx = self.f[np.maximum(bt.position, 0)]
        return np.einsum("pqij,pqj->pqi", M, fx)


@dataclass
class _KernelReducer:
    y: int
    my: float

    def __call__(self, bt):
        M = bt.weights()
        return M * (bt.position == self.y)[..., None, None] / self.my


@dataclass
class _TraceReducer:
    x: int

    def __call__(self, bt):
        M = bt.weights()
        return np.trace(M, axis1=-2, axis2=-1) * (bt.position == self.x)


@dataclass
class _ChunkTask:
    g: WeightedGraph
    bundle: BundleData
    x: int
    times: np.ndarray
    seed: int
    max_jumps: int
    inside: np.ndarray | None
    reducer: object
    tables: JumpTables | None = field(default=None, repr=False)

    def __call__(self, span):
        first, count = span
        if self.tables is None:
            self.tables = JumpTables(self.g)
        batch = sample_batch(
            self.g, self.x, float(self.times.max()), self.seed, first, count, self.max_jumps, self.tables
        )
        bt = evaluate_batch(batch, self.bundle, self.times, self.inside)
        return self.reducer(bt), batch.censored


def _spans(first: int, n: int) -> list[tuple[int, int]]:
    return [(first + s, min(CHUNK_SIZE, n - s)) for s in range(0, n, CHUNK_SIZE)]


def _simulate(task: _ChunkTask, n: int, first_index: int, workers: int | None):
    spans = _spans(first_index, n)
    w = resolve_workers(workers)
    if w == 1 or len(spans) == 1:
        parts = [task(s) for s in spans]
    else:
        with ProcessPoolExecutor(max_workers=w) as ex:
            parts = list(ex.map(task, spans))
    values = np.concatenate([p[0] for p in parts], axis=0)
    censored = np.concatenate([p[1] for p in parts], axis=0)
    return values, censored


def _stderr(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    if n < 2:
        return np.zeros(values.shape[1:], dtype=complex)
    # shifting by the first sample keeps identical samples at exactly zero spread
    d = values - values[0]
    sr = d.real.std(axis=0, ddof=1) / np.sqrt(n)
    si = d.imag.std(axis=0, ddof=1) / np.sqrt(n)
    return sr + 1j * si


def _estimate(values, censored, seed, threshold) -> McEstimate:
    frac = float(censored.mean()) if censored.size else 0.0
    if frac > threshold:
        raise CensoredFractionExceeded(f"censored fraction {frac:.3g} exceeds threshold {threshold:.3g}")
    return McEstimate(values.mean(axis=0), _stderr(values), values.shape[0], frac, int(seed))


def _section(g, bundle, f) -> np.ndarray:
    f = np.asarray(f, dtype=complex)
    if f.ndim == 1 and bundle.rank == 1:
        f = f[:, None]
    if f.shape != (g.n, bundle.rank):
        raise ValueError(f"section has shape {f.shape}, expected {(g.n, bundle.rank)}")
    return f


def _times(t) -> np.ndarray:
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if (ts < 0).any():
        raise ValueError("times must be >= 0")
    return ts


# ---------------------------------------------------------------------------
# estimators


def mc_semigroup_paths(
    g, bundle, f, x, times, n_samples, seed, *, inside=None, max_jumps=DEFAULT_MAX_JUMPS, workers=None, first_index=0
):
    """Per-path contributions (n_samples, Q, nu) and censoring flags."""
    f = _section(g, bundle, f)
    task = _ChunkTask(g, bundle, g.idx(x), _times(times), int(seed), max_jumps, inside, _SectionReducer(f))
    return _simulate(task, n_samples, first_index, workers)


def mc_semigroup(
    g: WeightedGraph,
    bundle: BundleData,
    f,
    x,
    t: float,
    n_samples: int,
    seed: int,
    *,
    max_jumps: int = DEFAULT_MAX_JUMPS,
    censor_threshold: float = DEFAULT_CENSOR_THRESHOLD,
    workers: int | None = None,
    first_index: int = 0,
) -> McEstimate:
    """Estimate e^{-tH} f(x) = E^x[1_{t<tau} V_t //_t^* f(X_t)]."""
    vals, cens = mc_semigroup_paths(
        g, bundle, f, x, t, n_samples, seed, max_jumps=max_jumps, workers=workers, first_index=first_index
    )
    return _estimate(vals[:, 0], cens, seed, censor_threshold)


def mc_dirichlet(
    g: WeightedGraph,
    bundle: BundleData,
    U: VertexSubset,
    f,
    x,
    t: float,
    n_samples: int,
    seed: int,
    *,
    max_jumps: int = DEFAULT_MAX_JUMPS,
    censor_threshold: float = DEFAULT_CENSOR_THRESHOLD,
    workers: int | None = None,
) -> McEstimate:
    """Estimate e^{-tH^{(U)}} f(x); paths are killed at the first exit from U.

    ``f`` may be given on the whole graph or on U (in sorted index order).
    """
    if x not in U:
        raise StartOutsideSubset(f"start {x!r} not in subset")
    f = np.asarray(f, dtype=complex)
    if f.ndim == 1 and bundle.rank == 1:
        f = f[:, None]
    if f.shape[0] == len(U) and len(U) != g.n:
        full = np.zeros((g.n, bundle.rank), dtype=complex)
        full[U.sorted_indices()] = f
        f = full
    f = _section(g, bundle, f)
    task = _ChunkTask(g, bundle, g.idx(x), _times(t), int(seed), max_jumps, U.mask(), _SectionReducer(f))
    vals, cens = _simulate(task, n_samples, 0, workers)
    return _estimate(vals[:, 0], cens, seed, censor_threshold)


def mc_composed(
    g: WeightedGraph,
    bundle: BundleData,
    f,
    x,
    r: float,
    s: float,
    n_samples: int,
    seed: int,
    *,
    max_jumps: int = DEFAULT_MAX_JUMPS,
    censor_threshold: float = DEFAULT_CENSOR_THRESHOLD,
) -> McEstimate:
    """Estimate e^{-rH} e^{-sH} f(x) by splicing independent path pieces.

    Path p runs from x for time r (stream index p); it is continued from its
    endpoint by a fresh path of duration s.  Continuations are grouped by
    endpoint and take stream indices n_samples, n_samples + 1, ... in that
    (stable) order, so they never share a stream with the first pieces.
    """
    f = _section(g, bundle, f)
    n = int(n_samples)
    tab = JumpTables(g)
    outer = sample_batch(g, x, r, seed, 0, n, max_jumps, tab)
    bt = evaluate_batch(outer, bundle, [r])
    W = bt.weights()[:, 0]
    end = bt.position[:, 0]
    censored = outer.censored.copy()
    vals = np.zeros((n, bundle.rank), dtype=complex)
    order = np.argsort(end, kind="stable")
    nxt = n
    for y in np.unique(end[end >= 0]):
        rows = order[end[order] == y]
        inner = sample_batch(g, int(y), s, seed, nxt, rows.size, max_jumps, tab)
        nxt += rows.size
        it = evaluate_batch(inner, bundle, [s])
        fz = np.where(it.position[:, 0, None] >= 0, f[np.maximum(it.position[:, 0], 0)], 0.0)
        v = np.einsum("pij,pj->pi", it.weights()[:, 0], fz)
        vals[rows] = np.einsum("pij,pj->pi", W[rows], v)
        censored[rows] |= inner.censored
    return _estimate(vals, censored, seed, censor_threshold)


def mc_kernel(
    g: WeightedGraph,
    bundle: BundleData,
    x,
    y,
    t: float,
    n_samples: int,
    seed: int,
    *,
    max_jumps: int = DEFAULT_MAX_JUMPS,
    censor_threshold: float = DEFAULT_CENSOR_THRESHOLD,
    workers: int | None = None,
) -> McEstimate:
    """Estimate the kernel block (1/m(y)) E^x[1_{X_t = y} V_t //_t^*]."""
    if not t > 0:
        raise NonPositiveTime(f"t = {t} must be positive")
    j = g.idx(y)
    task = _ChunkTask(g, bundle, g.idx(x), _times(t), int(seed), max_jumps, None, _KernelReducer(j, float(g.measure[j])))
    vals, cens = _simulate(task, n_samples, 0, workers)
    return _estimate(vals[:, 0], cens, seed, censor_threshold)


def mc_trace(
    g: WeightedGraph,
    bundle: BundleData,
    t: float,
    n_samples_per_vertex: int,
    seed: int,
    *,
    max_jumps: int = DEFAULT_MAX_JUMPS,
    censor_threshold: float = DEFAULT_CENSOR_THRESHOLD,
    workers: int | None = None,
) -> McEstimate:
    """Estimate tr e^{-tH} = sum_x tr E^x[1_{X_t = x} V_t //_t^*].

    Vertex k uses path indices k*n .. (k+1)*n - 1 of the master seed.
    """
    if not t > 0:
        raise NonPositiveTime(f"t = {t} must be positive")
    n = n_samples_per_vertex
    total, var_re, var_im = 0.0 + 0.0j, 0.0, 0.0
    cens_all = []
    for i in range(g.n):
        task = _ChunkTask(g, bundle, i, _times(t), int(seed), max_jumps, None, _TraceReducer(i))
        vals, cens = _simulate(task, n, i * n, workers)
        v = vals[:, 0]
        total += v.mean()
        if n > 1:
            var_re += v.real.var(ddof=1) / n
            var_im += v.imag.var(ddof=1) / n
        cens_all.append(cens)
    cens = np.concatenate(cens_all)
    frac = float(cens.mean())
    if frac > censor_threshold:
        raise CensoredFractionExceeded(f"censored fraction {frac:.3g} exceeds threshold {censor_threshold:.3g}")
    return McEstimate(
        np.asarray(total), np.asarray(np.sqrt(var_re) + 1j * np.sqrt(var_im)), n * g.n, frac, int(seed)
    )


def laplace_nodes(lam: complex, k: int, shift: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Times t_j and complex weights c_j with

        (1/(k-1)!) int_0^inf t^{k-1} e^{-t lam} g(t) dt  ~  sum_j c_j g(t_j).

    ``shift`` is a lower bound of the decay rate of g (g(t) = O(e^{-shift t}));
    the quadrature weight is t^{k-1} e^{-rate t} with rate = Re(lam) + shift.
    """
    rate = float(np.real(lam)) + shift
    if not rate > 0:
        raise SpectralConditionViolated(f"Re(lambda) + min spec = {rate} must be positive")
    s, w = roots_genlaguerre(nodes, k - 1)
    t = s / rate
    resid = np.exp(-t * (lam - rate))  # e^{-t lam} / e^{-t rate}
    c = w * resid / rate**k / factorial(k - 1)
    return t, c


def mc_resolvent(
    g: WeightedGraph,
    bundle: BundleData,
    f,
    x,
    lam: complex,
    k: int,
    quadrature: LaguerreSpec | None = None,
    mc: McConfig | None = None,
) -> McEstimate:
    """Estimate (H + lam)^{-k} f(x) via the Laplace transform of the FK formula.

    All quadrature nodes share one path population resolved to the largest node.
    """
    quadrature = quadrature or LaguerreSpec()
    mc = mc or McConfig()
    if k < 1:
        raise ValueError("k must be a positive integer")
    lmin = assemble(g, bundle).min_eigenvalue()
    if not np.real(lam) > -lmin:
        raise SpectralConditionViolated(f"Re(lambda) = {np.real(lam)} does not exceed -min spec(H) = {-lmin}")
    ts, cs = laplace_nodes(lam, k, lmin, quadrature.nodes)
    vals, cens = mc_semigroup_paths(
        g, bundle, f, x, ts, mc.n_samples, mc.seed, max_jumps=mc.max_jumps, workers=mc.workers
    )
    per_path = np.einsum("pqi,q->pi", vals, cs)
    return _estimate(per_path, cens, mc.seed, mc.censor_threshold)


def laplace_quadrature_exact(op: OperatorMatrix, f, lam: complex, k: int, nodes: int) -> np.ndarray:
    """The Gauss-Laguerre rule of :func:`mc_resolvent` applied to the exact
    semigroup; its distance to the exact resolvent is the quadrature error.

    Evaluated on the spectrum so that e^{-t lam} and e^{-tH} are combined
    before exponentiation (no overflow at large nodes).
    """
    spec, W = op.spectrum()
    lmin = float(spec[0])
    rate = float(np.real(lam)) + lmin
    if not rate > 0:
        raise SpectralConditionViolated(f"Re(lambda) + min spec = {rate} must be positive")
    s, w = roots_genlaguerre(nodes, k - 1)
    t = s / rate
    # sum_j w_j e^{-t_j (lam - rate + mu)} / rate^k / (k-1)!  for each eigenvalue mu
    expo = -np.outer(spec - lmin, t) - 1j * np.imag(lam) * t[None, :]
    phi = (np.exp(expo) @ w) / rate**k / factorial(k - 1)
    d = op._dhalf()
    f = np.asarray(f, dtype=complex).reshape(-1)
    out = (W @ (phi * (W.conj().T @ (d * f)))) / d
    return out.reshape(op.size, op.rank)


# ---------------------------------------------------------------------------
# scalar comparison and Kato machinery (exact, finite graphs)


def kato_functional(g: WeightedGraph, w, t: float, quadrature_nodes: int | None = None) -> float:
    """sup_x int_0^t sum_y p(s,x,y) |w(y)| m(y) ds.

    By default the time integral is evaluated in closed form on the spectrum
    of the free operator, int_0^t e^{-s lam} ds = -expm1(-t lam) / lam.  With
    ``quadrature_nodes`` a composite Simpson rule on the exact kernel is used
    instead.
    """
    if not t > 0:
        raise NonPositiveTime(f"t = {t} must be positive")
    op = scalar_operator(g, np.zeros(g.n))
    u = np.abs(np.asarray(w, dtype=float))
    if quadrature_nodes is not None:
        s = np.linspace(0.0, t, 2 * (max(int(quadrature_nodes), 2) // 2) + 1)
        vals = np.array([apply_semigroup(op, si, u).real.ravel() for si in s])
        return float(simpson(vals, x=s, axis=0).max())
    lam, W = op.spectrum()
    small = np.abs(lam) < 1e-300
    phi = np.where(small, t, -np.expm1(-t * lam) / np.where(small, 1.0, lam))
    d = np.sqrt(g.measure)
    vals = (W @ (phi * (W.conj().T @ (d * u)))) / d
    return float(vals.real.max())


def kato_expectation(g: WeightedGraph, w_minus, t: float) -> float:
    """sup_x E^x[1_{t<tau} e^{int_0^t |w(X_s)| ds}] = sup_x e^{-tH_{0,-|w|}} 1 (x)."""
    op = scalar_operator(g, -np.abs(np.asarray(w_minus, dtype=float)))
    return float(apply_semigroup(op, t, np.ones(g.n)).real.max())


def kato_constants(g: WeightedGraph, w_minus, delta: float, t_grid) -> float:
    """Smallest C >= 0 with sup_x E^x[...] <= delta e^{tC} on ``t_grid``."""
    if not delta > 1:
        raise ValueError("delta must exceed 1")
    C = 0.0
    for t in t_grid:
        if t <= 0:
            continue
        C = max(C, np.log(kato_expectation(g, w_minus, t) / delta) / t)
    return float(C)


@dataclass
class DominationReport:
    t: float
    semigroup_lhs: np.ndarray  # |e^{-tH_{Phi,V}} f|(x)
    semigroup_rhs: np.ndarray  # e^{-tH_{0,w}} |f| (x)
    form_lhs: float
    form_rhs: float
    min_spec: float
    min_spec_scalar: float
    lam: float
    k: int
    resolvent_lhs: np.ndarray
    resolvent_rhs: np.ndarray
    kernel_lhs: np.ndarray  # operator norms of the kernel blocks
    kernel_rhs: np.ndarray
    tolerance: float = 1e-9

    def _le(self, a, b) -> bool:
        a, b = np.asarray(a), np.asarray(b)
        return bool(np.all(a <= b + self.tolerance * np.maximum(1.0, np.abs(b))))

    @property
    def semigroup_ok(self) -> bool:
        return self._le(self.semigroup_lhs, self.semigroup_rhs)

    @property
    def form_ok(self) -> bool:
        return self._le(self.form_rhs, self.form_lhs)

    @property
    def spectrum_ok(self) -> bool:
        return self._le(self.min_spec_scalar, self.min_spec)

    @property
    def resolvent_ok(self) -> bool:
        return self._le(self.resolvent_lhs, self.resolvent_rhs)

    @property
    def kernel_ok(self) -> bool:
        return self._le(self.kernel_lhs, self.kernel_rhs)

    @property
    def passed(self) -> bool:
        return self.semigroup_ok and self.form_ok and self.spectrum_ok and self.resolvent_ok and self.kernel_ok


def domination_report(
    g: WeightedGraph,
    bundle: BundleData,
    f,
    t: float,
    lam: complex | None = None,
    k: int = 1,
    op: OperatorMatrix | None = None,
) -> DominationReport:
    """Compare the bundle semigroup, form, spectrum and resolvent with the
    scalar operator H_{0,w}, w = min spec V, exactly.

    ``lam`` defaults to 1 - min spec(H_{0,w}); the scalar side of the
    resolvent comparison uses Re(lam).
    """
    f = _section(g, bundle, f)
    op = op or assemble(g, bundle)
    w = min_spec_potential(bundle)
    sop = scalar_operator(g, w)
    absf = fibre_norms(f)

    lhs = fibre_norms(apply_semigroup(op, t, f))
    rhs = apply_semigroup(sop, t, absf).real.ravel()

    form_lhs = quadratic_form(g, bundle, f, f).real
    form_rhs = quadratic_form(g, scalar_bundle(g, w), absf, absf).real

    smin = sop.min_eigenvalue()
    if lam is None:
        lam = 1.0 - smin
    res_l = fibre_norms(resolvent_power(op, lam, k, f))
    res_r = resolvent_power(sop, float(np.real(lam)), k, absf).real.ravel()

    Kv = heat_kernel(op, t).K
    Ks = heat_kernel(sop, t).K[:, :, 0, 0].real
    kl = np.linalg.norm(Kv, ord=2, axis=(-2, -1))

    return DominationReport(
        t, lhs, rhs, float(form_lhs), float(form_rhs), op.min_eigenvalue(), smin,
        lam, k, res_l, res_r, kl, Ks,
    )
