"""Named check suites comparing measured quantities with bounds or oracles.

Each suite returns a list of :class:`CheckRecord`; every record carries the
measured value, its comparison target, the relation and the tolerance used.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .bundle import (
    BundleData,
    min_spec_potential,
    negative_part_bound,
    scalar_bundle,
    truncate_potential,
)
from .errors import CovheatError
from .feynman_kac import (
    DEFAULT_CENSOR_THRESHOLD,
    McEstimate,
    _stderr,
    domination_report,
    kato_constants,
    kato_expectation,
    kato_functional,
    mc_dirichlet,
    mc_composed,
    mc_semigroup,
    mc_semigroup_paths,
)
from .graph import VertexSubset, WeightedGraph, exhaustion
from .operator import (
    apply_semigroup,
    assemble,
    dirichlet_operator,
    extend,
    free_scalar_operator,
    golden_thompson_rhs,
    inner_m,
    lp_norm_check,
    scalar_operator,
    trace_semigroup,
)
from .paths import DEFAULT_MAX_JUMPS, path_stream, sample_path
from .transport import (
    adjoint_ordered_exponential,
    dyson_series,
    inverse_ordered_exponential,
    ordered_exponential,
    parallel_transport,
    perturbation_bound,
    potential_path_integral,
    reversed_ordered_exponential,
    reversed_transport,
)

SIGMA = 4.0
SIGMA_FLOOR = 1e-12


@dataclass
class CheckRecord:
    name: str
    status: str  # "pass" | "fail" | "skip"
    measured: object
    target: object
    relation: str  # "<=", ">=", "==", "~sigma"
    tolerance: float
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def to_json(self) -> dict:
        return jsonable(asdict(self))


@dataclass
class CheckConfig:
    t: float = 1.0
    times: tuple[float, ...] = (0.1, 1.0, 5.0)
    x: object = None
    f: np.ndarray | None = None
    samples: int = 20_000
    seed: int = 0
    max_jumps: int = DEFAULT_MAX_JUMPS
    censor_threshold: float = DEFAULT_CENSOR_THRESHOLD
    workers: int | None = None
    lam: complex | None = None
    k: int = 1
    delta: float = 2.0
    q_values: tuple[float, ...] = (2.0, 4.0, np.inf)
    kato_grid: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0, 5.0)
    n_paths: int = 200
    dyson_order: int = 10
    truncation_level: float = 1.0
    n_theta: int = 10
    exhaustion_step: int = 1
    tol: float = 1e-9


def jsonable(obj):
    """Recursively convert numpy and complex values to JSON-friendly data."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        if np.isnan(v):
            return "nan"
        return v
    return obj


def le_record(name, measured, bound, tol, **extra) -> CheckRecord:
    ok = measured <= bound + tol * max(1.0, abs(bound))
    return CheckRecord(name, "pass" if ok else "fail", float(measured), float(bound), "<=", tol, extra)


def close_record(name, measured, target, tol, **extra) -> CheckRecord:
    ok = abs(measured - target) <= tol
    return CheckRecord(name, "pass" if ok else "fail", measured, target, "==", tol, extra)


def sigma_record(name, est: McEstimate, target, n_sigma: float = SIGMA, **extra) -> CheckRecord:
    ok = bool(np.all(est.agrees_with(target, n_sigma, SIGMA_FLOOR)))
    extra = dict(stderr=est.stderr, samples=est.samples, censored_fraction=est.censored_fraction, **extra)
    return CheckRecord(name, "pass" if ok else "fail", est.value, np.asarray(target), "~sigma", n_sigma, extra)


def combined_sigma_record(name, a, sa, b, sb, n_sigma: float = SIGMA, **extra) -> CheckRecord:
    """|a - b| <= n_sigma * sqrt(sa^2 + sb^2) for real and imaginary parts separately."""
    a, b, sa, sb = (np.asarray(v) for v in (a, b, sa, sb))
    se_re = np.hypot(sa.real, sb.real)
    se_im = np.hypot(sa.imag, sb.imag)
    d = a - b
    ok = bool(
        np.all(np.abs(d.real) <= n_sigma * se_re + SIGMA_FLOOR)
        and np.all(np.abs(d.imag) <= n_sigma * se_im + SIGMA_FLOOR)
    )
    return CheckRecord(
        name, "pass" if ok else "fail", a, b, "~sigma", n_sigma, dict(stderr=se_re + 1j * se_im, **extra)
    )


def default_section(g: WeightedGraph, nu: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((g.n, nu)) + 1j * rng.standard_normal((g.n, nu))


def _section(g, bundle, cfg) -> np.ndarray:
    if cfg.f is not None:
        f = np.asarray(cfg.f, dtype=complex)
        return f[:, None] if f.ndim == 1 else f
    return default_section(g, bundle.rank, cfg.seed)


def _start(g, cfg):
    return g.vertices[0] if cfg.x is None else cfg.x


def _paths(g, cfg, t):
    """Deterministic test paths with starts cycling through the vertices."""
    out = []
    for p in range(cfg.n_paths):
        x = g.vertices[p % g.n]
        out.append(sample_path(g, x, t, path_stream(cfg.seed, p), cfg.max_jumps))
    return out


# ---------------------------------------------------------------------------
# suites


def suite_domination(g, bundle, cfg: CheckConfig) -> list[CheckRecord]:
    f = _section(g, bundle, cfg)
    r = domination_report(g, bundle, f, cfg.t, cfg.lam, cfg.k)
    tol = cfg.tol
    gap = lambda a, b: float(np.max(np.asarray(a) - np.asarray(b)))  # noqa: E731
    return [
        CheckRecord("semigroup domination", "pass" if r.semigroup_ok else "fail",
                    r.semigroup_lhs, r.semigroup_rhs, "<=", tol, dict(max_gap=gap(r.semigroup_lhs, r.semigroup_rhs))),
        CheckRecord("form comparison", "pass" if r.form_ok else "fail", r.form_rhs, r.form_lhs, "<=", tol),
        CheckRecord("min spec comparison", "pass" if r.spectrum_ok else "fail",
                    r.min_spec_scalar, r.min_spec, "<=", tol),
        CheckRecord("resolvent domination", "pass" if r.resolvent_ok else "fail", r.resolvent_lhs,
                    r.resolvent_rhs, "<=", tol, dict(lam=r.lam, k=r.k, max_gap=gap(r.resolvent_lhs, r.resolvent_rhs))),
        CheckRecord("kernel domination", "pass" if r.kernel_ok else "fail", float(r.kernel_lhs.max()),
                    float(r.kernel_rhs.max()), "<=", tol, dict(max_gap=gap(r.kernel_lhs, r.kernel_rhs))),
    ]


def suite_golden_thompson(g, bundle, cfg: CheckConfig) -> list[CheckRecord]:
    op = assemble(g, bundle)
    out = []
    for t in cfg.times:
        lhs = trace_semigroup(op, t)
        tight, scaled = golden_thompson_rhs(g, bundle, t)
        eq = abs(lhs - tight) <= cfg.tol * max(1.0, tight)
        out.append(le_record(f"trace <= tight bound (t={t:g})", lhs, tight, cfg.tol,
                             rhs_scaled=scaled, equality=bool(eq)))
        out.append(le_record(f"tight <= rank-scaled bound (t={t:g})", tight, scaled, cfg.tol))
    return out


def suite_kato(g, bundle, cfg: CheckConfig) -> list[CheckRecord]:
    out = []
    c = 1.0
    for t in cfg.times:
        out.append(close_record(f"constant potential functional (t={t:g})",
                                kato_functional(g, np.full(g.n, c), t), c * t, 1e-10))
    w = np.abs(min_spec_potential(bundle))
    if w.max() > 0:
        ts = (1e-1, 1e-2, 1e-3)
        F = [kato_functional(g, w, t) for t in ts]
        degmax = float(g.degm().max())
        for (t_hi, f_hi), (t_lo, f_lo) in zip(zip(ts, F), zip(ts[1:], F[1:])):
            ratio = f_hi / f_lo
            out.append(close_record(f"small-time decay ratio ({t_hi:g}/{t_lo:g})", ratio, 10.0,
                                    10.0 * t_hi * degmax, values=[f_hi, f_lo]))
    else:
        out.append(CheckRecord("small-time decay ratio", "skip", 0.0, 0.0, "==", 0.0, dict(reason="w = 0")))
    wm = negative_part_bound(bundle)
    C = kato_constants(g, wm, cfg.delta, cfg.kato_grid)
    worst = max(kato_expectation(g, wm, t) / (cfg.delta * np.exp(t * C)) for t in cfg.kato_grid)
    out.append(le_record("calibrated exponential moment bound", worst, 1.0, cfg.tol, C=C, delta=cfg.delta))
    return out


def suite_lp(g, bundle, cfg: CheckConfig) -> list[CheckRecord]:
    op = assemble(g, bundle)
    free = free_scalar_operator(g)
    wm = negative_part_bound(bundle)
    out = []
    for t in cfg.times:
        C = kato_constants(g, 2.0 * wm, cfg.delta, sorted(set(cfg.kato_grid) | {t}))
        for q in cfg.q_values:
            r = lp_norm_check(op, free, t, q, cfg.delta, C)
            out.append(CheckRecord(
                f"l2->l{q:g} smoothing (t={t:g})", "pass" if r.passed else "fail", r.norm, r.bound, "<=",
                r.tolerance, dict(norm_upper=r.norm_upper, heat_sup=r.heat_sup, kato_constant=C),
            ))
    return out


def suite_semigroup_law(g, bundle, cfg: CheckConfig) -> list[CheckRecord]:
    f = _section(g, bundle, cfg)
    x = _start(g, cfg)
    op = assemble(g, bundle)
    r = s = cfg.t / 2
    exact = apply_semigroup(op, r, apply_semigroup(op, s, f))
    direct = apply_semigroup(op, r + s, f)
    i = g.idx(x)
    n = cfg.samples
    # the direct run uses stream indices past those of the spliced estimate (0 .. 2n-1)
    est = mc_semigroup(g, bundle, f, x, r + s, n, cfg.seed, max_jumps=cfg.max_jumps,
                       censor_threshold=cfg.censor_threshold, workers=cfg.workers, first_index=2 * n)
    comp = mc_composed(g, bundle, f, x, r, s, n, cfg.seed, max_jumps=cfg.max_jumps,
                       censor_threshold=cfg.censor_threshold)
    return [
        close_record("exact semigroup law", float(np.abs(exact - direct).max()), 0.0, 1e-10),
        combined_sigma_record(f"MC T_(r+s) vs MC T_r T_s at {x}", est.value, est.stderr, comp.value,
                              comp.stderr, r=r, s=s),
        sigma_record(f"MC T_(r+s) vs exact T_r T_s at {x}", est, exact[i], r=r, s=s),
    ]


def _mc_inner(g, bundle, f, h, t, cfg, offset):
    """MC estimate of <T_t f, h>_m with per-vertex path blocks."""
    n = cfg.samples
    total = 0.0 + 0.0j
    var_re = var_im = 0.0
    for i in range(g.n):
        vals, cens = mc_semigroup_paths(g, bundle, f, g.vertices[i], t, n, cfg.seed, max_jumps=cfg.max_jumps,
                                        workers=cfg.workers, first_index=(offset + i) * n)
        if cens.mean() > cfg.censor_threshold:
            raise CovheatError("censored fraction exceeded in inner-product estimate")
        c = g.measure[i] * np.einsum("pi,i->p", vals[:, 0], h[i].conj())
        total += c.mean()
        se = _stderr(c[:, None])[0]
        var_re += se.real**2
        var_im += se.imag**2
    return total, np.sqrt(var_re) + 1j * np.sqrt(var_im)


def suite_adjoint(g, bundle, cfg: CheckConfig) -> list[CheckRecord]:
    f = _section(g, bundle, cfg)
    h = default_section(g, bundle.rank, cfg.seed + 1)
    t = cfg.t
    op = assemble(g, bundle)
    exact = inner_m(apply_semigroup(op, t, f), h, g.measure)
    a, sa = _mc_inner(g, bundle, f, h, t, cfg, 0)
    bb, sb = _mc_inner(g, bundle, h, f, t, cfg, g.n)
    b = np.conj(bb)  # <f, T_t h> = conj(<T_t h, f>)
    worst = 0.0
    for path in _paths(g, cfg, t):
        lhs = reversed_transport(path, bundle, t, t) @ reversed_ordered_exponential(path, bundle, t, t).conj().T
        rhs = ordered_exponential(path, bundle, t) @ parallel_transport(path, bundle, t).conj().T
        worst = max(worst, float(np.linalg.norm(lhs - rhs, 2)))
    return [
        combined_sigma_record("MC <T f, h> vs <f, T h>", a, sa, b, sb, exact=exact),
        combined_sigma_record("MC <T f, h> vs exact", a, sa, exact, 0.0),
        close_record("reversed transport identity", worst, 0.0, 1e-10, paths=cfg.n_paths),
    ]


def suite_dyson(g, bundle, cfg: CheckConfig) -> list[CheckRecord]:
    t = cfg.t
    w = min_spec_potential(bundle)
    trunc = truncate_potential(bundle, cfg.truncation_level)
    eye = np.eye(bundle.rank)
    d_gap = inv_err = adj_err = norm_gap = pert_gap = -np.inf
    for path in _paths(g, cfg, t):
        Vt = ordered_exponential(path, bundle, t)
        S, tail = dyson_series(path, bundle, t, cfg.dyson_order)
        d_gap = max(d_gap, np.linalg.norm(Vt - S, 2) - tail)
        inv_err = max(inv_err, np.linalg.norm(inverse_ordered_exponential(path, bundle, t) @ Vt - eye, 2))
        adj_err = max(adj_err, np.linalg.norm(adjoint_ordered_exponential(path, bundle, t) - Vt.conj().T, 2))
        bound = np.exp(-potential_path_integral(path, bundle, t, w))
        norm_gap = max(norm_gap, np.linalg.norm(Vt, 2) / bound - 1.0)
        diff = np.linalg.norm(Vt - ordered_exponential(path, trunc, t), 2)
        pert_gap = max(pert_gap, diff - perturbation_bound(path, bundle, trunc, t))
    return [
        le_record("Dyson truncation error - tail bound", d_gap, 0.0, 1e-12, order=cfg.dyson_order),
        close_record("inverse ordered exponential", float(inv_err), 0.0, 1e-9),
        close_record("adjoint ordered exponential", float(adj_err), 0.0, 1e-9),
        le_record("norm bound ratio - 1", norm_gap, 0.0, 1e-12),
        le_record("truncation perturbation gap", pert_gap, 0.0, 1e-12, level=cfg.truncation_level),
    ]


def suite_scalar_reduction(g, bundle, cfg: CheckConfig) -> list[CheckRecord]:
    if bundle.rank != 1:
        return [CheckRecord("scalar reduction", "skip", 0.0, 0.0, "==", 0.0, dict(reason="rank > 1"))]
    from .fixtures import random_magnetic

    rng = np.random.default_rng(cfg.seed)
    v = bundle.potential[:, 0, 0].real
    base = scalar_bundle(g, v)
    f = _section(g, bundle, cfg)
    x = _start(g, cfg)
    t = cfg.t
    paths = _paths(g, cfg, t)
    ref = [ordered_exponential(p, base, t) for p in paths]
    worst = 0.0
    out = []
    for j in range(cfg.n_theta):
        mb = random_magnetic(rng, g, v)
        for p, R in zip(paths, ref):
            worst = max(worst, float(np.abs(ordered_exponential(p, mb, t) - R).max() / max(1.0, abs(R[0, 0]))))
        est = mc_semigroup(g, mb, f, x, t, cfg.samples, cfg.seed, max_jumps=cfg.max_jumps,
                           censor_threshold=cfg.censor_threshold, workers=cfg.workers)
        exact = apply_semigroup(assemble(g, mb), t, f)[g.idx(x)]
        out.append(sigma_record(f"magnetic MC vs exact (theta #{j})", est, exact))
    out.insert(0, close_record("ordered exponential independent of theta", worst, 0.0, 1e-14))
    return out


def suite_exhaustion(g, bundle, cfg: CheckConfig) -> list[CheckRecord]:
    """Domain monotonicity for the scalar comparison operator H_{0,w}."""
    x = _start(g, cfg)
    w = min_spec_potential(bundle)
    sb = scalar_bundle(g, w)
    t = cfg.t
    balls = exhaustion(g, x, cfg.exhaustion_step)
    full = assemble(g, sb).semigroup_matrix(t).real

    def padded(U: VertexSubset):
        E = dirichlet_operator(g, sb, U).semigroup_matrix(t).real
        P = np.zeros((g.n, g.n))
        idx = U.sorted_indices()
        P[np.ix_(idx, idx)] = E
        return P

    mats = [padded(U) for U in balls]
    worst_drop = 0.0
    for A, B in zip(mats, mats[1:]):
        worst_drop = max(worst_drop, float((A - B).max()))
    out = [
        le_record("monotone along exhaustion (max decrease)", worst_drop, 0.0, 1e-10, steps=len(balls)),
        close_record("final ball equals full semigroup", float(np.abs(mats[-1] - full).max()), 0.0, 1e-10,
                     final_is_whole_graph=len(balls[-1]) == g.n),
    ]
    U0 = balls[0]
    f = np.ones(g.n)
    est = mc_dirichlet(g, sb, U0, f, x, t, cfg.samples, cfg.seed, max_jumps=cfg.max_jumps,
                       censor_threshold=cfg.censor_threshold, workers=cfg.workers)
    exact = apply_semigroup(dirichlet_operator(g, sb, U0), t, np.ones(len(U0)))
    out.append(sigma_record("MC Dirichlet on first ball", est, exact[U0.sorted_indices().index(g.idx(x))]))
    return out


SUITES: dict[str, Callable[[WeightedGraph, BundleData, CheckConfig], list[CheckRecord]]] = {
    "domination": suite_domination,
    "golden-thompson": suite_golden_thompson,
    "kato": suite_kato,
    "lp": suite_lp,
    "semigroup-law": suite_semigroup_law,
    "adjoint": suite_adjoint,
    "dyson": suite_dyson,
    "scalar-reduction": suite_scalar_reduction,
    "exhaustion": suite_exhaustion,
}

# suites that draw Monte Carlo samples
MC_SUITES = {"semigroup-law", "adjoint", "scalar-reduction", "exhaustion"}


def run_suite(name: str, g: WeightedGraph, bundle: BundleData, cfg: CheckConfig) -> list[CheckRecord]:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}") from None
    return fn(g, bundle, cfg)
