"""Command-line interface.

Every subcommand writes one JSON report (schema ``covheat-report/1``) to
standard output and a short human summary to standard error.  The exit code
is 0 iff every check passed, 1 if a check failed, 3 on a model or estimator
error and 2 on usage errors.  The worker count for Monte Carlo runs comes from
the ``COVHEAT_WORKERS`` environment variable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from .bundle import validate_bundle
from .checks import (
    MC_SUITES,
    SUITES,
    CheckConfig,
    CheckRecord,
    jsonable,
    le_record,
    run_suite,
    sigma_record,
)
from .errors import CovheatError
from .feynman_kac import (
    DEFAULT_CENSOR_THRESHOLD,
    LaguerreSpec,
    McConfig,
    laplace_quadrature_exact,
    mc_dirichlet,
    mc_kernel,
    mc_resolvent,
    mc_semigroup,
    mc_trace,
)
from .graph import VertexSubset
from .io import parse_model
from .operator import (
    apply_semigroup,
    assemble,
    dirichlet_operator,
    golden_thompson_rhs,
    heat_kernel,
    resolvent_power,
    restrict,
    trace_semigroup,
)
from .paths import DEFAULT_MAX_JUMPS

SCHEMA = "covheat-report/1"


class UsageError(Exception):
    pass


def _mc_flags(p: argparse.ArgumentParser, required_seed: bool) -> None:
    p.add_argument("--samples", type=int, default=None if not required_seed else 100_000,
                   help="number of paths (per vertex for trace)")
    p.add_argument("--seed", type=int, required=required_seed, help="master seed (mandatory for MC)")
    p.add_argument("--max-jumps", type=int, default=DEFAULT_MAX_JUMPS)
    p.add_argument("--censor-threshold", type=float, default=DEFAULT_CENSOR_THRESHOLD)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covheat", description="Covariant heat semigroups on weighted graphs.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("model", help="JSON model file")
        p.add_argument("--timing", action="store_true", help="include wall-clock timing in the report")
        return p

    common("validate", "validate a model file")

    p = common("exact", "exact semigroup value e^{-tH} f(x)")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--f", help="section name")
    p.add_argument("--subset", help="comma separated vertex ids (Dirichlet restriction)")

    p = common("mc", "Feynman-Kac Monte Carlo estimate of e^{-tH} f(x)")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--f", help="section name")
    p.add_argument("--subset", help="comma separated vertex ids (Dirichlet restriction)")
    _mc_flags(p, True)

    p = common("kernel", "heat kernel block K(t, x, y)")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    _mc_flags(p, False)

    p = common("trace", "trace of e^{-tH} and its Golden-Thompson bounds")
    p.add_argument("--t", type=float, required=True)
    _mc_flags(p, False)

    p = common("resolvent", "(H + lambda)^{-k} f(x)")
    p.add_argument("--x", required=True)
    p.add_argument("--f", help="section name")
    p.add_argument("--lambda-re", type=float, required=True)
    p.add_argument("--lambda-im", type=float, default=0.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--nodes", type=int, default=LaguerreSpec().nodes, help="Gauss-Laguerre nodes")
    _mc_flags(p, False)

    p = sub.add_parser("check", help="run a named check suite")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("model", help="JSON model file")
    p.add_argument("--timing", action="store_true")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--x")
    p.add_argument("--f", help="section name")
    p.add_argument("--lambda-re", type=float, default=None)
    p.add_argument("--lambda-im", type=float, default=0.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--delta", type=float, default=2.0)
    p.add_argument("--paths", type=int, default=200, help="number of test paths for path-wise suites")
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-jumps", type=int, default=DEFAULT_MAX_JUMPS)
    p.add_argument("--censor-threshold", type=float, default=DEFAULT_CENSOR_THRESHOLD)
    return ap


def _section(model, name):
    if name is None:
        if len(model.sections) == 1:
            return next(iter(model.sections.values()))
        raise UsageError("--f is required (model has %d sections)" % len(model.sections))
    try:
        return model.sections[name]
    except KeyError:
        raise UsageError(f"unknown section {name!r}; available: {sorted(model.sections)}") from None


def _subset(g, spec):
    if not spec:
        return None
    return VertexSubset.of(g, [s.strip() for s in spec.split(",") if s.strip()])


def _need_seed(args):
    if args.samples is not None and args.seed is None:
        raise UsageError("--seed is mandatory for Monte Carlo runs")


def _estimate_json(est) -> dict:
    return {
        "value": est.value,
        "stderr": est.stderr,
        "samples": est.samples,
        "censored_fraction": est.censored_fraction,
        "seed": est.seed,
    }


def _censor_record(est, threshold) -> CheckRecord:
    return le_record("censored fraction", est.censored_fraction, threshold, 0.0)


# ---------------------------------------------------------------------------
# commands; each returns (results, checks)


def cmd_validate(args, model):
    rep = validate_bundle(model.graph, model.bundle)
    checks = [
        le_record(f"unitarity {u}-{v}", d, rep.tolerance, 0.0) for (u, v), d in rep.unitarity_defect.items()
    ] + [le_record(f"hermiticity {x}", d, rep.tolerance, 0.0) for x, d in rep.hermiticity_defect.items()]
    g = model.graph
    results = {
        "vertices": g.n,
        "edges": len(g.weights),
        "rank": model.bundle.rank,
        "sections": sorted(model.sections),
        "max_unitarity_defect": rep.max_unitarity_defect,
        "max_hermiticity_defect": rep.max_hermiticity_defect,
    }
    return results, checks


def _exact_value(model, f, x, t, U):
    g, b = model.graph, model.bundle
    if U is None:
        return apply_semigroup(assemble(g, b), t, f)[g.idx(x)]
    op = dirichlet_operator(g, b, U)
    return apply_semigroup(op, t, restrict(f, U))[op.local(x)]


def cmd_exact(args, model):
    f = _section(model, args.f)
    U = _subset(model.graph, args.subset)
    val = _exact_value(model, f, args.x, args.t, U)
    return {"t": args.t, "x": args.x, "subset": args.subset, "value": val}, []


def cmd_mc(args, model):
    g, b = model.graph, model.bundle
    f = _section(model, args.f)
    U = _subset(g, args.subset)
    kw = dict(max_jumps=args.max_jumps, censor_threshold=args.censor_threshold)
    if U is None:
        est = mc_semigroup(g, b, f, args.x, args.t, args.samples, args.seed, **kw)
    else:
        est = mc_dirichlet(g, b, U, f, args.x, args.t, args.samples, args.seed, **kw)
    exact = _exact_value(model, f, args.x, args.t, U)
    res = {"t": args.t, "x": args.x, "subset": args.subset, **_estimate_json(est), "exact": exact}
    return res, [sigma_record("MC vs exact semigroup", est, exact), _censor_record(est, args.censor_threshold)]


def cmd_kernel(args, model):
    _need_seed(args)
    g, b = model.graph, model.bundle
    K = heat_kernel(assemble(g, b), args.t)
    exact = K(g.idx(args.x), g.idx(args.y))
    res = {"t": args.t, "x": args.x, "y": args.y, "exact": exact}
    checks = []
    if args.samples:
        est = mc_kernel(g, b, args.x, args.y, args.t, args.samples, args.seed,
                        max_jumps=args.max_jumps, censor_threshold=args.censor_threshold)
        res["mc"] = _estimate_json(est)
        checks = [sigma_record("MC vs exact kernel", est, exact), _censor_record(est, args.censor_threshold)]
    return res, checks


def cmd_trace(args, model):
    _need_seed(args)
    g, b = model.graph, model.bundle
    lhs = trace_semigroup(assemble(g, b), args.t)
    tight, scaled = golden_thompson_rhs(g, b, args.t)
    res = {"t": args.t, "lhs": lhs, "rhs_tight": tight, "rhs_scaled": scaled}
    checks = [le_record("trace <= tight bound", lhs, tight, 1e-9), le_record("tight <= rank-scaled bound", tight, scaled, 1e-9)]
    if args.samples:
        est = mc_trace(g, b, args.t, args.samples, args.seed,
                       max_jumps=args.max_jumps, censor_threshold=args.censor_threshold)
        res["mc"] = _estimate_json(est)
        checks += [sigma_record("MC vs exact trace", est, lhs), _censor_record(est, args.censor_threshold)]
    return res, checks


def cmd_resolvent(args, model):
    _need_seed(args)
    g, b = model.graph, model.bundle
    f = _section(model, args.f)
    lam = complex(args.lambda_re, args.lambda_im)
    op = assemble(g, b)
    i = g.idx(args.x)
    exact = resolvent_power(op, lam, args.k, f)[i]
    res = {"x": args.x, "lambda": lam, "k": args.k, "exact": exact}
    checks = []
    if args.samples:
        quad = laplace_quadrature_exact(op, f, lam, args.k, args.nodes)[i]
        qerr = float(np.abs(quad - exact).max())
        est = mc_resolvent(g, b, f, args.x, lam, args.k, LaguerreSpec(args.nodes),
                           McConfig(args.samples, args.seed, args.max_jumps, args.censor_threshold))
        res["mc"] = _estimate_json(est)
        res["quadrature_error"] = qerr
        rec = sigma_record("MC vs exact resolvent", est, exact, quadrature_error=qerr)
        rec.status = "pass" if np.all(est.agrees_with(exact, 4.0, qerr + 1e-12)) else "fail"
        checks = [rec, _censor_record(est, args.censor_threshold)]
    return res, checks


def cmd_check(args, model):
    g, b = model.graph, model.bundle
    if args.suite in MC_SUITES and args.seed is None:
        raise UsageError(f"--seed is mandatory for the {args.suite} suite")
    f = model.sections.get(args.f) if args.f else (next(iter(model.sections.values())) if len(model.sections) == 1 else None)
    if args.f and f is None:
        raise UsageError(f"unknown section {args.f!r}")
    lam = None if args.lambda_re is None else complex(args.lambda_re, args.lambda_im)
    cfg = CheckConfig(
        t=args.t, times=(args.t,), x=args.x, f=f, samples=args.samples,
        seed=0 if args.seed is None else args.seed, max_jumps=args.max_jumps,
        censor_threshold=args.censor_threshold, lam=lam, k=args.k, delta=args.delta, n_paths=args.paths,
    )
    checks = run_suite(args.suite, g, b, cfg)
    res = {"suite": args.suite, "t": args.t}
    if args.suite == "golden-thompson":
        rec = checks[0]
        res.update(lhs=rec.measured, rhs_tight=rec.target, rhs_scaled=rec.extra["rhs_scaled"],
                   equality=rec.extra["equality"])
    return res, checks


COMMANDS = {
    "validate": cmd_validate,
    "exact": cmd_exact,
    "mc": cmd_mc,
    "kernel": cmd_kernel,
    "trace": cmd_trace,
    "resolvent": cmd_resolvent,
    "check": cmd_check,
}


def _summary(report: dict) -> str:
    lines = [f"covheat {report['command'][0]}: {report['status']}"]
    for c in report.get("checks", []):
        lines.append(f"  {c['status'].upper():4s} {c['name']}: measured={c['measured']} {c['relation']} target={c['target']}")
    if "error" in report:
        lines.append(f"  error: {report['error']['type']}: {report['error']['message']}")
    return "\n".join(lines)


def run_command(argv: list[str], stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    report: dict = {"schema": SCHEMA, "command": list(argv)}
    t0 = time.perf_counter()
    code = 0
    try:
        data = Path(args.model).read_bytes()
        report["input"] = {"path": args.model, "sha256": hashlib.sha256(data).hexdigest()}
        report["seed"] = getattr(args, "seed", None)
        model = parse_model(args.model, strict=args.command != "validate")
        results, checks = COMMANDS[args.command](args, model)
        report["results"] = results
        report["checks"] = [c.to_json() for c in checks]
        failed = any(c.status == "fail" for c in checks)
        report["status"] = "fail" if failed else "pass"
        code = 1 if failed else 0
    except UsageError as exc:
        parser.print_usage(stderr)
        print(f"covheat: error: {exc}", file=stderr)
        return 2
    except (CovheatError, OSError) as exc:
        report["status"] = "error"
        report["error"] = {"type": type(exc).__name__, "message": str(exc),
                           "records": list(getattr(exc, "records", ()))}
        code = 3
    if getattr(args, "timing", False):
        report["timing"] = {"wall_seconds": time.perf_counter() - t0}
    report = jsonable(report)
    stdout.write(json.dumps(report, indent=1, sort_keys=False) + "\n")
    stdout.flush()
    print(_summary(report), file=stderr)
    return code


def main(argv: list[str] | None = None) -> None:
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))
