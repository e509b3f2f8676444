"""Command-line surface: one subcommand per verifiable claim.

Every subcommand validates its flags first, runs the computation,
appends an ExperimentRecord to the results file (JSON lines,
default ./results.jsonl), optionally writes a CSV/JSON artifact and an
SVG plot, and honours --seed (or COALCIRCLE_SEED) for bit-exact
reproducibility.  With --check the subcommand turns its acceptance
threshold into an exit-code gate: 0 pass, 2 breach; flag validation
problems always exit 1.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone

import numpy as np

import coalcircle.experiments  # noqa: F401  (registers experiment kernels)
from coalcircle.core import IntervalSet, SeedSpec, ValidationError
from coalcircle.formulas import (
    expected_block_count,
    jacobi_theta,
    pair_meeting_cdf,
)
from coalcircle.continuum import estimate_scaling_exponent, simulate_block_history
from coalcircle.harness import (
    ExperimentRecord,
    append_record,
    default_master_seed,
    record_to_csv,
    run_experiment,
)
from coalcircle.lattice import LatticeConfig, check_duality_exact
from coalcircle.lookdown import dissimilarity_estimate
from coalcircle.plotting import emit_plot
from coalcircle.tree import (
    PowerGauge,
    capacity_estimate,
    compare_to_cantor,
    dendrogram_from_trace,
    dimension_estimate,
    equilibrium_capacity,
    ratio_spread,
    synthetic_binary_tree,
)


class CliError(Exception):
    """Flag or input validation failure; exits with status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits 2 by default; 2 is reserved for --check breaches
        raise CliError(message)


def _simple_record(name, params, estimates, master_seed, series=None) -> ExperimentRecord:
    return ExperimentRecord(
        name=name,
        parameters=params,
        master_seed=master_seed,
        reps=1,
        estimates=estimates,
        standard_errors={k: 0.0 for k in estimates},
        runtime_ms=0.0,
        timestamp=datetime.now(timezone.utc).isoformat(),
        series=series or {},
    )


def _finish(record, args, plot_kind=None) -> None:
    append_record(record, args.results)
    if args.out:
        if args.format == "csv":
            record_to_csv(record, args.out)
        else:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(record.to_json() + "\n")
    if args.svg:
        if plot_kind is None:
            raise CliError("this subcommand has no plot")
        emit_plot(record, plot_kind, args.svg)


def _check_gate(ok: bool, message: str, check: bool) -> int:
    print(message)
    if check and not ok:
        return 2
    return 0


def _parse_arcs(spec: str):
    """Arc list syntax: comma-separated start:end angle pairs."""
    arcs = []
    for tok in spec.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            s, e = tok.split(":")
            arcs.append((float(s), float(e)))
        except Exception as exc:
            raise CliError(f"bad arc {tok!r}; expected start:end") from exc
    if not arcs:
        raise CliError("no arcs given")
    return arcs


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_theta(args) -> int:
    if args.u is None or args.u <= 0:
        raise CliError("--u must be positive")
    val = jacobi_theta(args.u)
    resid = abs(val - jacobi_theta(1.0 / args.u) / math.sqrt(args.u))
    rec = _simple_record(
        "theta", {"u": args.u}, {"theta": val, "functional_eq_residual": resid}, args.seed
    )
    _finish(rec, args)
    return _check_gate(resid <= 1e-12, f"{val:.10f}", args.check)


def cmd_expected_blocks(args) -> int:
    ts = args.t or [1.0]
    if any(t <= 0 for t in ts):
        raise CliError("--t must be positive")
    estimates = {}
    worst = 0.0
    for t in ts:
        series_val = expected_block_count(t)
        theta_val = jacobi_theta(t / (4.0 * math.pi))
        estimates[f"EN@{t:g}"] = series_val
        worst = max(worst, abs(series_val - theta_val))
        print(f"t={t:g}  E[N(t)]={series_val:.10f}")
    estimates["theta_cross_check_residual"] = worst
    rec = _simple_record("expected-blocks", {"t": ts}, estimates, args.seed)
    _finish(rec, args)
    return _check_gate(worst <= 1e-12, f"max |series - theta| = {worst:.3e}", args.check)


def cmd_pair_cdf(args) -> int:
    ts = args.t or [1.0]
    if any(t < 0 for t in ts):
        raise CliError("--t must be non-negative")
    vals = {f"F@{t:g}": float(pair_meeting_cdf(t)) for t in ts}
    for t in ts:
        print(f"t={t:g}  P(T12<=t)={vals[f'F@{t:g}']:.8f}")
    grid = np.geomspace(max(min(ts), 1e-4) if min(ts) > 0 else 1e-4, max(max(ts), 1e-2), 64)
    series = {
        "t": list(grid),
        "empirical": list(pair_meeting_cdf(grid)),
        "reference": list(pair_meeting_cdf(grid)),
    }
    rec = _simple_record("pair-cdf", {"t": ts}, vals, args.seed, series=series)
    _finish(rec, args, plot_kind="cdf")
    return 0


def cmd_duality_circle(args) -> int:
    if args.n < 1 or args.n > 8:
        raise CliError("duality-circle supports 1 <= n <= 8 fixed points")
    if args.reps < 1:
        raise CliError("--reps must be >= 1")
    arcs = _parse_arcs(args.arcs) if args.arcs else [(0.5, 0.5 + math.pi)]
    try:
        IntervalSet.from_arcs(arcs)
    except ValidationError as exc:
        raise CliError(str(exc)) from exc
    a = [2.0 * math.pi * (i + 0.31) / args.n for i in range(args.n)]
    params = {"a": a, "arcs": arcs, "t": args.t[0] if args.t else 0.5, "dt": args.dt}
    rec = run_experiment(
        "duality_circle", params, reps=args.reps, master_seed=args.seed, workers=args.workers
    )
    lhs, rhs = rec.estimates["lhs"], rec.estimates["rhs"]
    se = math.hypot(rec.standard_errors["lhs"], rec.standard_errors["rhs"])
    gap = abs(lhs - rhs)
    _finish(rec, args)
    return _check_gate(
        gap <= 3.0 * se or gap == 0.0,
        f"lhs={lhs:.5f} rhs={rhs:.5f} |gap|={gap:.5f} (3 SE = {3 * se:.5f})",
        args.check,
    )


def cmd_duality_lattice(args) -> int:
    if args.n < 2:
        raise CliError("n must be >= 2")
    try:
        cfg = LatticeConfig(args.n, args.lam)
        report = check_duality_exact(cfg, args.t[0] if args.t else 1.0)
    except ValidationError as exc:
        raise CliError(str(exc)) from exc
    print(json.dumps(report.to_dict()))
    rec = _simple_record(
        "duality-lattice",
        {"N": args.n, "lambda": args.lam, "t": report.t},
        {"max_error": report.max_error},
        args.seed,
    )
    _finish(rec, args)
    return _check_gate(report.max_error <= 1e-8, f"max_error={report.max_error:.3e}", args.check)


def cmd_blocks(args) -> int:
    if args.n < 1:
        raise CliError("n must be >= 1")
    if args.reps < 1:
        raise CliError("--reps must be >= 1")
    ts = sorted(args.t) if args.t else [0.05, 0.1, 0.5, 1.0]
    params = {"n": args.n, "ts": ts, "dt": args.dt}
    rec = run_experiment(
        "block_counts", params, reps=args.reps, master_seed=args.seed, workers=args.workers
    )
    refs = {t: jacobi_theta(t / (4 * math.pi)) for t in ts}
    ok = True
    for t in ts:
        mean = rec.estimates[f"N@{t:g}"]
        se = rec.standard_errors[f"N@{t:g}"]
        ref = refs[t]
        tol = max(3.0 * se, 0.02 * ref)
        line_ok = abs(mean - ref) <= tol
        ok &= line_ok
        print(f"t={t:g}  mean N={mean:.4f}  theta={ref:.4f}  |diff|={abs(mean - ref):.4f} tol={tol:.4f}")
    rec.series = {
        "t": ts,
        "mean_count": [rec.estimates[f"N@{t:g}"] for t in ts],
        "reference": [refs[t] for t in ts],
    }
    _finish(rec, args, plot_kind="trace")
    return _check_gate(ok, "block-count moments " + ("ok" if ok else "BREACHED"), args.check)


def cmd_dimension(args) -> int:
    if args.n < 2:
        raise CliError("n must be >= 2")
    seed = SeedSpec(args.seed, 0)
    horizon = args.t[0] if args.t else 0.15
    trace = simulate_block_history(args.n, horizon, [horizon], args.dt, seed)
    dend = dendrogram_from_trace(trace)
    eps = np.geomspace(args.eps_min, args.eps_max, args.eps_points)
    fit = dimension_estimate(dend, eps)
    rec = _simple_record(
        "dimension",
        {"n": args.n, "horizon": horizon, "dt": args.dt,
         "eps": [args.eps_min, args.eps_max, args.eps_points]},
        {"slope": fit.slope, "ci_low": fit.ci_low, "ci_high": fit.ci_high,
         "r_squared": fit.r_squared},
        args.seed,
        series={"eps": list(fit.eps), "counts": [int(c) for c in fit.counts]},
    )
    _finish(rec, args, plot_kind="loglog")
    ok = 0.45 <= fit.slope <= 0.55
    return _check_gate(ok, f"covering-number slope = {fit.slope:.4f} (r2={fit.r_squared:.4f})", args.check)


def cmd_annihilating(args) -> int:
    if args.reps < 1:
        raise CliError("--reps must be >= 1")
    t = args.t[0] if args.t else 1.0
    params = {"length": args.length, "t": t, "dt": args.dt}
    rec = run_experiment(
        "annihilating_exit", params, reps=args.reps, master_seed=args.seed, workers=args.workers
    )
    from coalcircle.formulas import exit_high_cdf

    p_full = rec.estimates["full"]
    p_empty = rec.estimates["empty"]
    tgt_full = exit_high_cdf(args.length, t)
    tgt_empty = exit_high_cdf(2 * math.pi - args.length, t)
    se_f, se_e = rec.standard_errors["full"], rec.standard_errors["empty"]
    ok = abs(p_full - tgt_full) <= 3 * max(se_f, 1e-12) and abs(p_empty - tgt_empty) <= 3 * max(se_e, 1e-12)
    _finish(rec, args)
    return _check_gate(
        ok,
        f"P(full)={p_full:.5f} (ref {tgt_full:.5f})  P(empty)={p_empty:.5f} (ref {tgt_empty:.5f})",
        args.check,
    )


def cmd_lookdown(args) -> int:
    if args.reps < 1:
        raise CliError("--reps must be >= 1")
    if args.lam <= 0:
        raise CliError("--lambda must be positive")
    t = args.t[0] if args.t else 1.0
    if args.cloud:
        # full-cloud mode: per-replication summaries to CSV
        from coalcircle.experiments import lookdown_cloud

        arcs = _parse_arcs(args.arcs) if args.arcs else None
        out = lookdown_cloud(SeedSpec(args.seed, 0), args.reps, lam=args.lam, t=t,
                             dt=args.dt, arcs=arcs)
        path = args.out or "lookdown_cloud.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("rep,t,particle_count,type_count,two_type_mass\n")
            mass = out.get("two_type_mass", np.full(args.reps, np.nan))
            for r in range(args.reps):
                fh.write(
                    f"{r},{t!r},{int(out['particle_count'][r])},"
                    f"{int(out['type_count'][r])},{mass[r]!r}\n"
                )
        rec = _simple_record(
            "lookdown-cloud",
            {"lambda": args.lam, "t": t, "reps": args.reps, "dt": args.dt},
            {"mean_type_count": float(out["type_count"].mean()),
             "mean_particle_count": float(out["particle_count"].mean())},
            args.seed,
        )
        append_record(rec, args.results)
        print(f"wrote {args.reps} replication summaries to {path}")
        return 0
    est = dissimilarity_estimate(args.lam, t, args.n, args.reps, args.dt, SeedSpec(args.seed, 0))
    ref = 1.0 - float(pair_meeting_cdf(t))
    rec = _simple_record(
        "lookdown",
        {"lambda": args.lam, "t": t, "n": args.n, "reps": args.reps, "dt": args.dt},
        {"dissimilarity": est.value, "se": est.standard_error, "redraws": float(est.redraws)},
        args.seed,
    )
    _finish(rec, args)
    if args.n == 2:
        ok = abs(est.value - ref) <= 3.0 * max(est.standard_error, 1e-12)
        msg = f"D_2={est.value:.5f} +- {est.standard_error:.5f} (ref {ref:.5f})"
    else:
        ok = True
        msg = f"D_{args.n}={est.value:.5f} +- {est.standard_error:.5f}"
    return _check_gate(ok, msg, args.check)


def cmd_capacity(args) -> int:
    betas = args.beta or [0.3, 0.4, 0.45]
    if any(b < 0 for b in betas):
        raise CliError("--beta must be >= 0")
    if args.tau_csv:
        from coalcircle.tree import build_dendrogram, read_tau_csv

        dend = build_dendrogram(read_tau_csv(args.tau_csv))
    else:
        dend = synthetic_binary_tree(args.levels)
    rows = compare_to_cantor(dend, betas)
    estimates = {}
    for row in rows:
        estimates[f"capacity@{row.beta:g}"] = row.tree_capacity
        estimates[f"cantor@{row.beta:g}"] = row.cantor_capacity
        estimates[f"ratio@{row.beta:g}"] = row.ratio
        print(
            f"beta={row.beta:g}  cap(tree)={row.tree_capacity:.6f}  "
            f"cap(cantor)={row.cantor_capacity:.6f}  ratio={row.ratio:.4f}"
        )
    spread = ratio_spread(rows)
    estimates["ratio_spread"] = spread
    rec = _simple_record(
        "capacity",
        {"betas": betas, "levels": args.levels, "tau_csv": args.tau_csv},
        estimates,
        args.seed,
    )
    _finish(rec, args)
    return _check_gate(spread < 100.0, f"ratio spread = {spread:.3f}", args.check)


def cmd_scaling(args) -> int:
    lo, hi = args.t_min, args.t_max
    if lo <= 0 or hi <= lo:
        raise CliError("need 0 < t-min < t-max")
    ts = np.geomspace(lo, hi, args.points)
    fit = estimate_scaling_exponent(ts, pair_meeting_cdf(ts))
    rec = _simple_record(
        "scaling",
        {"t_min": lo, "t_max": hi, "points": args.points},
        {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared},
        args.seed,
    )
    _finish(rec, args)
    ok = abs(fit.slope - 0.5) <= 0.01
    return _check_gate(ok, f"pair-CDF log-log slope = {fit.slope:.4f}", args.check)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="coalcircle", description=__doc__)
    sub = p.add_subparsers(dest="command")

    def common(sp, reps_default=10000):
        sp.add_argument("--seed", type=int, default=None, help="master seed")
        sp.add_argument("--reps", type=int, default=reps_default)
        sp.add_argument("--dt", type=float, default=1e-4)
        sp.add_argument("--t", type=float, action="append")
        sp.add_argument("--n", type=int, default=2)
        sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
        sp.add_argument("--beta", type=float, action="append")
        sp.add_argument("--out", default=None, help="artifact path (csv/json)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--svg", default=None, help="optional SVG plot path")
        sp.add_argument("--results", default="results.jsonl")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--check", action="store_true", help="exit 2 on threshold breach")

    sp = sub.add_parser("theta", help="Jacobi theta value and functional equation residual")
    sp.add_argument("--u", type=float, required=True)
    common(sp)
    sp.set_defaults(fn=cmd_theta)

    sp = sub.add_parser("expected-blocks", help="expected block count series vs theta")
    common(sp)
    sp.set_defaults(fn=cmd_expected_blocks)

    sp = sub.add_parser("pair-cdf", help="two-particle meeting CDF series")
    common(sp)
    sp.set_defaults(fn=cmd_pair_cdf)

    sp = sub.add_parser("duality-circle", help="Monte Carlo two-sided duality estimate")
    sp.add_argument("--arcs", default=None, help="arc list start:end,start:end")
    common(sp, reps_default=100000)
    sp.set_defaults(fn=cmd_duality_circle)

    sp = sub.add_parser("duality-lattice", help="exact duality check on Z_N")
    common(sp)
    sp.set_defaults(fn=cmd_duality_lattice)

    sp = sub.add_parser("blocks", help="block-count moment vs theta")
    common(sp, reps_default=400)
    sp.set_defaults(fn=cmd_blocks)

    sp = sub.add_parser("dimension", help="covering-number dimension of one trace")
    sp.add_argument("--eps-min", type=float, default=1e-4)
    sp.add_argument("--eps-max", type=float, default=1e-1)
    sp.add_argument("--eps-points", type=int, default=13)
    common(sp)
    sp.set_defaults(fn=cmd_dimension)

    sp = sub.add_parser("annihilating", help="single-arc exit law")
    sp.add_argument("--length", type=float, default=math.pi)
    common(sp, reps_default=100000)
    sp.set_defaults(fn=cmd_annihilating)

    sp = sub.add_parser("lookdown", help="look-down dissimilarity estimate")
    sp.add_argument("--cloud", action="store_true",
                    help="full-cloud mode: per-replication summaries to CSV")
    sp.add_argument("--arcs", default=None, help="two-type region start:end,...")
    common(sp, reps_default=100000)
    sp.set_defaults(fn=cmd_lookdown)

    sp = sub.add_parser("capacity", help="tree capacity vs Cantor reference")
    sp.add_argument("--levels", type=int, default=5)
    sp.add_argument("--tau-csv", default=None)
    common(sp)
    sp.set_defaults(fn=cmd_capacity)

    sp = sub.add_parser("scaling", help="small-time exponent of the meeting CDF")
    sp.add_argument("--t-min", type=float, default=1e-4)
    sp.add_argument("--t-max", type=float, default=1e-2)
    sp.add_argument("--points", type=int, default=25)
    common(sp)
    sp.set_defaults(fn=cmd_scaling)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            print(parser.format_usage().strip(), file=sys.stderr)
            return 1
        if args.seed is None:
            args.seed = default_master_seed()
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage().strip(), file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
