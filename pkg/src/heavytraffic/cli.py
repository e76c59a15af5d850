"""Command-line entry point: ``heavytraffic <subcommand> ...``.

Exit codes: 0 on success, 1 on validation / numerical / divergence errors,
2 on usage errors (bad flags, unknown config keys).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, harness, stein
from .config import ExperimentConfig, load_config
from .control import estimate_drift_margin
from .errors import ConfigError, DivergenceError, NumericalError, ValidationError
from .estimation import drift_identities, run_steady_state, wasserstein_to_exp


def _clean(obj):
    """Make ``obj`` strict-JSON: non-finite floats become null, tuples lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(outdir: str, name: str, text: str) -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


# --- configuration ----------------------------------------------------------

def _experiment(args) -> ExperimentConfig:
    overrides = list(args.set or [])
    for flag, key in (("horizon", "estimator.horizon"), ("burn_in", "estimator.burn_in"),
                      ("seed", "estimator.seed"), ("replications", "estimator.replications"),
                      ("batch_count", "estimator.batch_count"), ("epsilon", "sweep.epsilon"),
                      ("out", "output.dir")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={json.dumps(value)}")
    if getattr(args, "eps_grid", None):
        overrides.append(f"sweep.eps_grid={json.dumps(args.eps_grid)}")
    if args.config is None:
        raise ConfigError("--config is required for this subcommand")
    return load_config(args.config, overrides)


def _spec_summary(exp: ExperimentConfig, spec) -> dict:
    return {
        "kind": spec.kind, "n": spec.n, "policy": spec.policy.value,
        "arrival_means": [d.mean for d in spec.arrivals],
        "sigma2": spec.sigma2, "target_rate": spec.target_rate,
        "seed": exp.estimator.seed, "replications": exp.estimator.replications,
    }


# --- subcommands ----------------------------------------------------------

def cmd_simulate(args) -> int:
    exp = _experiment(args)
    if exp.epsilon is None:
        raise ConfigError("simulate needs sweep.epsilon (or --epsilon)")
    spec = exp.template.at(exp.epsilon)
    est = run_steady_state(spec, exp.estimator, workers=args.workers)
    report = est.to_json_dict()
    report["system"] = _spec_summary(exp, spec)
    d = drift_identities(est, spec.epsilon)
    report["drift"] = {"contains_eps": d.contains_eps, "gap_bound_ok": d.gap_bound_ok,
                       "residual_ok": d.residual_ok, "drift_residual": d.drift_residual}
    outdir = exp.output.dir
    _write(outdir, "run.json", dump_json(report))
    if "samples" in exp.output.formats:
        w = est.scaled_weights if est.scaled_weights is not None else np.ones(len(est.scaled_values))
        _write(outdir, "samples.csv", _csv_text(("value", "weight"), zip(est.scaled_values, w)))
    print(f"epsilon={spec.epsilon} mean_scaled={est.mean_scaled:.6g} "
          f"target_mean={est.target_mean:.6g} dw={est.dw:.6g} -> {outdir}/run.json")
    return 0


def cmd_sweep(args) -> int:
    exp = _experiment(args)
    if not exp.eps_grid:
        raise ValidationError("sweep needs a non-empty sweep.eps_grid")
    res = harness.sweep(exp.template, exp.eps_grid, exp.estimator, workers=args.workers)
    outdir = exp.output.dir
    report = {"fits": res.fit_report()}
    if len(res.rows) >= 2:
        ct = harness.cross_term_scaling(res)
        report["cross_term_fit"] = {"slope": ct.slope, "r2": ct.r2}
        if exp.template.kind == "schedule":
            _, gap, mom = harness.face_saturation_sweep(res, exp.template.face)
            report["face_saturation_fit"] = {"slope": gap.slope, "r2": gap.r2}
            report["face_moment_fit"] = {"slope": mom.slope, "r2": mom.r2}
            if 2.0 in exp.estimator.perp_orders:
                col = harness.collapse_check(res)
                report["collapse"] = {"perp_ratio": col.perp_ratio,
                                      "parallel_growth": list(col.parallel_growth),
                                      "witnessed": col.witnessed()}
    _write(outdir, "sweep.csv", res.to_csv())
    if "json" in exp.output.formats:
        _write(outdir, "fit.json", dump_json(report))
    if "long" in exp.output.formats:
        _write(outdir, "sweep_long.csv", res.to_long_csv())
    sys.stdout.write(res.to_csv())
    return 0


def _test_function(args) -> stein.TestFunction:
    if args.h == "identity":
        return stein.identity()
    if args.h == "softclip":
        return stein.soft_clip(args.scale)
    if not args.knots:
        raise ValidationError("--h pwl needs --knots x0:y0,x1:y1,...")
    try:
        knots = [tuple(float(v) for v in pair.split(":")) for pair in args.knots.split(",")]
    except ValueError:
        raise ValidationError(f"cannot parse knots {args.knots!r}") from None
    if any(len(k) != 2 for k in knots):
        raise ValidationError("each knot must be x:y")
    return stein.piecewise_linear(knots)


def cmd_stein(args) -> int:
    params = stein.SteinParams(args.sigma2, args.theta)
    h = _test_function(args)
    grid = stein.make_grid(params, points=args.points)
    sol = stein.solve_stein(h, params, grid)
    bounds = stein.gradient_bounds_check(sol, h.lip_const, tol=args.tol)
    rows = zip(sol.grid, sol.f1, sol.f2, sol.f3, sol.residual)
    _write(args.out, "stein_grid.csv", _csv_text(("x", "f1", "f2", "f3", "residual"), rows))
    report = bounds.to_json_dict()
    report.update({"sigma2": args.sigma2, "theta": args.theta, "rate": params.rate,
                   "h": h.name, "lip_const": h.lip_const, "expected_h": sol.expected_h})
    _write(args.out, "stein_bounds.json", dump_json(report))
    print(f"slacks f1={bounds.slack_f1:.3g} f2={bounds.slack_f2:.3g} f3={bounds.slack_f3:.3g} "
          f"holds={bounds.holds}")
    return 0


def cmd_ssc(args) -> int:
    report = {}
    exp = None
    if args.config is not None:
        exp = _experiment(args)
        t = exp.template
        if t.kind != "schedule":
            raise ValidationError("ssc checks need a schedule system with a face")
        n = t.n
        a_max = args.a_max if args.a_max is not None else max(
            t.arrival_family.with_mean(m).max_support for m in t.face.anchor)
        s_max = args.s_max if args.s_max is not None else int(t.service_set.as_array().max())
        delta = args.delta if args.delta is not None else t.face.delta
        estimated = False
        if delta is None:
            arrivals = [t.arrival_family.with_mean(m) for m in t.face.anchor]
            delta = estimate_drift_margin(t.face, t.service_set, arrivals)
            estimated = True
            if not delta > 0:
                raise NumericalError("could not estimate a positive drift margin for the face")
        report["delta_estimated"] = estimated
    else:
        missing = [f for f in ("n", "a_max", "s_max", "delta") if getattr(args, f) is None]
        if missing:
            raise ConfigError("without --config, ssc needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
        n, a_max, s_max, delta = args.n, args.a_max, args.s_max, args.delta
    consts = [harness.ssc_bound_constants(n, a_max, s_max, delta, r) for r in args.r]
    report["constants"] = {str(c.r): {k: getattr(c, k) for k in
                                      ("L", "D", "kappa", "eta", "V_r", "M_r_bound", "lemma2_bound")}
                           for c in consts}
    report.update({"N": n, "A_max": a_max, "S_max": s_max, "delta": delta})
    if exp is not None:
        eps = exp.epsilon if exp.epsilon is not None else min(exp.eps_grid, default=None)
        if eps is None:
            raise ConfigError("ssc with --config needs sweep.epsilon (or --epsilon)")
        orders = tuple(sorted(set(exp.estimator.perp_orders) | {float(r) for r in args.r if r > 0}))
        est = run_steady_state(exp.template.at(eps), replace(exp.estimator, perp_orders=orders),
                               workers=args.workers)
        checks = {}
        for c in consts:
            chk = harness.ssc_empirical_check(est, c)
            checks[str(c.r)] = {"estimate": chk.estimate, "M_r_bound": chk.M_r_bound,
                                "lemma2_bound": chk.lemma2_bound, "passed": chk.passed}
        report["empirical"] = {"epsilon": eps, "checks": checks}
    outdir = exp.output.dir if exp is not None else args.out
    _write(outdir, "ssc.json", dump_json(report))
    sys.stdout.write(dump_json(report))
    return 0


def _read_samples(path):
    values, weights = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if values:
                    raise ValidationError(f"{path}: non-numeric sample {row[0]!r}") from None
                continue  # header line
            weights.append(float(row[1]) if len(row) > 1 and row[1].strip() else 1.0)
    if not values:
        raise ValidationError(f"{path}: no samples")
    return np.array(values), np.array(weights)


def cmd_wasserstein(args) -> int:
    values, weights = _read_samples(args.samples)
    dw = wasserstein_to_exp(values, args.rate, weights)
    report = {"dw": dw, "rate": args.rate, "n": int(len(values)), "total_weight": float(weights.sum())}
    if args.out is not None:
        _write(args.out, "wasserstein.json", dump_json(report))
    print(repr(dw))
    return 0


# --- parser -----------------------------------------------------------------

def _add_experiment_flags(p, grid=False):
    p.add_argument("--config", help="TOML experiment file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--horizon", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--batch-count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    if grid:
        p.add_argument("--eps-grid", type=float, nargs="+")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heavytraffic",
                                     description="Heavy-traffic queue simulation and Stein-method checks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one steady-state run at a single epsilon")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="steady-state runs over an epsilon grid")
    _add_experiment_flags(p, grid=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stein", help="solve the Stein equation and check gradient bounds")
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--h", choices=("identity", "pwl", "softclip"), default="identity")
    p.add_argument("--knots", help="pwl knots as x0:y0,x1:y1,...")
    p.add_argument("--scale", type=float, default=1.0, help="softclip saturation level")
    p.add_argument("--points", type=int, default=2048)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_stein)

    p = sub.add_parser("ssc", help="state-space-collapse bound constants and empirical check")
    _add_experiment_flags(p)
    p.add_argument("--n", type=int)
    p.add_argument("--a-max", type=int)
    p.add_argument("--s-max", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--r", type=int, nargs="+", default=[1, 2])
    p.set_defaults(func=cmd_ssc, out=None)

    p = sub.add_parser("wasserstein", help="W1 distance of a sample file to Exp(rate)")
    p.add_argument("samples", help="CSV/text file: value[,weight] per line")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_wasserstein)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "command", None) == "ssc" and args.out is None:
        args.out = "out"
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"heavytraffic: usage error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, NumericalError, DivergenceError, ValueError) as exc:
        print(f"heavytraffic: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"heavytraffic: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
