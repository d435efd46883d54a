"""Command-line interface: estimate on sample files, run Monte Carlo
experiments, validate the dual solver, and fit decay rates.

Exit codes: 0 success, 1 validation failure, 2 usage/input error, 3 numeric
failure. Output artifacts embed the tool version, the resolved configuration,
and the master seed, and are byte-identical across reruns; wall-clock timing
goes to stderr only.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .core import (
    LogNormal,
    Pareto,
    PointMass,
    RadiusSchedule,
    SampleFileError,
    ScaledBernoulli,
    UniformBounded,
    read_sample_file,
)
from .dual import DualSolverError
from .estimators import ESTIMATOR_KINDS, EstimatorConfig
from .montecarlo import (
    conservatism_probability,
    cramer_rate,
    disappointment_probability,
    rate_fit,
    reports_to_csv,
    variance_ratio_curve,
)
from .oracle import random_instances, verify_certificate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_distribution(text: str):
    """Grammar: pareto:rho:xm | lognormal:mu:sigma | bern:p:high | point:c | uniform:lo:hi."""
    parts = text.split(":")
    name = parts[0].lower()
    args = [float(p) for p in parts[1:]]
    try:
        if name == "pareto" and len(args) == 2:
            return Pareto(args[0], args[1])
        if name == "lognormal" and len(args) == 2:
            return LogNormal(args[0], args[1])
        if name in ("bern", "bernoulli") and len(args) == 2:
            return ScaledBernoulli(args[0], args[1])
        if name == "point" and len(args) == 1:
            return PointMass(args[0])
        if name == "uniform" and len(args) == 2:
            return UniformBounded(args[0], args[1])
    except ValueError as exc:
        raise UsageError(f"invalid distribution {text!r}: {exc}") from None
    raise UsageError(f"cannot parse distribution {text!r}")


def parse_schedule(text: str) -> RadiusSchedule:
    """Grammar: const:<v> | logn[:<c>] | loglogn[:<c>] | power:<c>:<beta>."""
    parts = text.split(":")
    name = parts[0].lower()
    try:
        if name == "const" and len(parts) == 2:
            return RadiusSchedule.constant_lambda(float(parts[1]))
        if name == "logn" and len(parts) <= 2:
            return RadiusSchedule.log_n(float(parts[1]) if len(parts) == 2 else 1.0)
        if name == "loglogn" and len(parts) <= 2:
            return RadiusSchedule.log_log_n(float(parts[1]) if len(parts) == 2 else 1.0)
        if name == "power" and len(parts) == 3:
            return RadiusSchedule.power(float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise UsageError(f"invalid schedule {text!r}: {exc}") from None
    raise UsageError(f"cannot parse schedule {text!r}")


def _radius_options(args) -> dict:
    given = [name for name in ("r", "lam", "lambda_schedule") if getattr(args, name, None) is not None]
    if len(given) > 1:
        raise UsageError("give exactly one of --r, --lambda, --lambda-schedule")
    out = {}
    if args.r is not None:
        out["r"] = args.r
    if args.lam is not None:
        out["lam"] = args.lam
    if getattr(args, "lambda_schedule", None) is not None:
        out["schedule"] = parse_schedule(args.lambda_schedule)
    return out


def _build_config(args) -> EstimatorConfig:
    kind = args.estimator
    if kind not in ESTIMATOR_KINDS:
        raise UsageError(f"unknown estimator {kind!r}; choose from {ESTIMATOR_KINDS}")
    kwargs = _radius_options(args)
    if kind == "mean":
        return EstimatorConfig("mean", delta=args.delta, **kwargs)
    if kind == "trunc":
        return EstimatorConfig("trunc", a=args.a, A=args.A, **kwargs)
    if kind in ("wasserstein", "varreg", "tv", "kl") and not kwargs:
        raise UsageError(f"estimator {kind!r} needs one of --r, --lambda, --lambda-schedule")
    return EstimatorConfig(kind, **kwargs)


def cmd_estimate(args) -> int:
    try:
        sample = read_sample_file(args.input)
    except SampleFileError as exc:
        print(f"error: {args.input}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cfg = _build_config(args)
    from .estimators import estimate as run_estimate

    try:
        result = run_estimate(cfg, sample)
    except DualSolverError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    doc = {
        "estimator": result.estimator_id,
        "value": float(result.value),
        "n": sample.n,
        "diagnostics": {k: float(v) for k, v in result.diagnostics.items()},
        "version": __version__,
    }
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = parse_distribution(args.dist)
    cfg = _build_config(args)
    n_grid = [int(x) for x in args.n.split(",") if x]
    if not n_grid or min(n_grid) < 1:
        raise UsageError("--n must be a comma-separated list of positive integers")
    if args.event == "conservatism" and args.b is None:
        raise UsageError("--event conservatism requires --b")
    t0 = time.perf_counter()
    reports = []
    for n in n_grid:
        if args.event == "disappointment":
            rep = disappointment_probability(spec, cfg, n, args.trials, args.seed, threads=args.threads)
        else:
            rep = conservatism_probability(spec, cfg, args.b, n, args.trials, args.seed, threads=args.threads)
        reports.append(rep)
    config_doc = {
        "dist": args.dist,
        "estimator": args.estimator,
        "event": args.event,
        "b": args.b,
        "n": n_grid,
        "trials": args.trials,
        "seed": args.seed,
        "r": args.r,
        "lambda": args.lam,
        "lambda_schedule": args.lambda_schedule,
    }
    header = [
        f"safemean {__version__}",
        "config: " + json.dumps(config_doc, sort_keys=True),
        f"seed: {args.seed}",
    ]
    text = reports_to_csv(reports, header)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"simulate: {len(reports)} cells in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    t0 = time.perf_counter()
    worst_kl = worst_gap = 0.0
    total_violations = 0
    failures = 0
    for i, (sample, r) in enumerate(random_instances(args.instances, args.seed)):
        check_radius = 1.5 * r if args.inject_radius_mismatch else None
        report = verify_certificate(sample, r, probes=args.probes, seed=args.seed + i, check_radius=check_radius)
        worst_kl = max(worst_kl, report.kl_gap)
        worst_gap = max(worst_gap, report.duality_gap / max(1.0, abs(report.value)))
        total_violations += report.probe_violations
        if not report.passed:
            failures += 1
    print(
        f"validate: {args.instances} instances, {failures} failures, "
        f"max kl gap {_fmt(worst_kl)}, max relative duality gap {_fmt(worst_gap)}, "
        f"probe violations {total_violations}"
    )
    print(f"validate: done in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return EXIT_OK if failures == 0 else EXIT_VALIDATION


def _read_points_csv(path):
    points = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if header is None and any(not _is_float(c) for c in cells):
                header = cells
                continue
            if header is not None and "n" in header and "p_hat" in header:
                n_idx, p_idx = header.index("n"), header.index("p_hat")
            else:
                n_idx, p_idx = 0, 1
            points.append((float(cells[n_idx]), float(cells[p_idx])))
    return points


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def cmd_rates(args) -> int:
    if args.variance_ratio:
        if not args.dist or not args.r_grid:
            raise UsageError("--variance-ratio requires --dist and --r-grid")
        spec = parse_distribution(args.dist)
        grid = [float(x) for x in args.r_grid.split(",") if x]
        curve = variance_ratio_curve(spec, grid)
        lines = [f"# safemean {__version__}", f"# dist: {args.dist}", "r,ratio"]
        lines += [f"{_fmt(r)},{_fmt(ratio)}" for r, ratio in curve]
        text = "\n".join(lines) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if args.cramer:
        if not args.dist or args.b is None:
            raise UsageError("--cramer requires --dist and --b")
        spec = parse_distribution(args.dist)
        rate = cramer_rate(spec, args.b)
        print(json.dumps({"b": args.b, "rate": rate, "dist": args.dist}, sort_keys=True))
        return EXIT_OK
    if not args.from_csv:
        raise UsageError("rates needs --from-csv, --variance-ratio, or --cramer")
    points = _read_points_csv(args.from_csv)
    try:
        fit = rate_fit(points, axis=args.axis)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    doc = {
        "axis": fit.axis,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "points": [[n, p] for n, p in fit.points],
        "version": __version__,
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safemean", description=__doc__)
    parser.add_argument("--version", action="version", version=f"safemean {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_radius_flags(p):
        p.add_argument("--r", type=float, default=None, help="fixed KL/W radius")
        p.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed exponent lambda")
        p.add_argument(
            "--lambda-schedule",
            default=None,
            help="schedule const:<v> | logn[:<c>] | loglogn[:<c>] | power:<c>:<beta>",
        )

    p_est = sub.add_parser("estimate", help="run one estimator on a sample file")
    p_est.add_argument("--estimator", required=True, choices=ESTIMATOR_KINDS)
    p_est.add_argument("--input", required=True, help="sample file, one value per line")
    p_est.add_argument("--delta", type=float, default=0.0)
    p_est.add_argument("--a", type=float, default=2.0)
    p_est.add_argument("--A", type=float, default=1.0)
    add_radius_flags(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_sim = sub.add_parser("simulate", help="Monte Carlo disappointment/conservatism experiment")
    p_sim.add_argument("--dist", required=True)
    p_sim.add_argument("--estimator", required=True, choices=ESTIMATOR_KINDS)
    p_sim.add_argument("--n", required=True, help="comma-separated sample sizes")
    p_sim.add_argument("--trials", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--event", choices=("disappointment", "conservatism"), default="disappointment")
    p_sim.add_argument("--b", type=float, default=None)
    p_sim.add_argument("--delta", type=float, default=0.0)
    p_sim.add_argument("--a", type=float, default=2.0)
    p_sim.add_argument("--A", type=float, default=1.0)
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.add_argument("--out", default=None)
    add_radius_flags(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_val = sub.add_parser("validate", help="dual-solver certificate suite")
    p_val.add_argument("--instances", type=int, required=True)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--probes", type=int, default=1000)
    p_val.add_argument(
        "--inject-radius-mismatch",
        action="store_true",
        help="negative control: verify against a wrong radius, must fail",
    )
    p_val.set_defaults(func=cmd_validate)

    p_rat = sub.add_parser("rates", help="decay-rate fits, large-deviation rates, variance-ratio curves")
    p_rat.add_argument("--from-csv", default=None)
    p_rat.add_argument("--axis", choices=("log-log", "log-linear"), default="log-log")
    p_rat.add_argument("--variance-ratio", action="store_true")
    p_rat.add_argument("--cramer", action="store_true")
    p_rat.add_argument("--dist", default=None)
    p_rat.add_argument("--r-grid", default=None)
    p_rat.add_argument("--b", type=float, default=None)
    p_rat.add_argument("--out", default=None)
    p_rat.set_defaults(func=cmd_rates)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DualSolverError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
