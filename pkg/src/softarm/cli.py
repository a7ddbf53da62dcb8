"""Command-line entry point.

    softarm simulate paper-grid --out runs/ --allow-unstable
    softarm sweep default --omega 1 3 --payload 0 0.2 --out sweep/
    softarm identify --out ident/
    softarm check --json

Exit codes: 0 success, 1 a check or recovery tolerance failed, 2 usage or
configuration error, 3 a scenario diverged (unless ``--allow-unstable``).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

#: self-test recovery tolerances (relative)
RECOVERY_TOL = {"K": 0.02, "D": 0.02, "alpha_h": 0.10, "beta_h": 0.10, "gamma_h": 0.10}


class UsageError(Exception):
    pass


def _out_dir(path):
    if path is None:
        return None
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")
    return path


def _run_one(scenario):
    from .simulation import run_scenario

    return run_scenario(scenario)


def _run_all(scenarios, jobs: int):
    if jobs <= 1 or len(scenarios) <= 1:
        return [_run_one(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, scenarios))


# -- sweep axes from the command line --------------------------------------------


def _apply_axis(scenario, key, value):
    if key == "omega":
        return replace(scenario, trajectory=replace(scenario.trajectory, omega=value))
    if key == "payload":
        return replace(scenario, payload=value)
    if key == "controller":
        return replace(scenario, controller=value)
    if key in ("kp", "kd"):
        return replace(scenario, pdfl=replace(scenario.pdfl, **{key: value}))
    if key in ("lambda_ap", "kg"):
        return replace(scenario, ap=replace(scenario.ap, **{key: value}))
    if key == "seed":
        return scenario.with_seed(int(value))
    raise KeyError(key)


SWEEP_FLAGS = (
    ("omega", float), ("payload", float), ("controller", str),
    ("kp", float), ("kd", float), ("lambda_ap", float), ("kg", float),
)


def _cli_sweep(scenarios, args):
    axes = [(k, getattr(args, k)) for k, _ in SWEEP_FLAGS if getattr(args, k, None)]
    if not axes:
        return scenarios
    import itertools

    out = []
    for base in scenarios:
        for combo in itertools.product(*(v for _, v in axes)):
            sc = base
            for (key, _), value in zip(axes, combo):
                sc = _apply_axis(sc, key, value)
            suffix = "-".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}"
                              for (k, _), v in zip(axes, combo))
            out.append(replace(sc, name=f"{base.name}-{suffix}"))
    return out


# -- commands ----------------------------------------------------------------------


def _summaries_json(results):
    from .simulation import summary_row

    return [summary_row(res) for res in results]


def _preflight(scenario):
    """Reject unreachable references before any run starts (one period covers the circle)."""
    from .trajectories import actuator_trajectory

    period = scenario.trajectory.period
    span = min(scenario.duration, period) if math.isfinite(period) else scenario.dt_control
    spec = replace(scenario.trajectory, dt=scenario.dt_control, duration=max(span, scenario.dt_control))
    try:
        actuator_trajectory(scenario.geometry, spec)
    except ValueError as exc:
        raise UsageError(f"scenario {scenario.name}: {exc}") from None


def cmd_simulate(args, sweep: bool = False) -> int:
    from .config import load_scenarios
    from .simulation import summary_csv_text, write_atomic, write_trace_csv

    if not args.scenarios:
        raise UsageError("no scenario files given")
    scenarios = load_scenarios(args.scenarios, sweep=sweep)
    if sweep:
        scenarios = _cli_sweep(scenarios, args)
    if not scenarios:
        raise UsageError("scenario list is empty")
    if args.seed is not None:
        scenarios = [s.with_seed(args.seed) for s in scenarios]
    for s in scenarios:
        _preflight(s)
    out = _out_dir(args.out)

    start = time.perf_counter()
    results = _run_all(scenarios, args.jobs)
    elapsed = time.perf_counter() - start

    if out:
        for res in results:
            write_trace_csv(res.trace, os.path.join(out, f"{res.scenario.name}.csv"))
        write_atomic(os.path.join(out, "summary.csv"), summary_csv_text(results))
        if args.plot:
            from .plotting import error_boxplot, tracking_figure

            for res in results:
                if len(res.trace):
                    tracking_figure(res, os.path.join(out, f"{res.scenario.name}.svg"))
            error_boxplot(results, os.path.join(out, "errors.svg"))

    if args.json:
        print(json.dumps({"runs": _summaries_json(results)}, indent=2))
    else:
        print(f"{'scenario':<28} {'ctrl':<5} {'stable':<6} {'task mean [mm]':>15} {'act mean [mm]':>14}")
        for res in results:
            rep = res.report
            task = rep.task["mean"] * 1e3 if rep else math.nan
            act = rep.actuator["mean"] * 1e3 if rep else math.nan
            flag = "yes" if res.stable else f"no@{res.trace.diverged_at:.3g}s"
            print(f"{res.scenario.name:<28} {res.scenario.controller:<5} {flag:<6} {task:15.4f} {act:14.4f}")
        print(f"{len(results)} run(s) in {elapsed:.1f} s" + (f"; outputs in {out}" if out else ""))

    unstable = [r.scenario.name for r in results if not r.stable]
    if unstable and not args.allow_unstable:
        print(f"diverged: {', '.join(unstable)} (pass --allow-unstable to accept)", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _read_recorded(path, n_rows):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty data file")
    header = [h.strip() for h in rows[0]]
    try:
        cols = [header.index(c) for c in ("l1", "l2", "l3")]
    except ValueError:
        cols = [header.index(c) for c in ("q1", "q2", "q3")] if "q1" in header else None
    if cols is None:
        raise UsageError(f"{path}: need columns l1,l2,l3 (or q1,q2,q3)")
    try:
        data = np.array([[float(r[c]) for c in cols] for r in rows[1:] if r])
    except (ValueError, IndexError) as exc:
        raise UsageError(f"{path}: {exc}") from None
    if data.shape[0] != n_rows:
        raise UsageError(f"{path}: {data.shape[0]} samples, chirp config implies {n_rows}")
    return data


def cmd_identify(args) -> int:
    import warnings

    from .config import load_identify_config
    from .identification import (
        PARAM_NAMES,
        REFERENCE,
        IdentificationWarning,
        identify_parameters,
        simulate_chirp,
    )
    from .simulation import write_atomic

    cfg = load_identify_config(args.config or "identify")
    out = _out_dir(args.out)
    seed = cfg.seed if args.seed is None else args.seed
    t = cfg.truth
    truth = dict(zip(PARAM_NAMES, (t.K[0, 0], t.D[0, 0], t.alpha_h, t.beta_h, t.gamma_h)))
    self_test = args.data is None
    if self_test:
        _, recorded = simulate_chirp(cfg.geometry, cfg.truth, cfg.chirp, cfg.quad)
    else:
        recorded = _read_recorded(args.data, cfg.chirp.n_steps + 1)

    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IdentificationWarning)
        result = identify_parameters(
            cfg.chirp, recorded, cfg.guess(), bounds=cfg.bounds, geometry=cfg.geometry,
            base=cfg.truth, quad=cfg.quad, starts=cfg.starts, seed=seed,
            max_nfev=cfg.max_nfev, method=cfg.method,
        )
    elapsed = time.perf_counter() - start
    fitted = result.as_dict()
    report = {
        "mode": "self-test" if self_test else "recorded",
        "method": cfg.method,
        "chirp": vars(cfg.chirp),
        "initial_guess": cfg.guess(),
        "bounds": {k: list(v) for k, v in cfg.bounds.items()},
        "recovered": fitted,
        "reference": {k: REFERENCE[k] for k in PARAM_NAMES},
        "final_cost": result.cost,
        "converged": result.success,
        "warning": result.warning,
        "unidentifiable": result.unidentifiable,
        "warnings": [str(w.message) for w in caught],
        "evaluations": result.nfev,
    }
    ok = True
    if self_test:
        rel = result.relative_errors(truth)
        report["truth"] = truth
        report["relative_error"] = rel
        report["tolerance"] = RECOVERY_TOL
        ok = all(rel[k] <= RECOVERY_TOL[k] for k in PARAM_NAMES)
        report["within_tolerance"] = ok
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        write_atomic(os.path.join(out, "identification.json"), text + "\n")
    if args.json:
        print(text)
    else:
        print(f"{'param':<8} {'recovered':>12} {'reference':>12}" + (f" {'rel. error':>11}" if self_test else ""))
        for k in PARAM_NAMES:
            line = f"{k:<8} {fitted[k]:12.5g} {REFERENCE[k]:12.5g}"
            if self_test:
                line += f" {report['relative_error'][k]:11.3g}"
            print(line)
        print(f"final cost {result.cost:.6g}, {result.nfev} model evaluations, {elapsed:.1f} s")
        for w in report["warnings"]:
            print(f"WARNING: {w}")
        if self_test:
            print("recovery " + ("within" if ok else "OUTSIDE") + " tolerance")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_check(args) -> int:
    from .checks import format_table, run_checks
    from .config import load_check_settings
    from .simulation import write_atomic

    geometry, params, quad = load_check_settings(args.config)
    results = run_checks(geometry, params, quad, quick=args.quick)
    payload = {"passed": all(r.passed for r in results), "checks": [r.as_dict() for r in results]}
    if args.out:
        out = _out_dir(args.out)
        write_atomic(os.path.join(out, "check.json"), json.dumps(payload, indent=2) + "\n")
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(format_table(results))
    return EXIT_OK if payload["passed"] else EXIT_FAIL


# -- parser --------------------------------------------------------------------------


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softarm", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("scenarios", nargs="*", help="scenario YAML files or bundled pack names "
                       "(paper-grid, default)")
        p.add_argument("--out", help="directory for trace CSVs, summary.csv and plots")
        p.add_argument("--seed", type=_nonneg_int, help="override every disturbance seed")
        p.add_argument("--jobs", type=_positive_int, default=1, help="parallel scenario runs")
        p.add_argument("--plot", action="store_true", help="also write SVG figures")
        p.add_argument("--json", action="store_true", help="print the summary as JSON")
        p.add_argument("--allow-unstable", action="store_true",
                       help="exit 0 even if a scenario diverges")

    run_flags(sub.add_parser("simulate", help="run scenarios"))
    sw = sub.add_parser("sweep", help="run the cartesian product of listed values")
    run_flags(sw)
    for key, typ in SWEEP_FLAGS:
        sw.add_argument(f"--{key}", nargs="+", type=typ,
                        choices=("ap", "pdfl") if key == "controller" else None)

    ident = sub.add_parser("identify", help="chirp identification (self-test unless --data)")
    ident.add_argument("config", nargs="?", help="identification YAML (default: bundled)")
    ident.add_argument("--data", help="recorded CSV with columns l1,l2,l3 sampled at chirp.dt")
    ident.add_argument("--out")
    ident.add_argument("--seed", type=_nonneg_int, help="seed for extra starting points")
    ident.add_argument("--json", action="store_true")

    chk = sub.add_parser("check", help="run the model property suite")
    chk.add_argument("config", nargs="?", help="YAML with geometry/params blocks")
    chk.add_argument("--out")
    chk.add_argument("--json", action="store_true")
    chk.add_argument("--quick", action="store_true", help="fewer samples")
    return parser


def main(argv=None) -> int:
    from .config import ConfigError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "sweep":
            return cmd_simulate(args, sweep=True)
        if args.command == "identify":
            return cmd_identify(args)
        return cmd_check(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
