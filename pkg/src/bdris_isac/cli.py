"""Command-line front end: ``solve``, ``sweep`` and ``gradcheck``.

Exit codes: 0 success/converged, 1 config error, 2 no feasible starting
point, 3 outer iteration cap reached, 4 gradient check failed.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .ao import solve_joint
from .configio import SweepSpec, load_config, load_sweep
from .errors import BdrisError, ConfigError, NoFeasiblePoint
from .gradcheck import run_gradcheck
from .scenario import generate_channels

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_ITER_CAP = 3
EXIT_GRADCHECK = 4

SWEEP_COLUMNS = ["axis_value", "trial_seed", "status", "final_rate", "final_crb",
                 "outer_iters", "wall_time"]

log = logging.getLogger("bdris_isac")


def run_solve(config_path, seed=None, out_dir="out"):
    """Solve one instance; write ``solve_seed<seed>.csv``, a summary and Phi.

    Returns ``(exit_code, report)``; the report is None when no feasible
    starting point exists.
    """
    cfg = load_config(config_path)
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"solve_seed{cfg.seed}"
    try:
        report = solve_joint(generate_channels(cfg), cfg)
    except NoFeasiblePoint as exc:
        stem.with_name(stem.name + "_summary.txt").write_text(
            f"config_sha256: {cfg.digest()}\nseed: {cfg.seed}\nstatus: no_feasible_point\n"
            f"best_crb: {float(exc.best_crb)!r}\n")
        print(f"no feasible point: {exc} (best CRB {exc.best_crb:.4g})", file=sys.stderr)
        return EXIT_INFEASIBLE, None
    stem.with_suffix(".csv").write_text(report.to_csv())
    stem.with_name(stem.name + "_summary.txt").write_text(report.to_text())
    stem.with_name(stem.name + "_phi.txt").write_text(report.final_phi.to_text())
    print(f"seed {cfg.seed}: rate {report.final_rate:.6f} bit/s/Hz, CRB {report.final_crb:.4e}, "
          f"{report.outer_iters} outer iterations, "
          f"{'converged' if report.converged else 'iteration cap'}")
    return (EXIT_OK if report.converged else EXIT_ITER_CAP), report


def _sweep_trial(task):
    axis_value, trial_seed, cfg = task
    start = time.perf_counter()
    try:
        report = solve_joint(generate_channels(cfg), cfg)
    except NoFeasiblePoint:
        status, rate, crb, iters = "no_feasible_point", float("nan"), float("nan"), 0
    except BdrisError as exc:
        status, rate, crb, iters = f"error:{type(exc).__name__}", float("nan"), float("nan"), 0
    else:
        status = "converged" if report.converged else "iteration_cap"
        rate, crb, iters = report.final_rate, report.final_crb, report.outer_iters
    return [axis_value, trial_seed, status, rate, crb, iters, time.perf_counter() - start]


def sweep_rows(spec: SweepSpec, workers=1):
    """Trial rows in ``(value, trial)`` order, followed by per-value means."""
    tasks = []
    for value in spec.values:
        for trial in range(spec.trials_per_value):
            cfg = spec.trial_config(value, trial)
            tasks.append((value, cfg.seed, cfg))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_trial, tasks))
    else:
        rows = [_sweep_trial(t) for t in tasks]
    if spec.trials_per_value > 1:
        for value in spec.values:
            cell = [r for r in rows if r[0] == value]
            ok = [r for r in cell if r[2] in ("converged", "iteration_cap")]
            means = [float(np.mean([r[i] for r in ok])) if ok else float("nan") for i in (3, 4, 5, 6)]
            rows.append([value, "mean", f"ok={len(ok)}/{len(cell)}"] + means)
    return rows


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_sweep_csv(spec: SweepSpec, rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# config_sha256={spec.base.digest()} axis={spec.axis} "
                 f"trials_per_value={spec.trials_per_value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def run_sweep(sweep_path, workers=1, out=None):
    """Run every ``(value, trial)`` cell; failed trials become status rows."""
    spec = load_sweep(sweep_path)
    rows = sweep_rows(spec, workers)
    path = Path(out) if out else spec.output_path
    write_sweep_csv(spec, rows, path)
    n_bad = sum(1 for r in rows if r[1] != "mean" and r[2] not in ("converged", "iteration_cap"))
    print(f"wrote {len(rows)} rows to {path} ({n_bad} failed trials)")
    return EXIT_OK, rows


def grad_check(config_path, n_instances=50, tolerance=1e-5, seed=None, out=None):
    cfg = load_config(config_path)
    checks = run_gradcheck(cfg, n_instances, seed)
    lines = [c.line() for c in checks]
    failing = [c for c in checks if not c.max_rel_err < tolerance]
    worst = max(c.max_rel_err for c in checks)
    lines.append(f"worst max_rel_err={worst:.3e} tolerance={tolerance:.1e} "
                 f"failing={len(failing)}/{len(checks)}")
    for c in failing:
        lines.append(f"FAIL {c.line()}")
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)
    return (EXIT_GRADCHECK if failing else EXIT_OK), checks


def build_parser():
    parser = argparse.ArgumentParser(prog="bdris-isac",
                                     description="BD-RIS ISAC beamforming and scattering design")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("--config", required=True, help="sweep file")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV path (overrides output_path)")

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("-n", "--n-instances", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--out", help="report file")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            code, _ = run_solve(args.config, args.seed, args.out)
        elif args.command == "sweep":
            if args.workers < 1:
                raise ConfigError("must be >= 1", field="workers")
            code, _ = run_sweep(args.config, args.workers, args.out)
        else:
            if args.n_instances < 1:
                raise ConfigError("must be >= 1", field="n_instances")
            code, _ = grad_check(args.config, args.n_instances, args.tol, args.seed, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
