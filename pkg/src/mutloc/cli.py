"""Command line front end: ``mutloc solve | sweep | selftest``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import simulator
from .errors import ConfigError, MutlocError
from .fileio import load_config, load_observations
from .geometry import rotation_to_quaternion
from .solver import SolverOptions, solve_mutual_pose

log = logging.getLogger("mutloc")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVE_FAILED = 2
EXIT_SELFTEST_FAILED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail(message)


def _fail(message, code=EXIT_USAGE):
    print(f"mutloc: error: {' '.join(str(message).split())}", file=sys.stderr)
    raise SystemExit(code)


def _setup_logging():
    level = os.environ.get("MUTLOC_LOG", "off").lower()
    levels = {"off": None, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        _fail(f"MUTLOC_LOG must be one of off, info, debug (got {level!r})")
    if levels[level] is not None:
        logging.basicConfig(level=levels[level], stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")


def _result_record(frame, report) -> dict:
    best = report.best
    R = best.pose.rotation
    return {
        "frame": frame,
        "status": "ok",
        "markers_used": report.markers_used,
        "rotation": [float(x) for x in R.reshape(-1)],
        "quaternion_wxyz": [float(x) for x in rotation_to_quaternion(R)],
        "translation": [float(x) for x in best.pose.translation],
        "cost": float(best.cost),
        "source_triple": list(best.source_triple),
        "roots": {
            "raw": report.num_raw_roots,
            "positive": report.num_positive_roots,
            "filtered": report.num_filtered_roots,
        },
        "candidates": len(report.all_candidates),
    }


def cmd_solve(args) -> int:
    try:
        cfg = load_config(args.config)
        records = load_observations(args.obs)
    except ConfigError as exc:
        _fail(exc)
    opts = cfg.solver
    if args.no_filter:
        opts = SolverOptions(opts.imag_tol, False, opts.residual_tol, opts.newton_iters)
    if args.imag_tol is not None:
        opts = SolverOptions(args.imag_tol, opts.use_filter, opts.residual_tol, opts.newton_iters)

    failed = 0
    for rec in records:
        try:
            report = solve_mutual_pose(cfg.rig, rec.observation, opts)
            out = _result_record(rec.frame, report)
        except (MutlocError, ValueError) as exc:
            failed += 1
            out = {"frame": rec.frame, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        print(json.dumps(out))
    return EXIT_SOLVE_FAILED if failed else EXIT_OK


def _parse_sigmas(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        _fail(f"--sigmas must be a comma separated list of numbers, got {text!r}")
    if not vals or any(not (v >= 0.0 and np.isfinite(v)) for v in vals):
        _fail("--sigmas values must be finite and non-negative")
    return vals


def cmd_sweep(args) -> int:
    sigmas = _parse_sigmas(args.sigmas)
    if args.trials < 1:
        _fail("--trials must be >= 1")
    if not 0 <= args.seed < 2**64:
        _fail("--seed must fit in 64 unsigned bits")
    spec = simulator.sweep_scenario(trials=args.trials, seed=args.seed)
    opts = SolverOptions()
    if args.config:
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            _fail(exc)
        opts = cfg.solver
        spec = simulator.ScenarioSpec(
            cfg.rig,
            cfg.pose_gt or spec.pose_gt,
            cfg.image_size or spec.image_size,
            trials=args.trials,
            seed=args.seed,
        )
    try:
        simulator.check_visibility(spec.rig, spec.pose_gt, spec.image_size)
    except MutlocError as exc:
        _fail(f"scenario invalid: {exc}")

    t0 = time.perf_counter()
    results = simulator.run_noise_sweep(spec, sigmas, opts, workers=args.workers)
    log.info("sweep of %d trials took %.2f s", len(results), time.perf_counter() - t0)
    simulator.write_csvs(results, args.out)
    print("sigma,successes,trials,median_trans_err_m,median_rot_err_deg")
    for row in simulator.summarize(results):
        print(f"{row['sigma']:g},{row['successes']},{row['trials']},"
              f"{row['median_trans_err_m']:.6g},{row['median_rot_err_deg']:.6g}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import CHECKS, run_selftest

    try:
        failure = run_selftest()
    except ValueError as exc:
        _fail(f"bad selftest override: {exc}")
    if failure is not None:
        name, message = failure
        _fail(f"selftest check '{name}' failed: {message}", EXIT_SELFTEST_FAILED)
    print(f"selftest: {len(CHECKS)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mutloc", description="Relative pose from reciprocal marker observations.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("solve", help="solve every observation record")
    s.add_argument("--config", required=True)
    s.add_argument("--obs", required=True)
    s.add_argument("--no-filter", action="store_true", help="skip the marker-distance root filter")
    s.add_argument("--imag-tol", type=float, default=None)
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="Monte-Carlo pixel noise sweep")
    w.add_argument("--config", default=None, help="rig and scenario; defaults to the built-in scene")
    w.add_argument("--sigmas", required=True, help="comma separated noise levels in pixels")
    w.add_argument("--trials", type=int, default=200)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--out", required=True, help="output directory for trials.csv and summary.csv")
    w.add_argument("--workers", type=int, default=1)
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("selftest", help="run the embedded consistency checks")
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
