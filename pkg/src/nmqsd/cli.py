"""Command-line front end.

Exit codes: 0 success, 1 a numeric gate failed (only with ``--check``),
2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from nmqsd.experiments import (
    OUTPUT_ENV,
    PRESETS,
    ConfigError,
    ExperimentConfig,
    load_config,
    preset_config,
    run_experiment,
    validate,
    with_overrides,
)
from nmqsd.kernels import Ohmic, qbm_coeff_table, write_qbm_coeff_csv

EXIT_OK, EXIT_GATE, EXIT_CONFIG = 0, 1, 2


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master seed (default: config value, 1)")
    p.add_argument("--threads", type=int, default=None, help="worker threads for ensembles")
    p.add_argument("--n-traj", type=int, default=None, help="override the number of trajectories")
    p.add_argument("--output-dir", default=None, help=f"output directory (default: ${OUTPUT_ENV} or ./nmqsd_output)")
    p.add_argument("--check", action="store_true", help="exit 1 if any acceptance gate fails")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmqsd", description="Non-Markovian quantum state diffusion experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a preset or a config file")
    p.add_argument("target", help=f"preset ({', '.join(PRESETS)}) or path to a key = value file")
    _add_run_options(p)

    p = sub.add_parser("validate", help="check a preset or config file without running it")
    p.add_argument("target")

    p = sub.add_parser("qbm-coeffs", help="write the Ohmic coefficient table")
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--cutoff", type=float, default=20.0)
    p.add_argument("--kT", type=float, default=50.0)
    p.add_argument("--t-max", type=float, default=0.5)
    p.add_argument("--n-points", type=int, default=201)
    p.add_argument("--output", default=None, help="CSV path (default: <output dir>/qbm_coeffs.csv)")

    for name in ("oracle-check", "novikov"):
        p = sub.add_parser(name, help=f"shorthand for 'run {name}'")
        _add_run_options(p)
    return parser


def _report_validation(cfg: ExperimentConfig) -> bool:
    warnings, errors = validate(cfg)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return not errors


def _run(cfg: ExperimentConfig, args) -> int:
    cfg = with_overrides(cfg, master_seed=args.seed, threads=args.threads, n_traj=args.n_traj, output_dir=args.output_dir)
    if not _report_validation(cfg):
        return EXIT_CONFIG
    result = run_experiment(cfg)
    for path in result.files:
        print(f"wrote {path}")
    print(result.summary())
    if args.check and not result.advisory and not result.passed:
        failed = [k for k, v in result.gates.items() if not v]
        print(f"gate failures: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _run(load_config(args.target), args)
        if args.command in ("oracle-check", "novikov"):
            return _run(preset_config(args.command), args)
        if args.command == "validate":
            cfg = load_config(args.target)
            ok = _report_validation(cfg)
            if ok:
                print(f"{args.target}: ok")
            return EXIT_OK if ok else EXIT_CONFIG
        if args.command == "qbm-coeffs":
            if args.cutoff <= 0 or args.eta < 0 or args.kT < 0 or args.t_max <= 0 or args.n_points < 2:
                raise ConfigError("need cutoff > 0, eta >= 0, kT >= 0, t_max > 0, n_points >= 2")
            kernel = Ohmic(args.eta, args.cutoff, args.kT)
            table = qbm_coeff_table(kernel, np.linspace(0.0, args.t_max, args.n_points))
            path = args.output
            if path is None:
                path = ExperimentConfig("qbm").output_path() / "qbm_coeffs.csv"
            write_qbm_coeff_csv(path, table)
            print(f"wrote {path}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
