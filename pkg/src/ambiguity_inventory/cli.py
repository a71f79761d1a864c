"""Command line entry point.

    ambiguity-inventory solve|barriers|simulate|sweep <preset> [--config F] [--out DIR]
        [--mode {positive-corrected,paper-verbatim}] [--seed N] [--tol X]

Exit status: 0 success, 1 invalid input, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import PRESETS, VERBS, load_config, validate
from .errors import ConfigError, NumericalError
from .experiment import run_experiment
from .solver import MODES

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ambiguity-inventory",
        description="Solve, extract barriers, simulate, or sweep the ambiguity-averse "
                    "inventory control model.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("preset", nargs="?", help=f"sweep preset: {', '.join(PRESETS)}")
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--mode", choices=MODES, help="stencil mode")
    p.add_argument("--seed", type=int, help="simulation seed")
    p.add_argument("--tol", type=float, help="per-slice sup-norm tolerance")
    return p


def resolve(args: argparse.Namespace):
    cfg = load_config(args.config)
    if args.verb == "sweep" and args.preset is None and cfg.sweep is None:
        raise ConfigError(f"sweep needs a preset name: {', '.join(PRESETS)}")
    if args.verb != "sweep" and args.preset is not None:
        raise ConfigError(f"{args.verb} takes no preset argument")
    solver = cfg.solver
    try:
        if args.mode:
            solver = replace(solver, mode=args.mode)
        if args.tol is not None:
            solver = replace(solver, tol=args.tol)
        sim = replace(cfg.sim, seed=args.seed) if args.seed is not None else cfg.sim
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = replace(cfg, experiment=args.verb, sweep=args.preset or cfg.sweep,
                  solver=solver, sim=sim,
                  output_dir=args.out if args.out is not None else cfg.output_dir)
    return validate(cfg)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        result = run_experiment(cfg)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for path in result.files:
        print(path)
    for key, value in result.summary.items():
        print(f"{key} = {value:.12g}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
