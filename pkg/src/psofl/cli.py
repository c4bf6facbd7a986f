"""Command line entry point: ``psofl run`` and ``psofl validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import config as cfgmod
from .experiment import run_from_parser, summary_line


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psofl", description="PSO-tuned federated LSTM experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("config", nargs="?", help="INI config file (optional with --preset)")
    run.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="built-in base configuration")
    run.add_argument("--seed", type=int, help="override experiment.seed (and the swarm seed)")
    run.add_argument("--out", help="override experiment.output_dir")
    run.add_argument("--threads", type=int, default=1, help="worker threads; 1 = fully sequential")
    run.add_argument("--pso-literal", action="store_true", help="use the velocity-difference update form")
    run.add_argument("-v", "--verbose", action="store_true")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config", nargs="?")
    val.add_argument("--preset", choices=sorted(cfgmod.PRESETS))
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.config is None and args.preset is None:
        print(f"psofl {args.command}: give a config file or --preset", file=sys.stderr)
        return 2
    try:
        cp = cfgmod.load(args.config, args.preset)
    except cfgmod.ConfigError as exc:
        print(f"psofl: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        if args.seed is not None:
            cp.set("experiment", "seed", str(args.seed))
            cp.set("pso", "seed", str(args.seed))
        if args.pso_literal:
            cp.set("pso", "literal", "true")
        if args.threads < 1:
            print("psofl: --threads must be >= 1", file=sys.stderr)
            return 2

    problems = cfgmod.validate_parser(cp)
    if args.command == "validate":
        for problem in problems:
            print(problem)
        return 1 if problems else 0
    if problems:
        for problem in problems:
            print(f"psofl: {problem}", file=sys.stderr)
        return 2

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        result = run_from_parser(cp, out_dir=args.out, threads=args.threads)
    except Exception as exc:  # report, don't dump a traceback
        print(f"psofl: run failed: {exc}", file=sys.stderr)
        return 1
    for report in result.reports:
        print(summary_line(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
