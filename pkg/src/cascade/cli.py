"""Command line entry point: ``cascade {simulate,ctmc,stability,sweep} <scenario.toml>``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .experiment import EXIT_FAULT, run_experiment
from .scenario import ScenarioError, load_scenario

SEED_ENV = "CASCADE_SEED"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascade", description="Cascade queue simulator and stability analyzer")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "replicated simulation with per-station metrics",
        "ctmc": "stationary law of the exponential two-station chain",
        "stability": "stability verdict (closed form, or backward induction for k >= 3)",
        "sweep": "verdicts and diagnostics along one parameter axis",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("scenario", help="scenario TOML file")
        p.add_argument("--seed", type=int, help=f"master seed (overrides ${SEED_ENV} and the file)")
        p.add_argument("--horizon", type=float, help="simulated time per replication")
        p.add_argument("--reps", type=int, help="replications")
        p.add_argument("--out", help="output root directory")
        p.add_argument("--event-cap", type=int, help="maximum events per replication")
        p.add_argument("--workers", type=int, help="parallel replications")
        p.add_argument("--event-log", action="store_true", default=None,
                       help="also write the event log of replication 0 (simulate only)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    console = logging.StreamHandler()
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    logging.getLogger().addHandler(console)
    try:
        return _run(args)
    finally:
        logging.getLogger().removeHandler(console)


def _run(args) -> int:
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV):
        seed = int(os.environ[SEED_ENV])
    overrides = {
        "model": args.command, "seed": seed, "horizon": args.horizon, "reps": args.reps,
        "out": args.out, "event_cap": args.event_cap, "workers": args.workers, "event_log": args.event_log,
    }
    try:
        scenario = load_scenario(args.scenario, overrides)
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT
    for w in scenario.warnings:
        print(f"warning: {w}", file=sys.stderr)
    try:
        code, outdir = run_experiment(scenario)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT
    print(outdir)
    return code

if __name__ == "__main__":
    sys.exit(main())
