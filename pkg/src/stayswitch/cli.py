"""Command-line entry point: ``stayswitch {policy,simulate,sweep} SCENARIO``.

Output files go to ``--out``, else ``$STAYSWITCH_OUT``, else the current
directory.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from .experiments import format_summary, policy_table, run_experiment, write_csv
from .scenario import AXES, ScenarioError, load_scenario
from .simulator import MODES

OUT_ENV = "STAYSWITCH_OUT"


def _grid_value(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed (default: the scenario's sim.seed)")
    common.add_argument("--out", type=Path, help=f"output directory (default: ${OUT_ENV} or .)")
    common.add_argument("--mode", choices=MODES, help="simulator fidelity (default: the scenario's sim.mode)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="stayswitch", description="Stay-or-switch channel access experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    pol = sub.add_parser("policy", parents=[common], help="write the policy table of a scenario")
    pol.add_argument("scenario", type=Path)
    sim = sub.add_parser("simulate", parents=[common], help="run replications, write one CSV row per run")
    sim.add_argument("scenario", type=Path)
    sim.add_argument("--replications", type=int)
    sim.add_argument("--workers", type=int, default=1)
    sw = sub.add_parser("sweep", parents=[common], help="sweep G, T or N, write one CSV row per run")
    sw.add_argument("scenario", type=Path)
    sw.add_argument("--axis", choices=AXES, required=True)
    sw.add_argument("--grid", type=_grid_value, nargs="+", help="grid values (default: the scenario's sweep.grid)")
    sw.add_argument("--replications", type=int)
    sw.add_argument("--workers", type=int, default=1)
    return p


def out_dir(args):
    d = args.out or Path(os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc.strerror}", file=sys.stderr)
        return 2
    if args.seed is not None:
        scenario = _with_seed(scenario, args.seed)
    try:
        out = out_dir(args)
        if args.command == "policy":
            text = policy_table(scenario).to_text()
            path = out / f"{scenario.name}_policy.txt"
            path.write_text(text, encoding="utf-8")
            sys.stdout.write(text)
            return 0
        if getattr(args, "replications", None) is not None and args.replications < 1:
            parser.error("--replications must be >= 1")
        if args.command == "simulate":
            rows = run_experiment(scenario, axis=None, mode=args.mode, replications=args.replications,
                                  workers=args.workers)
            path = out / f"{scenario.name}_simulate.csv"
        else:
            grid = args.grid
            if grid is None and (scenario.axis != args.axis or not scenario.grid):
                parser.error(f"no grid for axis {args.axis}: pass --grid or set sweep.grid in the scenario")
            if grid is not None and args.axis != "G" and any(not g.is_integer() or g < 1 for g in grid):
                parser.error(f"--grid for axis {args.axis} needs positive integers")
            rows = run_experiment(scenario, axis=args.axis, grid=grid, mode=args.mode,
                                  replications=args.replications, workers=args.workers)
            path = out / f"{scenario.name}_sweep_{args.axis}.csv"
        write_csv(rows, path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(format_summary(rows))
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def _with_seed(scenario, seed):
    from dataclasses import replace
    return replace(scenario, config=scenario.config.replace(seed=seed))


if __name__ == "__main__":
    sys.exit(main())
