"""Command line harness.

    orbitlangevin <experiment> --config <path> [--seed N] [--out DIR]
                  [--dump-trajectories] [--trajectories N] [--dt X] [--horizon T]

Flags override config keys.  Exit code 0 iff the overall verdict passes.
The JSON report lands at <out>/report.json, CSVs under <out>/trajectories/.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ExperimentConfig, parse_config, with_overrides
from .errors import ConfigError
from .experiments import RUNNERS, write_report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orbitlangevin",
        description="Simulate and verify Langevin dynamics with orbit-projected noise.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=str, default=None,
                       help="path to a flat key-value config file")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", type=str, default=None, help="override the output directory")
        p.add_argument("--dump-trajectories", action="store_true", default=None,
                       help="write full trajectory CSVs")
        p.add_argument("--trajectories", type=int, default=None,
                       help="override the trajectory count")
        p.add_argument("--dt", type=float, default=None, help="override the state step size")
        p.add_argument("--horizon", type=float, default=None, help="override the horizon")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = parse_config(args.config)
        else:
            cfg = ExperimentConfig()
        cfg = with_overrides(cfg,
                             experiment=args.experiment,
                             seed=args.seed,
                             out_dir=args.out,
                             dump_trajectories=args.dump_trajectories,
                             n_trajectories=args.trajectories,
                             dt=args.dt,
                             horizon=args.horizon)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    runner = RUNNERS[cfg.experiment]
    report = runner(cfg)
    path = write_report(report, cfg.out_dir)
    for check in report.checks:
        status = "PASS" if check["verdict"] else "FAIL"
        print(f"[{status}] {check['name']}")
    print(f"report: {path}")
    print(f"overall: {'PASS' if report.overall_pass else 'FAIL'}")
    return 0 if report.overall_pass else 1


if __name__ == "__main__":
    sys.exit(main())
