"""Command line front end.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys

from ..errors import ConfigError
from .config import load_config
from .runner import run_experiment, write_trace, write_trajectories


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Run sampler benchmarks and render benchmark figures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment grid")
    run.add_argument("config", help="TOML experiment file")
    run.add_argument(
        "--serial",
        action="store_true",
        help="run grid cells sequentially instead of in a process pool",
    )

    traj = sub.add_parser("trajectories", help="render equal-energy trajectories")
    traj.add_argument("config", help="TOML experiment file (2-d target)")

    trace = sub.add_parser("trace", help="render a trace plot from a chain CSV")
    trace.add_argument("chain", help="chain CSV written by ChainRecord.to_csv")
    trace.add_argument("--coord", type=int, default=0, help="coordinate index")
    trace.add_argument("--out", default=None, help="output SVG path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            out = run_experiment(config, parallel=not args.serial)
            print(out)
        elif args.command == "trajectories":
            config = load_config(args.config)
            svg_path, csv_path = write_trajectories(config)
            print(svg_path)
            print(csv_path)
        else:
            out = args.out or os.path.splitext(args.chain)[0] + "-trace.svg"
            print(write_trace(args.chain, args.coord, out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001  - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
