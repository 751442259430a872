"""Command line entry point.

Subcommands:
  run <config>                 certify and roll out every sweep item
  certify <config>             certificate pipeline only, no rollout
  replay <config> <commands>   replay timed velocity commands on the proxy plant

Exit codes: 0 on success (unsafe or diverged runs are flagged in the
artifacts, not the exit code), 2 on configuration errors, 3 on internal
errors.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .errors import ConfigError
from .experiments import run_experiment, run_replay

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, metavar="DIR",
                        help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, default=0, metavar="U64",
                        help="seed for all sampling (default 0)")

    parser = argparse.ArgumentParser(
        prog="romsafe",
        description="Safety-filtered reduced-order control experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common],
                           help="certify and roll out a config")
    p_run.add_argument("config")

    p_cert = sub.add_parser("certify", parents=[common],
                            help="run the certificate pipeline only")
    p_cert.add_argument("config")

    p_replay = sub.add_parser("replay", parents=[common],
                              help="replay a timed command file")
    p_replay.add_argument("config")
    p_replay.add_argument("commands")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(args.config, args.out, args.seed)
        if args.command == "certify":
            return run_experiment(args.config, args.out, args.seed, do_rollout=False)
        return run_replay(args.config, args.commands, args.out, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:  # pragma: no cover - defensive
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
