"""Command-line entry point: one subcommand per experiment kind.

Exit status is 0 on success, 2 for configuration errors and 3 when a run
fails (for instance when a separation certificate cannot be met).
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .harness import COMMANDS, SCENARIOS, Config, load_config, run_experiment
from .trace import export

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def build_parser():
    parser = _Parser(prog="calapproach", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"scenarios: {', '.join(SCENARIOS[name])}")
        p.add_argument("--config", help="flat key=value file; flags override it")
        p.add_argument("--scenario")
        p.add_argument("--steps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--mesh", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--eta", type=float)
        p.add_argument("--adversary", help="e.g. iid:0.3,0.7 | const:1 | periodic:0,1,1 | greedy")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=["csv", "jsonl"])
        p.add_argument("--log-every", type=int, dest="log_every")
        p.add_argument("--base", type=int, help="first block length of the doubling schedule")
        p.add_argument("--evaluation", choices=["worst-case", "optimistic"])
    return parser


def config_from_args(args):
    values = load_config(args.config) if args.config else {}
    values.pop("command", None)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        values[key] = value
    return Config(command=args.command, **values)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError("command", f"missing; valid: {', '.join(COMMANDS)}")
        config = config_from_args(args).resolved()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        trace = run_experiment(config)
        export(trace, config.out or sys.stdout, config.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # any failed run maps to one exit status
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
