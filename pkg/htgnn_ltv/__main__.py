"""Entry point for the htgnn-ltv experiment CLI.

Supports:
  - `python -m htgnn_ltv`
  - `htgnn-ltv` CLI (installed via pip)

Log level priority (highest → lowest):
  1. --log-level
  2. HTGNN_LOG_LEVEL environment variable
  3. INFO
"""

import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from htgnn_ltv.runner import ExperimentRunner
from htgnn_ltv.tools.command_definitions import get_all_commands

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _build_parser() -> argparse.ArgumentParser:
    """Build the parser with one subcommand per command definition."""
    parser = argparse.ArgumentParser(
        prog="htgnn-ltv",
        description="Multi-horizon lifetime-value modelling: synthetic data, training, evaluation and ablations.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--log-level",
        default=None,
        choices=LOG_LEVELS,
        type=str.upper,
        help="Diagnostic verbosity on stderr (env: HTGNN_LOG_LEVEL, default: INFO)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in get_all_commands():
        sub = subparsers.add_parser(command.name, help=command.description, description=command.description)
        for argument in command.arguments:
            if argument.flag:
                sub.add_argument(argument.option, dest=argument.dest, action="store_true", help=argument.help)
            else:
                sub.add_argument(
                    argument.option,
                    dest=argument.dest,
                    type=argument.type,
                    required=argument.required,
                    default=argument.default,
                    choices=argument.choices,
                    help=argument.help,
                )
    return parser


def _configure_logging(level_name: Optional[str]) -> None:
    # CLI arg → env var → built-in default
    level = (level_name or os.environ.get("HTGNN_LOG_LEVEL", "INFO")).upper()
    if level not in LOG_LEVELS:
        print(f"Ignoring unknown HTGNN_LOG_LEVEL={level}", file=sys.stderr)
        level = "INFO"
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("htgnn_ltv")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = _build_parser().parse_args(argv)
    _configure_logging(args.log_level)

    arguments = {k: v for k, v in vars(args).items() if k not in ("command", "log_level")}
    result = ExperimentRunner().run_command(args.command, arguments)

    if result.table:
        print(result.table)
    print(json.dumps(result.payload, indent=2, default=str))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
