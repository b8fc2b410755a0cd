#!/usr/bin/env python3
"""
ds-pass command line.

Sub-commands are discovered from ``ds_pass/commands/*_command.py``; each
returns a CommandResult whose exit code becomes the process status:
0 success, 2 usage/config error, 3 data error, 4 internal invariant violation.
"""

import argparse
import logging
import sys
from typing import List, Optional

from .commands import CommandResult, get_registry
from .errors import EXIT_INTERNAL, DSPassError

logger = logging.getLogger("ds_pass")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    registry = get_registry()
    parser = argparse.ArgumentParser(
        prog="ds-pass",
        description="Panoramic annular semantic segmentation toolkit",
        epilog=registry.describe(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="warnings and errors only")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in registry.names():
        command = registry.get(name)
        info = command.get_command_info()
        sub = subparsers.add_parser(
            name,
            help=info["description"],
            description="\n\n".join(p for p in (info["description"], info["details"]) if p),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        command.add_arguments(sub)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    command = get_registry().get(args.command)
    try:
        result = command.run(args)
    except DSPassError as e:
        logger.error(f"{args.command} failed: {e}")
        result = CommandResult.failure(e)
    except Exception as e:
        logger.exception(e)
        result = CommandResult(message=f"Internal error: {e}", is_error=True, exit_code=EXIT_INTERNAL)
    print(result.message, file=sys.stderr if result.is_error else sys.stdout)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
