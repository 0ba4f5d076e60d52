"""Command-line entry point: fit, summarize, simulate, benchmark and rerun."""
import argparse
import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from dpmvs import settings
from dpmvs.cli.commands import benchmark, fit, rerun, simulate, summarize
from dpmvs.common.errors import DataValidationError, DomainError, SampleFileError

# Configure logging
logger = logging.getLogger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (DataValidationError, DomainError, SampleFileError, ValidationError, FileNotFoundError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Dirichlet process mixture clustering with variable selection",
    )
    parser.add_argument("--version", action="version", version=f"{settings.APP_NAME} {settings.APP_VERSION}")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="logging level (env DPMVS_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (fit, summarize, simulate, benchmark, rerun):
        command.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    args.argv = argv

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except USAGE_ERRORS as e:
        logger.error(f"Error in {args.command}: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.exception(f"Error in {args.command}: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
