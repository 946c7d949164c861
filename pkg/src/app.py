import logging
import sys

from src.utils.run_config import UsageError, cli, configure_logging
from src.utils.errors import (
    AutogradError,
    CheckpointError,
    ConfigError,
    DataError,
    GraphError,
    NonDeterministicError,
    NonFiniteError,
    NumericError,
    ShapeError,
    TensorFormatError,
)

from src.tools import datasets, diagnostics, evaluation, training, utils  # noqa: F401


logger = logging.getLogger("genshin")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_EXIT_CODES: tuple[tuple[type[Exception], int], ...] = (
    (UsageError, EXIT_USAGE),
    (ConfigError, EXIT_USAGE),
    (DataError, EXIT_DATA),
    (TensorFormatError, EXIT_DATA),
    (CheckpointError, EXIT_DATA),
    (GraphError, EXIT_DATA),
    (ShapeError, EXIT_DATA),
    (NumericError, EXIT_NUMERIC),
    (NonFiniteError, EXIT_NUMERIC),
    (AutogradError, EXIT_NUMERIC),
    (NonDeterministicError, EXIT_NUMERIC),
)


def exit_code(exc: Exception) -> int | None:
    for kind, code in _EXIT_CODES:
        if isinstance(exc, kind):
            return code
    return None


def main(argv: list[str] | None = None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = cli.build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE

    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except Exception as exc:
        code = exit_code(exc)
        if code is None:
            raise
        logger.error("%s: %s", type(exc).__name__, exc)
        return code


if __name__ == "__main__":
    sys.exit(main())
