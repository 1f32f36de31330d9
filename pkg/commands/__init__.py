"""Sub-commands of the mf-label command line."""

import argparse
import logging
import sys
from collections.abc import Callable

from library.config import ConfigError, RunConfig
from library.csv_util import ParseError
from library.graph_util import NonSymmetricError
from library.img_util import ImageReadError
from library.simplex_util import EpsilonRangeError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARSE = 2
EXIT_NONSYMMETRIC = 3
EXIT_EPSILON = 4


class CommandError(Exception):
    """Raised by a command to stop with a specific exit status."""

    def __init__(self, message: str, status: int = EXIT_FAILURE):
        super().__init__(message)
        self.status = status


def exit_status(error: Exception) -> int:
    """Map an exception raised during a command to its exit status."""
    match error:
        case CommandError():
            return error.status
        case ParseError() | ConfigError() | ImageReadError():
            return EXIT_PARSE
        case EpsilonRangeError():
            return EXIT_EPSILON
        case NonSymmetricError():
            return EXIT_NONSYMMETRIC
    return EXIT_FAILURE


def guarded(fn: Callable[[argparse.Namespace], int]) -> Callable[[argparse.Namespace], int]:
    """Wrap a command so domain errors become logged messages and exit statuses."""

    def run(args: argparse.Namespace) -> int:
        try:
            return fn(args)
        except (CommandError, ValueError, OSError) as e:
            status = exit_status(e)
            logging.error(f"{args.command}: {e}")
            print(f"error: {e}", file=sys.stderr)
            return status

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def add_run_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags shared by the labeling and analysis commands (defaults come from RunConfig)."""
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--metric", help="euclidean, spd, rotation[:GROUP], multiphase, texture")
    parser.add_argument("--alpha", help="initial-assignment weights, e.g. uniform:3")
    parser.add_argument("--rho", help="filtering weights (default: same as --alpha)")
    parser.add_argument("--epsilon", type=float, help="simplex margin (default 1e-10)")
    parser.add_argument("--entropy-threshold", type=float, help="stop below this entropy")
    parser.add_argument("--max-iters", dest="max_iterations", type=int, help="iteration cap")
    parser.add_argument("--variant", choices=["standard", "apss", "additive"])
    parser.add_argument("--grid", type=int, nargs=2, metavar=("ROWS", "COLS"))
    parser.add_argument("--initial", help="CSV of an initial assignment (n x K)")
    parser.add_argument("--output", help="output path prefix")
    parser.add_argument("--threads", type=int, help="worker threads (default: physical cores)")
    parser.add_argument("--seed", type=int, help="seed for every random choice")
    parser.add_argument(
        "--symmetrize", action="store_true", default=None, help="use (rho + rho^T) / 2"
    )


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Config file values overridden by explicit flags."""
    config = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "command", "func")}
    return config.merged(**overrides)
