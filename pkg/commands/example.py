"""``example26``: reproduce the ten-pixel signal table and its epsilon = 0 collapse."""

import argparse

from commands import EXIT_FAILURE, EXIT_OK, guarded
from library import analysis


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "example26", help="re-run the ten-pixel signal example and compare with its table"
    )
    parser.add_argument(
        "--iterations", type=int, default=500, help="log-domain iterations for epsilon = 0"
    )
    parser.set_defaults(func=guarded(run))


def run(args: argparse.Namespace) -> int:
    report = analysis.reproduce_signal_example(r_max=args.iterations)
    print(report.to_text(), end="")
    return EXIT_OK if report.matches else EXIT_FAILURE
