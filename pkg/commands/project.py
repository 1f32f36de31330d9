"""``project``: KL projection of one positive vector onto the epsilon-simplex."""

import argparse

from commands import EXIT_OK, guarded
from library import csv_util, simplex_util
from library.labeling import DEFAULT_EPSILON


def register(subparsers) -> None:
    parser = subparsers.add_parser("project", help="project a positive vector onto the simplex")
    parser.add_argument("values", type=float, nargs="+", help="positive components")
    parser.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    parser.add_argument("--method", choices=["sorted", "iterative"], default="sorted")
    parser.set_defaults(func=guarded(run))


def run(args: argparse.Namespace) -> int:
    """Print the projection with 17 significant digits."""
    project = (
        simplex_util.project_kl_sorted
        if args.method == "sorted"
        else simplex_util.project_kl_iterative
    )
    result = project(args.values, args.epsilon)
    print(" ".join(csv_util.format_float(x) for x in result.values))
    return EXIT_OK
