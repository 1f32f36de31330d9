import argparse
import logging
import sys

from commands import analyze, example, features, label, project

# Registered in this order; each module adds one sub-command.
COMMANDS = (label, analyze, project, features, example)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mf-label",
        description="Image labeling by multiplicative filtering on the assignment simplex.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)
    return args.func(args)


logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s %(levelname)s %(message)s",
)


if __name__ == "__main__":
    sys.exit(main())
