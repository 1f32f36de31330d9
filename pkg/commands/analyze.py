"""``analyze``: spectral prediction of the epsilon = 0 limit for an assignment and graph."""

import argparse
import logging
from pathlib import Path

from commands import EXIT_OK, CommandError, add_run_arguments, guarded, load_run_config
from commands.label import filtering_weights
from library import analysis, csv_util, graph_util
from library.graph_util import GridGeometry
from library.labeling import Variant
from library.util import RunReport


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "analyze", help="predict per-pixel epsilon=0 limits from the eigenstructure of rho"
    )
    add_run_arguments(parser)
    parser.add_argument("--graph", help="rho as a triplet file (overrides --rho)")
    parser.add_argument(
        "--oracle", type=int, metavar="R", help="check verdicts against R log-domain iterations"
    )
    parser.set_defaults(func=guarded(run))


def run(args: argparse.Namespace) -> int:
    """Print the convergence report; write per-pixel verdicts when --output is given."""
    config = load_run_config(args)
    if not config.initial:
        raise CommandError("analyze needs --initial (an n x K assignment CSV)")
    table = csv_util.read_table(config.initial)
    A = table.values
    shape = config.grid or table.grid or (1, len(A))
    geom = GridGeometry(int(shape[0]), int(shape[1]))
    if geom.n != len(A):
        raise CommandError(f"grid {geom.height}x{geom.width} does not hold {len(A)} pixels")

    if args.graph:
        rho = graph_util.load_graph(args.graph)
        if config.symmetrize:
            rho, _ = graph_util.symmetrize(rho)
    else:
        rho = filtering_weights(config, geom, None)
    report_log = RunReport("analyze")
    report_log.add(config=config.as_dict())
    report = analysis.analyze(A, rho, Variant(config.variant), oracle_iterations=args.oracle)
    print(report.to_text(), end="")

    if config.output:
        prefix = Path(config.output)
        report.write_csv(prefix.with_name(prefix.name + ".csv"))
        report_log.add(
            pixels=len(A),
            positive_groups=report.eig.s_hat,
            collapse_label=report.collapse.label,
            oracle_agreement=report.oracle_agreement(),
        )
        report_log.write(prefix.with_name(prefix.name + ".report.yml"))
    agreement = report.oracle_agreement()
    if agreement is not None and agreement < 1.0:
        logging.warning(f"Oracle disagrees with the prediction on {1.0 - agreement:.2%} of pixels")
    return EXIT_OK
