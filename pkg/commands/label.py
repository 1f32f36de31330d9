"""``label``: run the labeling iteration on an image, a feature CSV or an assignment CSV."""

import argparse
import logging
from pathlib import Path

import numpy as np

from commands import EXIT_OK, CommandError, add_run_arguments, guarded, load_run_config
from library import config as run_config
from library import csv_util, features, graph_util, img_util, labeling
from library.config import RunConfig
from library.graph_util import GridGeometry, WeightGraph
from library.labeling import FeatureImage, PriorSet, StoppingRule, Variant
from library.metric_util import MetricSpace
from library.util import RunReport


def register(subparsers) -> None:
    parser = subparsers.add_parser("label", help="label an image by multiplicative filtering")
    parser.add_argument("input", nargs="?", help="image (.pgm/.ppm/.png) or feature CSV")
    add_run_arguments(parser)
    parser.add_argument("--priors", help="CSV of prior features, one per row")
    parser.add_argument(
        "--prior-radius", type=float, help="pick covering priors from the image at this radius"
    )
    parser.add_argument(
        "--color-cube", action="store_true", help="use the 512 color-cube priors"
    )
    parser.add_argument("--mask", help="validity mask (image or 0/1 CSV)")
    parser.add_argument("--dump-assignment", help="write the final assignment matrix as CSV")
    parser.add_argument(
        "--simple", type=float, metavar="SIGMA", help="nearest prior after Gaussian smoothing"
    )
    parser.add_argument("--preview", action="store_true", help="also write a palette PNG")
    parser.add_argument(
        "--presmooth-sigma", type=float, help="texture input: Gaussian pre-smoothing (default 0)"
    )
    parser.add_argument("--cov-window", type=int, help="texture input: covariance window (7)")
    parser.set_defaults(func=guarded(run))


def load_features(config: RunConfig) -> tuple[FeatureImage, MetricSpace]:
    """Read the input image or feature table into a FeatureImage."""
    if not config.input:
        raise CommandError("an input image or feature CSV is required (or use --initial)")
    space = run_config.parse_metric(config.metric)
    if img_util.is_image_path(config.input):
        values = img_util.read_image(config.input)
        geom = GridGeometry(values.shape[0], values.shape[1])
        if config.metric == "texture":
            gray = img_util.grayscale(values)
            feats = features.texture_image(gray, config.texture_params())[0].features
        else:
            feats = values.reshape(geom.n, -1)
        mask = np.ones(geom.n, dtype=bool)
    else:
        table = csv_util.read_table(config.input)
        geom = _grid(config, table.grid, len(table.values))
        feats = space.from_rows(table.values)
        mask = ~table.missing_rows
        if not mask.all():
            donor = int(np.argmax(mask))
            feats = space.fill(feats, mask, donor)
    if config.mask:
        mask &= img_util.read_mask(config.mask, geom.shape)
    logging.info(f"Loaded {geom.height}x{geom.width} features, {int(mask.sum())} valid")
    return FeatureImage(geom, feats, mask), space


def _grid(config: RunConfig, table_grid, n: int) -> GridGeometry:
    shape = config.grid or table_grid or (1, n)
    geom = GridGeometry(int(shape[0]), int(shape[1]))
    if geom.n != n:
        raise CommandError(f"grid {geom.height}x{geom.width} does not hold {n} pixels")
    return geom


def load_priors(
    args: argparse.Namespace, config: RunConfig, image: FeatureImage, space: MetricSpace
) -> PriorSet:
    if config.priors:
        table = csv_util.read_table(config.priors)
        return PriorSet(space.from_rows(table.values), space)
    if args.color_cube:
        return PriorSet(features.color_cube_priors(), space)
    if args.prior_radius:
        return features.select_covering_priors(image, space, args.prior_radius, config.seed)
    raise CommandError("priors are required: use --priors, --color-cube or --prior-radius")


def filtering_weights(
    config: RunConfig,
    geom: GridGeometry,
    alpha: WeightGraph | None,
    image: FeatureImage | None = None,
    space: MetricSpace | None = None,
) -> WeightGraph:
    """Graph for ``rho``, symmetrized on request."""
    if alpha is not None and config.rho_spec == config.alpha:
        rho = alpha
    else:
        rho = run_config.build_weights(config.rho_spec, geom, image, space, config.threads)
    if config.symmetrize:
        rho, delta = graph_util.symmetrize(rho)
        logging.info(f"Symmetrized rho (renormalization delta {delta:.3g})")
    return rho


def write_outputs(
    config: RunConfig,
    labels: np.ndarray,
    geom: GridGeometry,
    K: int,
    report: RunReport,
    preview: bool = False,
) -> None:
    if config.output:
        prefix = Path(config.output)
        img_util.write_label_map(labels, geom.shape, K, prefix.with_name(prefix.name + ".pgm"))
        if preview:
            img_util.write_label_preview(
                labels, geom.shape, prefix.with_name(prefix.name + ".png")
            )
        report.write(prefix.with_name(prefix.name + ".report.yml"))
    else:
        for row in np.asarray(labels).reshape(geom.shape):
            print(" ".join(str(int(x)) for x in row))


def run(args: argparse.Namespace) -> int:
    """Label the input and write the label map, report and optional assignment dump."""
    config = load_run_config(args)
    report = RunReport("label")
    report.add(config=config.as_dict())

    image, space = None, None
    if config.initial:
        table = csv_util.read_table(config.initial)
        A = table.values
        geom = _grid(config, table.grid, len(A))
        alpha = None
    else:
        image, space = load_features(config)
        geom = image.geometry
        priors = load_priors(args, config, image, space)
        if args.simple is not None:
            labels = features.simple_labeling(image, priors, space, args.simple)
            report.add(method="simple", sigma=float(args.simple))
            write_outputs(config, labels, geom, priors.K, report, args.preview)
            return EXIT_OK
        D = labeling.build_distance_matrix(image, priors, space)
        alpha = run_config.build_weights(config.alpha, geom, image, space, config.threads)
        A = labeling.init_assignment(D, alpha)

    rho = filtering_weights(config, geom, alpha, image, space)
    stop = StoppingRule(config.entropy_threshold, config.max_iterations)
    result = labeling.iterate(A, rho, config.epsilon, stop, Variant(config.variant), config.threads)

    report.add(
        iterations=result.iterations,
        converged=result.converged,
        final_entropy=float(result.final_entropy),
        vertex_deviation=float(result.vertex_deviation),
    )
    if rho.symmetric and config.epsilon > 0:
        report.add(objective=float(labeling.objective_F(result.state.W, rho)))
    if config.dump_assignment:
        csv_util.write_table(result.state.W, config.dump_assignment, geom.shape)
    write_outputs(config, result.labels, geom, A.shape[1], report, args.preview)
    return EXIT_OK
