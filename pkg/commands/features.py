"""``features``: texture covariance descriptors and texture priors as CSV."""

import argparse
from pathlib import Path

from commands import EXIT_OK, CommandError, guarded
from library import csv_util, features, img_util
from library.features import DEFAULT_COV_WINDOW, DEFAULT_PRESMOOTH_SIGMA, TextureParams
from library.metric_util import MetricSpace


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "features", help="compute per-pixel texture descriptors (mean and covariance)"
    )
    parser.add_argument("input", nargs="?", help="grayscale image")
    parser.add_argument("--presmooth-sigma", type=float, default=DEFAULT_PRESMOOTH_SIGMA)
    parser.add_argument("--cov-window", type=int, default=DEFAULT_COV_WINDOW)
    parser.add_argument("--output", help="descriptor CSV (5 mean + 15 covariance columns)")
    parser.add_argument(
        "--priors-from", nargs="+", metavar="IMG", help="one texture sample image per label"
    )
    parser.add_argument("--prior-output", help="CSV for the priors built from --priors-from")
    parser.add_argument("--seed", type=int, default=0, help="seed for the random prior patches")
    parser.set_defaults(func=guarded(run))


def run(args: argparse.Namespace) -> int:
    """Write descriptors for ``input`` and/or priors for the sample images."""
    params = TextureParams(args.presmooth_sigma, args.cov_window)
    space = MetricSpace.texture()
    if not args.input and not args.priors_from:
        raise CommandError("give an input image, --priors-from, or both")

    if args.input:
        gray = img_util.grayscale(img_util.read_image(args.input))
        image, _ = features.texture_image(gray, params)
        rows = space.to_rows(image.features)
        if args.output:
            csv_util.write_table(rows, args.output, image.geometry.shape, "texture descriptors")
        else:
            for row in rows:
                print(",".join(csv_util.format_float(x) for x in row))

    if args.priors_from:
        samples = [img_util.grayscale(img_util.read_image(p)) for p in args.priors_from]
        priors = features.texture_priors(samples, params, args.seed)
        rows = space.to_rows(priors.priors)
        names = " ".join(Path(p).name for p in args.priors_from)
        if args.prior_output:
            csv_util.write_table(rows, args.prior_output, header=f"texture priors: {names}")
        else:
            for row in rows:
                print(",".join(csv_util.format_float(x) for x in row))
    return EXIT_OK
