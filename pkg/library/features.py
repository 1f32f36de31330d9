"""Texture descriptors, prior construction and the nearest-prior baseline."""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from library.graph_util import GridGeometry
from library.labeling import FeatureImage, PriorSet
from library.metric_util import MetricKind, MetricSpace

# Channels of the texture field: I, I_x, I_y, I_xx, I_yy.
TEXTURE_CHANNELS = 5

# Gaussian filters are truncated at this many standard deviations.
GAUSSIAN_TRUNCATE = 3.0

# Regularization added to singular covariances, relative to trace / channels.
COVARIANCE_REGULARIZATION = 1e-8

# Smallest regularization; also used for covariances whose trace is rounding noise.
COVARIANCE_FLOOR = 1e-8

# Eigenvalues at or below this are treated as zero whatever the trace.
COVARIANCE_NOISE = 1e-20

# Texture field defaults.
DEFAULT_PRESMOOTH_SIGMA = 0.0
DEFAULT_COV_WINDOW = 7

# Default patch count for texture priors.
TEXTURE_PRIOR_PATCHES = 100

# Default radius for covering prior selection.
COVERING_RADIUS = 0.3

# Levels per channel of the color-cube priors.
COLOR_CUBE_LEVELS = 8


class FeatureError(ValueError):
    """Raised for feature extraction or prior construction failures."""

    pass


class UnsupportedOperationError(FeatureError):
    """Raised when an operation needs a linear feature space."""

    pass


@dataclass(frozen=True)
class TextureParams:
    presmooth_sigma: float = DEFAULT_PRESMOOTH_SIGMA
    cov_window: int = DEFAULT_COV_WINDOW

    def __post_init__(self):
        if self.presmooth_sigma < 0:
            raise FeatureError(f"presmooth_sigma must be >= 0, got {self.presmooth_sigma}")
        if self.cov_window < 3 or self.cov_window % 2 == 0:
            raise FeatureError(f"cov_window must be odd and >= 3, got {self.cov_window}")


@dataclass
class CovarianceFeature:
    """Per-pixel mean ``(n, 5)`` and covariance ``(n, 5, 5)`` of the texture field."""

    mu: np.ndarray
    C: np.ndarray

    @property
    def features(self) -> tuple[np.ndarray, np.ndarray]:
        """Layout expected by ``MetricSpace.texture()``."""
        return (self.mu, self.C)


def feature_vector_field(image: np.ndarray, params: TextureParams) -> np.ndarray:
    """``(N, M, 5)`` field ``(I, I_x, I_y, I_xx, I_yy)`` of a grayscale image.

    Derivatives are central differences with mirrored (edge-repeated) boundaries; ``x`` runs
    along columns.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise FeatureError(f"texture field needs a grayscale image, got shape {image.shape}")
    if params.presmooth_sigma > 0:
        image = ndimage.gaussian_filter(
            image, params.presmooth_sigma, mode="reflect", truncate=GAUSSIAN_TRUNCATE
        )
    padded = np.pad(image, 1, mode="symmetric")
    center = padded[1:-1, 1:-1]
    left, right = padded[1:-1, :-2], padded[1:-1, 2:]
    up, down = padded[:-2, 1:-1], padded[2:, 1:-1]
    return np.stack(
        [
            image,
            (right - left) / 2.0,
            (down - up) / 2.0,
            right - 2.0 * center + left,
            down - 2.0 * center + up,
        ],
        axis=-1,
    )


def _regularize(C: np.ndarray) -> np.ndarray:
    """Add ``delta I`` where a covariance is not safely positive definite.

    ``delta`` is never below ``COVARIANCE_FLOOR``, so a flat window and an average of flat
    patches (whose trace is rounding noise) end up at nearly the same matrix.
    """
    trace = np.maximum(np.trace(C, axis1=-2, axis2=-1), 0.0)
    smallest = np.linalg.eigvalsh(C)[..., 0]
    singular = smallest <= np.maximum(1e-12 * trace, COVARIANCE_NOISE)
    if np.any(singular):
        delta = np.maximum(COVARIANCE_REGULARIZATION * trace / C.shape[-1], COVARIANCE_FLOOR)
        C = C + np.where(singular, delta, 0.0)[..., None, None] * np.eye(C.shape[-1])
        logging.debug(f"Regularized {int(singular.sum())} singular covariances")
    return C


def _window_statistics(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and exactly symmetric sample covariance of ``(..., channels, count)`` samples."""
    mu = samples.mean(axis=-1)
    centered = samples - mu[..., None]
    C = centered @ np.swapaxes(centered, -1, -2) / (samples.shape[-1] - 1)
    return mu, 0.5 * (C + np.swapaxes(C, -1, -2))


def covariance_descriptors(field: np.ndarray, params: TextureParams) -> CovarianceFeature:
    """Windowed mean and covariance of a ``(N, M, 5)`` field, windows mirrored at the edges."""
    N, M, channels = field.shape
    half = params.cov_window // 2
    padded = np.pad(field, ((half, half), (half, half), (0, 0)), mode="symmetric")
    windows = sliding_window_view(padded, (params.cov_window, params.cov_window), axis=(0, 1))
    samples = windows.reshape(N * M, channels, params.cov_window**2)
    mu, C = _window_statistics(samples)
    return CovarianceFeature(mu, _regularize(C))


def texture_image(image: np.ndarray, params: TextureParams) -> tuple[FeatureImage, MetricSpace]:
    descriptors = covariance_descriptors(feature_vector_field(image, params), params)
    geom = GridGeometry(*np.asarray(image).shape)
    return FeatureImage(geom, descriptors.features), MetricSpace.texture()


def texture_prior(
    image: np.ndarray,
    params: TextureParams,
    rng: np.random.Generator,
    patches: int = TEXTURE_PRIOR_PATCHES,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean of the means and of the covariances of random rectangular patches of a sample.

    Patch sides are drawn between ``cov_window`` and the image size.
    """
    field = feature_vector_field(image, params)
    N, M, channels = field.shape
    if min(N, M) < params.cov_window:
        raise FeatureError(f"sample {N}x{M} is smaller than the {params.cov_window} window")
    means, covariances = [], []
    for _ in range(patches):
        h = int(rng.integers(params.cov_window, N + 1))
        w = int(rng.integers(params.cov_window, M + 1))
        r0 = int(rng.integers(0, N - h + 1))
        c0 = int(rng.integers(0, M - w + 1))
        samples = field[r0 : r0 + h, c0 : c0 + w].reshape(-1, channels).T
        mu, C = _window_statistics(samples)
        means.append(mu)
        covariances.append(C)
    C = _regularize(np.mean(covariances, axis=0)[None])[0]
    return np.mean(means, axis=0), C


def texture_priors(
    samples: list[np.ndarray], params: TextureParams, seed: int = 0
) -> PriorSet:
    """One prior per supervising texture sample."""
    rng = np.random.default_rng(seed)
    pairs = [texture_prior(s, params, rng) for s in samples]
    mu = np.array([p[0] for p in pairs])
    C = np.array([p[1] for p in pairs])
    return PriorSet((mu, C), MetricSpace.texture())


def color_cube_priors(levels: int = COLOR_CUBE_LEVELS) -> np.ndarray:
    """RGB grid ``{0, 1/(levels-1), ..., 1}^3``, red varying slowest."""
    axis = np.linspace(0.0, 1.0, levels)
    r, g, b = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([r.ravel(), g.ravel(), b.ravel()], axis=1)


def select_covering_priors(
    image: FeatureImage, space: MetricSpace, radius: float = COVERING_RADIUS, seed: int = 0
) -> PriorSet:
    """Pick pixels in random order as priors, skipping any within ``radius`` of a chosen one.

    Chosen priors are pairwise at least ``radius`` apart and every valid pixel lies within
    ``radius`` of some prior.
    """
    if radius <= 0:
        raise FeatureError(f"radius must be positive, got {radius}")
    rng = np.random.default_rng(seed)
    valid = np.flatnonzero(image.valid_mask)
    features = space.take(image.features, valid)
    nearest = np.full(len(valid), np.inf)
    chosen = []
    for pos in rng.permutation(len(valid)):
        if nearest[pos] < radius:
            continue
        chosen.append(pos)
        point = space.take(features, int(pos))
        nearest = np.minimum(nearest, space.distances_to(features, point))
    if len(chosen) < 2:
        raise FeatureError(f"radius {radius} leaves fewer than two priors")
    logging.info(f"Selected {len(chosen)} covering priors at radius {radius}")
    return PriorSet(space.take(features, np.array(chosen)), space)


def simple_labeling(
    image: FeatureImage, priors: PriorSet, space: MetricSpace, sigma: float
) -> np.ndarray:
    """Nearest prior after Gaussian smoothing of a Euclidean feature image (1-based labels)."""
    if space.kind is not MetricKind.EUCLIDEAN:
        raise UnsupportedOperationError("simple labeling needs Euclidean features")
    if not np.all(image.valid_mask):
        raise FeatureError("simple labeling needs every pixel to be valid")
    if sigma < 0:
        raise FeatureError(f"sigma must be >= 0, got {sigma}")
    geom = image.geometry
    features = np.asarray(image.features, dtype=float).reshape(geom.height, geom.width, -1)
    if sigma > 0:
        features = ndimage.gaussian_filter(
            features, (sigma, sigma, 0), mode="reflect", truncate=GAUSSIAN_TRUNCATE
        )
    flat = features.reshape(geom.n, -1)
    priors_arr = np.asarray(priors.priors, dtype=float)
    distances = np.linalg.norm(flat[:, None, :] - priors_arr[None, :, :], axis=-1)
    return np.argmin(distances, axis=1) + 1
