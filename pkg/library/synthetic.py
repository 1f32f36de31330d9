"""Synthetic images and random instances with known answers."""

import numpy as np
from scipy.stats import special_ortho_group

from library.graph_util import GridGeometry
from library.labeling import FeatureImage

# Colors of the three-region image, one per ground-truth label.
REGION_COLORS = np.array(
    [
        [0.9, 0.1, 0.1],
        [0.1, 0.8, 0.2],
        [0.2, 0.2, 0.9],
    ]
)


def three_region_labels(height: int = 64, width: int = 64) -> np.ndarray:
    """Ground truth: label 1 on the left third, 2 top right, 3 bottom right."""
    rows, cols = np.mgrid[0:height, 0:width]
    labels = np.where(rows < height // 2, 2, 3)
    return np.where(cols < width // 3, 1, labels)


def three_region_image(
    height: int = 64,
    width: int = 64,
    noise: float = 0.1,
    missing: float = 0.0,
    seed: int = 0,
) -> tuple[FeatureImage, np.ndarray]:
    """Noisy RGB image of three flat regions and its 1-based ground-truth labels.

    A fraction ``missing`` of pixels is dropped from the validity mask at random.
    """
    rng = np.random.default_rng(seed)
    truth = three_region_labels(height, width).ravel()
    features = REGION_COLORS[truth - 1] + rng.normal(0.0, noise, size=(truth.size, 3))
    mask = rng.random(truth.size) >= missing
    return FeatureImage(GridGeometry(height, width), features, mask), truth


def texture_checker(size: int = 8) -> tuple[FeatureImage, np.ndarray]:
    """Grayscale image: vertical stripes on the left half, flat 0.5 on the right half."""
    rows, cols = np.mgrid[0:size, 0:size]
    left = cols < size // 2
    values = np.where(left, (cols % 2).astype(float), 0.5)
    truth = np.where(left, 1, 2).ravel()
    return FeatureImage(GridGeometry(size, size), values.reshape(-1, 1)), truth


def random_spd(n: int, dim: int, rng: np.random.Generator, spread: float = 1.0) -> np.ndarray:
    """``(n, dim, dim)`` SPD matrices with log-eigenvalues uniform in ``[-spread, spread]``."""
    rotations = special_ortho_group.rvs(dim, size=n, random_state=rng).reshape(n, dim, dim)
    eigenvalues = np.exp(rng.uniform(-spread, spread, size=(n, dim)))
    mats = (rotations * eigenvalues[:, None, :]) @ np.swapaxes(rotations, 1, 2)
    return 0.5 * (mats + np.swapaxes(mats, 1, 2))


def random_quaternions(n: int, rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_symmetric_stochastic(
    n: int, rng: np.random.Generator, density: float = 1.0, blocks: int = 1
) -> np.ndarray:
    """Dense symmetric row-stochastic matrix with positive diagonal.

    Off-diagonal weights are random and symmetric; the diagonal takes up the remainder so
    every row sums to one. With ``blocks > 1`` the pixels split into disconnected groups.
    """
    B = rng.random((n, n)) * (rng.random((n, n)) < density)
    B = np.triu(B, 1)
    B = B + B.T
    if blocks > 1:
        group = np.arange(n) * blocks // n
        B = B * (group[:, None] == group[None, :])
    scale = 1.25 * max(B.sum(axis=1).max(), 1e-12)
    P = B / scale
    P[np.diag_indices(n)] = 1.0 - P.sum(axis=1)
    return P


def random_assignment(n: int, K: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.random((n, K)) + 0.05
    return A / A.sum(axis=1, keepdims=True)
