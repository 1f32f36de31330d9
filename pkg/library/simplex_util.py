"""Operations on the epsilon-simplex: KL projection, geometric means, entropy."""

from dataclasses import dataclass

import numpy as np
from scipy.special import entr, rel_entr


class SimplexError(ValueError):
    """Raised for vectors or margins outside the simplex operations' domain."""

    pass


class EpsilonRangeError(SimplexError):
    """Raised when the margin epsilon is outside [0, 1/K)."""

    pass


@dataclass(frozen=True)
class SimplexVector:
    """A point of the epsilon-simplex: entries >= epsilon summing to one."""

    values: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self) -> int:
        return len(self.values)


def check_epsilon(epsilon: float, K: int) -> None:
    """Raise SimplexError unless ``0 <= epsilon < 1/K``."""
    if K < 1:
        raise SimplexError(f"need at least one component, got {K}")
    if not 0.0 <= epsilon < 1.0 / K:
        raise EpsilonRangeError(f"epsilon={epsilon:g} must lie in [0, 1/{K})")


def _check_positive(y: np.ndarray) -> None:
    if y.size == 0:
        raise SimplexError("empty vector")
    if not np.all(y > 0):
        raise SimplexError(f"all components must be positive, got min {np.min(y):g}")


def kl_divergence(x, y) -> float:
    """``sum_k x_k log(x_k / y_k)`` with ``0 log 0 = 0``; ``y`` must be positive."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise SimplexError(f"shape mismatch: {x.shape} vs {y.shape}")
    _check_positive(y)
    return float(np.sum(rel_entr(x, y)))


def project_kl_sorted(y, epsilon: float) -> SimplexVector:
    """Closed-form KL projection of a positive vector onto the epsilon-simplex.

    With ``y`` sorted ascending and ``tau_m = (1 - m eps) / (|y|_1 - sum_{k<m} y_k)``, the
    ``m`` smallest components are pinned to ``eps`` where ``m`` is the smallest index with
    ``y_(m-1) tau_m <= eps < y_(m) tau_m``; the rest are scaled by ``tau_m``.
    """
    y = np.asarray(y, dtype=float)
    _check_positive(y)
    K = len(y)
    check_epsilon(epsilon, K)
    if epsilon == 0.0:
        return SimplexVector(y / y.sum(), 0.0)

    order = np.argsort(y, kind="stable")
    ys = y[order]
    before = np.concatenate(([0.0], np.cumsum(ys)[:-1]))
    m = np.arange(K)
    tau = (1.0 - m * epsilon) / (ys.sum() - before)
    prev = np.concatenate(([-np.inf], ys[:-1])) * tau
    scaled = ys * tau
    valid = np.flatnonzero((prev <= epsilon) & (scaled > epsilon))
    if len(valid) == 0:
        # Boundary rounding; a component sitting exactly at epsilon needs no pinning.
        valid = np.flatnonzero((prev <= epsilon) & (scaled >= epsilon))
    pinned = int(valid[0]) if len(valid) else K - 1

    out_sorted = np.where(m < pinned, epsilon, ys * tau[pinned])
    out = np.empty(K)
    out[order] = out_sorted
    return SimplexVector(out, epsilon)


def project_rows(V: np.ndarray, epsilon: float) -> np.ndarray:
    """Pinning loop of the labeling step, applied to every row of a normalized matrix.

    Components ``<= epsilon`` start pinned. While a row has a component below ``epsilon``,
    every component tied at the row minimum joins the pinned set, pinned components are set
    to ``epsilon`` and the free ones are rescaled by
    ``tau = (1 - |I| eps) / (1 - sum_{k in I} W_k)``, using the current values.
    """
    W = np.array(V, dtype=float, copy=True)
    if W.ndim != 2:
        raise SimplexError(f"expected a 2-d array, got shape {W.shape}")
    K = W.shape[1]
    check_epsilon(epsilon, K)
    if epsilon == 0.0:
        return W

    pinned = W <= epsilon
    active = np.any(W < epsilon, axis=1)
    first = True
    while np.any(active):
        rows = np.flatnonzero(active)
        sub = W[rows]
        sub_pinned = pinned[rows]
        if not first:
            low = np.where(sub_pinned, np.inf, sub).min(axis=1, keepdims=True)
            sub_pinned = sub_pinned | ((sub == low) & ~sub_pinned)
        count = sub_pinned.sum(axis=1, keepdims=True)
        pinned_mass = np.where(sub_pinned, sub, 0.0).sum(axis=1, keepdims=True)
        tau = (1.0 - count * epsilon) / (1.0 - pinned_mass)
        sub = np.where(sub_pinned, epsilon, sub * tau)
        W[rows] = sub
        pinned[rows] = sub_pinned
        first = False
        active = np.any(W < epsilon, axis=1) & ~np.all(pinned, axis=1)
    return W


def project_kl_iterative(y, epsilon: float) -> SimplexVector:
    """KL projection by the iterative pinning loop (single vector).

    ``y`` is normalized first; the result agrees with ``project_kl_sorted``.
    """
    y = np.asarray(y, dtype=float)
    _check_positive(y)
    check_epsilon(epsilon, len(y))
    return SimplexVector(project_rows((y / y.sum())[None, :], epsilon)[0], epsilon)


def weighted_geometric_mean(points, gamma) -> np.ndarray:
    """Componentwise ``prod_j points_j ** gamma_j`` (unnormalized), via logarithms."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (points.shape[0],):
        raise SimplexError(f"need one weight per point: {gamma.shape} vs {points.shape[0]}")
    if np.any(gamma < 0) or not np.isclose(gamma.sum(), 1.0, rtol=0, atol=1e-12):
        raise SimplexError("weights must be non-negative and sum to 1")
    _check_positive(points)
    return np.exp(gamma @ np.log(points))


def additive_shift_renormalize(v, epsilon: float) -> SimplexVector:
    """Shift so the minimum equals ``epsilon``, then renormalize.

    The result has components ``>= epsilon / (1 + K epsilon)``.
    """
    v = np.asarray(v, dtype=float)
    check_epsilon(epsilon, len(v))
    return SimplexVector(additive_shift_rows(v[None, :], epsilon)[0], epsilon)


def additive_shift_rows(V: np.ndarray, epsilon: float) -> np.ndarray:
    shifted = V + (epsilon - V.min(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def average_entropy(W) -> float:
    """``-(1/n) sum_{i,k} W_ik log W_ik`` with ``0 log 0 = 0``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    return float(entr(W).sum() / W.shape[0])


def vertex(k: int, K: int, epsilon: float) -> np.ndarray:
    """Vertex ``k`` (0-based) of the epsilon-simplex."""
    out = np.full(K, epsilon)
    out[k] = 1.0 - (K - 1) * epsilon
    return out


def vertex_deviation(W, epsilon: float) -> np.ndarray:
    """Per-row max-norm distance to the vertex of the row's largest component."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n, K = W.shape
    nearest = np.full_like(W, epsilon)
    nearest[np.arange(n), np.argmax(W, axis=1)] = 1.0 - (K - 1) * epsilon
    return np.abs(W - nearest).max(axis=1)
