"""Label assignment by multiplicative filtering on the epsilon-simplex.

Each iteration replaces every assignment row by the weighted geometric mean of itself and
its neighbors (Step 1), normalizes it (Step 2) and pins small components to epsilon (Step 3).
"""

import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
from scipy.special import log_softmax, logsumexp

from library import simplex_util, util
from library.graph_util import (
    GridGeometry,
    NonSymmetricError,
    WeightGraph,
    as_weight_graph,
)
from library.metric_util import MetricError, MetricSpace

# Default margin of the epsilon-simplex.
DEFAULT_EPSILON = 1e-10

# Default stop once the average entropy falls below this.
DEFAULT_ENTROPY_THRESHOLD = 1e-3

DEFAULT_MAX_ITERATIONS = 1000

# Default iteration count for the epsilon = 0 log-domain oracle.
DEFAULT_LOG_ITERATIONS = 500


class LabelingError(ValueError):
    """Raised when labeling inputs are inconsistent or outside their domain."""

    pass


class Variant(StrEnum):
    STANDARD = "standard"
    APSS = "apss"
    ADDITIVE = "additive"


@dataclass
class FeatureImage:
    """Features on a grid; pixels outside ``valid_mask`` carry no data."""

    geometry: GridGeometry
    features: object
    valid_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.valid_mask is None:
            self.valid_mask = np.ones(self.geometry.n, dtype=bool)
        self.valid_mask = np.asarray(self.valid_mask, dtype=bool).ravel()
        if self.valid_mask.shape != (self.geometry.n,):
            raise LabelingError(
                f"mask has {self.valid_mask.size} entries for {self.geometry.n} pixels"
            )


@dataclass
class PriorSet:
    """``K >= 2`` prior features in the same layout as image features."""

    priors: object
    space: MetricSpace

    def __post_init__(self):
        if self.K < 2:
            raise LabelingError(f"need at least 2 priors, got {self.K}")

    @property
    def K(self) -> int:
        return self.space.count(self.priors)

    def check_distinct(self) -> bool:
        distinct = True
        for k in range(self.K):
            d = self.space.distances_to(self.priors, self.space.take(self.priors, k))
            d[k] = np.inf
            if np.any(d == 0):
                logging.warning(f"Prior {k} coincides with prior {int(np.argmin(d))}")
                distinct = False
        return distinct


@dataclass
class StoppingRule:
    """Stop below an average entropy, after ``max_iterations``, or once stationary."""

    entropy_threshold: float = DEFAULT_ENTROPY_THRESHOLD
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    stationary_tolerance: float | None = None

    def __post_init__(self):
        if self.entropy_threshold <= 0:
            raise ValueError(f"entropy_threshold must be positive, got {self.entropy_threshold}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass
class LabelState:
    W: np.ndarray
    epsilon: float = 0.0
    iteration: int = 0
    entropy_trace: list[float] = field(default_factory=list)


@dataclass
class LabelingResult:
    state: LabelState
    labels: np.ndarray
    converged: bool
    variant: Variant
    vertex_deviation: float

    @property
    def iterations(self) -> int:
        return self.state.iteration

    @property
    def final_entropy(self) -> float:
        return self.state.entropy_trace[-1] if self.state.entropy_trace else math.nan


@dataclass
class LogState:
    """Log-assignment ``w = 2^r v`` for the epsilon = 0 iteration (``v`` kept scaled)."""

    v: np.ndarray
    a: np.ndarray
    iteration: int = 0

    def unscaled(self) -> np.ndarray:
        return np.ldexp(self.v, self.iteration)


@dataclass
class LogDomainResult:
    state: LogState
    label_trace: np.ndarray
    labels: np.ndarray

    def first_uniform_iteration(self, label: int) -> int | None:
        """First iteration at which every pixel carries ``label``."""
        hits = np.flatnonzero(np.all(self.label_trace == label, axis=1))
        return int(hits[0]) if len(hits) else None


def build_distance_matrix(
    image: FeatureImage, priors: PriorSet, space: MetricSpace
) -> np.ndarray:
    """``(n, K)`` distances from each pixel to each prior; missing pixels get zero rows."""
    priors.check_distinct()
    n = image.geometry.n
    valid = np.flatnonzero(image.valid_mask)
    features = space.take(image.features, valid)
    try:
        space.validate(features)
    except MetricError as e:
        raise LabelingError(f"pixel {_first_bad_pixel(space, features, valid)}: {e}") from e
    D = np.zeros((n, priors.K))
    for k in range(priors.K):
        D[valid, k] = space.distances_to(features, space.take(priors.priors, k))
    return D


def _first_bad_pixel(space: MetricSpace, features, valid: np.ndarray) -> int:
    for pos, i in enumerate(valid):
        try:
            space.validate(space.take(features, np.array([pos])))
        except MetricError:
            return int(i)
    return int(valid[0]) if len(valid) else -1


def init_assignment(D: np.ndarray, alpha) -> np.ndarray:
    """``A = softmax(-(alpha D))`` row-wise, computed with max subtraction."""
    D = np.asarray(D, dtype=float)
    alpha = as_weight_graph(alpha)
    if alpha.n != D.shape[0]:
        raise LabelingError(f"alpha has {alpha.n} rows for {D.shape[0]} pixels")
    return np.exp(log_softmax(-(alpha.matrix @ D), axis=1))


def _log_positive(W: np.ndarray, what: str) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if not np.all(W > 0):
        raise LabelingError(f"{what} must be strictly positive")
    return np.log(W)


def step_multiplicative(W, rho) -> np.ndarray:
    """Unnormalized Step 1: ``U_i = W_i * prod_j W_j ** rho_ij``."""
    logW = _log_positive(W, "assignment")
    return np.exp(logW + as_weight_graph(rho).matrix @ logW)


def step_apss(W, rho, A) -> np.ndarray:
    """Step 1 with the data term: ``U_i = A_i * W_i * prod_j W_j ** rho_ij``."""
    logW = _log_positive(W, "assignment")
    logA = _log_positive(A, "initial assignment")
    return np.exp(logA + logW + as_weight_graph(rho).matrix @ logW)


def assign_labels(W) -> np.ndarray:
    """1-based label of the largest component; ties go to the lowest label."""
    W = W.W if isinstance(W, LabelState) else np.asarray(W)
    return np.argmax(W, axis=1) + 1


def _check_inputs(A: np.ndarray, graph: WeightGraph) -> None:
    if A.ndim != 2 or A.shape[1] < 2:
        raise LabelingError(f"assignment must be (n, K) with K >= 2, got {A.shape}")
    if graph.n != A.shape[0]:
        raise LabelingError(f"rho has {graph.n} rows for {A.shape[0]} pixels")
    if not np.all(A > 0):
        raise LabelingError("initial assignment must be strictly positive")


def iterate(
    A,
    rho,
    epsilon: float = DEFAULT_EPSILON,
    stop: StoppingRule | None = None,
    variant: Variant = Variant.STANDARD,
    threads: int = 1,
) -> LabelingResult:
    """Run the labeling iteration from ``W = A`` until the stopping rule fires."""
    A = np.asarray(A, dtype=float)
    graph = as_weight_graph(rho)
    _check_inputs(A, graph)
    n, K = A.shape
    simplex_util.check_epsilon(epsilon, K)
    stop = stop or StoppingRule()
    variant = Variant(variant)

    P = graph.matrix
    logA = np.log(A)
    state = LabelState(A.copy(), epsilon)
    converged = False

    def update(sl: slice, logW: np.ndarray) -> np.ndarray:
        logU = logW[sl] + P[sl] @ logW
        if variant is Variant.APSS:
            logU += logA[sl]
        V = np.exp(logU - logsumexp(logU, axis=1, keepdims=True))
        if variant is Variant.ADDITIVE:
            return simplex_util.additive_shift_rows(V, epsilon)
        return simplex_util.project_rows(V, epsilon)

    for r in range(1, stop.max_iterations + 1):
        with np.errstate(divide="ignore"):
            logW = np.log(state.W)
        W = np.vstack(util.map_row_blocks(lambda sl: update(sl, logW), n, threads))
        change = float(np.abs(W - state.W).max())
        state.W = W
        state.iteration = r
        entropy = simplex_util.average_entropy(W)
        state.entropy_trace.append(entropy)
        logging.debug(f"iteration {r}: entropy={entropy:.6e} change={change:.3e}")
        if entropy < stop.entropy_threshold:
            converged = True
            break
        if stop.stationary_tolerance is not None and change <= stop.stationary_tolerance:
            converged = True
            break

    deviation = float(simplex_util.vertex_deviation(state.W, epsilon).max())
    if converged:
        logging.info(
            f"Labeling converged after {state.iteration} iterations "
            f"(entropy {state.entropy_trace[-1]:.3e}, vertex deviation {deviation:.3e})"
        )
    else:
        logging.warning(
            f"Labeling stopped at max_iterations={stop.max_iterations} "
            f"(entropy {state.entropy_trace[-1]:.3e})"
        )
    return LabelingResult(state, assign_labels(state.W), converged, variant, deviation)


def run_labeling(
    D: np.ndarray,
    alpha,
    rho=None,
    epsilon: float = DEFAULT_EPSILON,
    stop: StoppingRule | None = None,
    variant: Variant = Variant.STANDARD,
    threads: int = 1,
) -> LabelingResult:
    """Initial assignment from distances, then ``iterate``; ``rho`` defaults to ``alpha``."""
    A = init_assignment(D, alpha)
    return iterate(A, alpha if rho is None else rho, epsilon, stop, variant, threads)


def _symmetric_graph(rho) -> WeightGraph:
    graph = as_weight_graph(rho)
    if not graph.symmetric:
        raise NonSymmetricError(
            f"weights must be symmetric (asymmetry {graph.asymmetry():.3g})"
        )
    return graph


def iterate_log_domain_eps0(A, rho, r_max: int = DEFAULT_LOG_ITERATIONS) -> LogDomainResult:
    """Exact epsilon = 0 iteration on log-assignments, ``w <- w + P w`` from ``w = log A``.

    ``v = 2^-r w`` is iterated instead (``v <- (v + P v) / 2``), which keeps the same argmax
    per pixel without overflow. ``label_trace[r]`` holds the labels after ``r`` iterations.
    """
    A = np.asarray(A, dtype=float)
    graph = _symmetric_graph(rho)
    _check_inputs(A, graph)
    P = graph.matrix
    a = np.log(A)
    v = a.copy()
    trace = np.empty((r_max + 1, A.shape[0]), dtype=int)
    trace[0] = assign_labels(v)
    for r in range(1, r_max + 1):
        v = 0.5 * (v + P @ v)
        trace[r] = assign_labels(v)
    return LogDomainResult(LogState(v, a, r_max), trace, trace[-1])


def iterate_apss_log_domain_eps0(
    A, rho, r_max: int = DEFAULT_LOG_ITERATIONS
) -> LogDomainResult:
    """Epsilon = 0 iteration with the data term, ``w <- a + (I + P) w``, scaled by ``2^-r``."""
    A = np.asarray(A, dtype=float)
    graph = _symmetric_graph(rho)
    _check_inputs(A, graph)
    P = graph.matrix
    a = np.log(A)
    v = a.copy()
    trace = np.empty((r_max + 1, A.shape[0]), dtype=int)
    trace[0] = assign_labels(v)
    for r in range(1, r_max + 1):
        v = np.ldexp(a, -r) + 0.5 * (v + P @ v)
        trace[r] = assign_labels(v)
    return LogDomainResult(LogState(v, a, r_max), trace, trace[-1])


def objective_F(W, rho) -> float:
    """``sum_i <log W_i, sum_j rho_ij log W_j>`` for symmetric weights."""
    W = W.W if isinstance(W, LabelState) else W
    logW = _log_positive(W, "assignment")
    graph = _symmetric_graph(rho)
    return float(np.sum(logW * (graph.matrix @ logW)))
