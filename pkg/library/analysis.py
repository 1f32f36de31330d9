"""Spectral prediction of the epsilon = 0 limit of the labeling iteration.

For symmetric ``P = Q diag(lambda) Q^T`` the log-assignments after ``r`` steps are
``w(r) = sum_s (1 + lambda_s)^r X_s`` with ``X_s = Q_s Q_s^T log A`` summed over the
eigenspace of group ``s``. Pixel ``i`` tends to vertex ``k`` exactly when, for every ``l != k``,
the first non-zero difference ``X_s[i, l] - X_s[i, k]`` over the growing groups is negative.
"""

import logging
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path

import numpy as np
from scipy.special import softmax

from library import simplex_util
from library.graph_util import (
    EIGEN_GROUP_TOL,
    EigenStructure,
    GridGeometry,
    NonSymmetricError,
    WeightGraph,
    as_weight_graph,
    build_local_uniform,
    eigendecompose,
)
from library.labeling import (
    StoppingRule,
    Variant,
    assign_labels,
    iterate,
    iterate_apss_log_domain_eps0,
    iterate_log_domain_eps0,
)

# Coefficients below this fraction of the largest one count as zero.
ZERO_TOLERANCE = 1e-9

# Coefficients within this factor of the zero tolerance make a verdict indeterminate.
AMBIGUITY_FACTOR = 10.0

# Relative margin for a strict maximum of the column log-products.
COLLAPSE_MARGIN = 1e-12


class AnalysisError(ValueError):
    """Raised when the spectral analysis cannot be carried out."""

    pass


class NotApplicableError(AnalysisError):
    """Raised when a variant's analysis does not apply to the given weights."""

    pass


class VerdictKind(StrEnum):
    VERTEX = "vertex"
    INTERIOR = "interior"
    INDETERMINATE = "indeterminate"


@dataclass
class PixelVerdict:
    """Predicted limit of one pixel; ``label`` is 1-based, ``decisive_s`` counts groups from 1."""

    pixel: int
    kind: VerdictKind
    label: int | None = None
    decisive_s: int | None = None
    limit: np.ndarray | None = None


@dataclass
class CollapseCheck:
    applicable: bool
    label: int | None
    log_products: np.ndarray
    reason: str = ""

    @property
    def products(self) -> np.ndarray:
        return np.exp(self.log_products)


@dataclass
class ConvergenceReport:
    eig: EigenStructure
    a_hat: np.ndarray
    verdicts: list[PixelVerdict]
    collapse: CollapseCheck
    variant: Variant
    zero_tolerance: float
    oracle_labels: np.ndarray | None = None

    def predicted_labels(self) -> np.ndarray:
        """1-based vertex labels, 0 where the limit is not a vertex."""
        return np.array([v.label if v.kind is VerdictKind.VERTEX else 0 for v in self.verdicts])

    def oracle_agreement(self) -> float | None:
        if self.oracle_labels is None:
            return None
        predicted = self.predicted_labels()
        decided = predicted > 0
        if not decided.any():
            return None
        return float(np.mean(predicted[decided] == self.oracle_labels[decided]))

    def to_text(self) -> str:
        eigenvalues = ", ".join(f"{g.value:.6g}x{g.multiplicity}" for g in self.eig.groups)
        lines = [
            f"variant: {self.variant}",
            f"eigenvalues: {eigenvalues}",
            f"positive groups: {self.eig.s_hat}",
            f"zero tolerance: {self.zero_tolerance:.3g}",
        ]
        if self.collapse.applicable:
            label = self.collapse.label if self.collapse.label is not None else "none"
            lines.append(f"global collapse label: {label}")
        else:
            lines.append(f"global collapse: not applicable ({self.collapse.reason})")
        kinds = [v.kind for v in self.verdicts]
        lines.append(
            "verdicts: "
            + ", ".join(f"{kind}={kinds.count(kind)}" for kind in VerdictKind)
        )
        lines.append("labels: " + " ".join(str(x) for x in self.predicted_labels()))
        if (agreement := self.oracle_agreement()) is not None:
            lines.append(f"oracle agreement: {agreement:.4f}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        lines = ["pixel,verdict,label,decisive_s"]
        for v in self.verdicts:
            label = "" if v.label is None else v.label
            s = "" if v.decisive_s is None else v.decisive_s
            lines.append(f"{v.pixel},{v.kind},{label},{s}")
        Path(path).write_text("\n".join(lines) + "\n")
        logging.info(f"Wrote verdicts: {path}")


def _prepare(A, P, eig: EigenStructure | None) -> tuple[np.ndarray, EigenStructure]:
    A = np.asarray(A, dtype=float)
    graph = as_weight_graph(P)
    if not graph.symmetric:
        raise NonSymmetricError(
            f"weights are not symmetric (asymmetry {graph.asymmetry():.3g})"
        )
    if A.ndim != 2 or A.shape[0] != graph.n:
        raise AnalysisError(f"assignment shape {A.shape} does not match {graph.n} pixels")
    if not np.all(A > 0):
        raise AnalysisError("initial assignment must be strictly positive")
    return A, eig if eig is not None else eigendecompose(graph)


def _group_terms(a_hat: np.ndarray, eig: EigenStructure, scale: np.ndarray | None = None):
    """``X_s = Q_s a_hat_s`` per eigenvalue group, each ``(n, K)``."""
    out = []
    for g in eig.groups:
        block = a_hat[g.columns]
        if scale is not None:
            block = block * scale[g.columns, None]
        out.append(eig.Q[:, g.columns] @ block)
    return out


def _check_invertible(eig: EigenStructure) -> np.ndarray:
    if np.any(np.abs(eig.eigenvalues) <= EIGEN_GROUP_TOL):
        raise NotApplicableError("weight matrix is singular; the data-term analysis needs P^-1")
    return 1.0 / eig.eigenvalues


def coefficients(A, P, i: int, l: int, k: int, eig: EigenStructure | None = None) -> np.ndarray:
    """``c_{l,k}(s) = sum_{j in group s} q_ij (a_hat_jl - a_hat_jk)`` for the positive groups.

    ``i``, ``l`` and ``k`` are 0-based.
    """
    A, eig = _prepare(A, P, eig)
    a_hat = eig.Q.T @ np.log(A)
    diff = a_hat[:, l] - a_hat[:, k]
    groups = eig.groups[: eig.s_hat]
    return np.array([np.dot(eig.Q[i, g.columns], diff[g.columns]) for g in groups])


def coefficients_apss(
    A, P, i: int, l: int, k: int, eig: EigenStructure | None = None
) -> np.ndarray:
    """Data-term coefficients ``sum_{j in group s} q_ij lambda_j^-1 (a_hat_jl - a_hat_jk)``."""
    A, eig = _prepare(A, P, eig)
    inverse = _check_invertible(eig)
    a_hat = eig.Q.T @ np.log(A)
    diff = (a_hat[:, l] - a_hat[:, k]) * inverse
    groups = eig.groups[: eig.s_hat]
    return np.array([np.dot(eig.Q[i, g.columns], diff[g.columns]) for g in groups])


def _first_nonzero(seq: np.ndarray, tol: float) -> tuple[int | None, bool]:
    """Index of the first entry above ``tol`` and whether an ambiguous entry came first."""
    ambiguous = False
    for s, c in enumerate(seq):
        if tol / AMBIGUITY_FACTOR < abs(c) <= tol * AMBIGUITY_FACTOR:
            ambiguous = True
        if abs(c) > tol:
            return s, ambiguous
    return None, ambiguous


def _verdict(
    i: int, terms: list[np.ndarray], s_hat: int, constant: np.ndarray, tol: float
) -> PixelVerdict:
    """Apply the vertex criterion to pixel ``i`` given the per-group terms."""
    K = terms[0].shape[1]
    growing = np.array([t[i] for t in terms[:s_hat]]).reshape(s_hat, K)
    survivors = []
    ambiguous_any = False
    for k in range(K):
        beaten = False
        wins_all = True
        ambiguous_k = False
        decisive = 0
        for l in range(K):
            if l == k:
                continue
            s, ambiguous = _first_nonzero(growing[:, l] - growing[:, k], tol)
            ambiguous_k |= ambiguous
            if s is None:
                wins_all = False
            elif growing[s, l] - growing[s, k] > 0:
                beaten = True
                wins_all = False
            else:
                decisive = max(decisive, s + 1)
        ambiguous_any |= ambiguous_k
        if wins_all:
            if ambiguous_k:
                return PixelVerdict(i, VerdictKind.INDETERMINATE)
            limit = simplex_util.vertex(k, K, 0.0)
            return PixelVerdict(i, VerdictKind.VERTEX, k + 1, decisive, limit)
        if not beaten:
            survivors.append(k)
    if ambiguous_any or not survivors:
        return PixelVerdict(i, VerdictKind.INDETERMINATE)
    limit = np.zeros(K)
    limit[survivors] = softmax(constant[i, survivors])
    return PixelVerdict(i, VerdictKind.INTERIOR, limit=limit)


def _instance_tolerance(terms: list[np.ndarray], s_hat: int) -> float:
    spread = [float((t.max(axis=1) - t.min(axis=1)).max()) for t in terms[:s_hat]]
    return ZERO_TOLERANCE * max(spread, default=0.0)


def _standard_terms(A, eig):
    a_hat = eig.Q.T @ np.log(A)
    terms = _group_terms(a_hat, eig)
    # Groups with lambda = 0 neither grow nor decay; negative ones decay.
    constant = sum(
        (t for t, g in zip(terms, eig.groups) if abs(g.value) <= EIGEN_GROUP_TOL),
        np.zeros_like(A),
    )
    return a_hat, terms, constant


def _apss_terms(A, eig):
    inverse = _check_invertible(eig)
    a_hat = eig.Q.T @ np.log(A)
    terms = _group_terms(a_hat, eig, inverse)
    # (1 + lambda)^(r+1) - 1 tends to -1 for the decaying groups.
    constant = -sum(terms[eig.s_hat :], np.zeros_like(A))
    return a_hat, terms, constant


def predict_limit(
    A, P, i: int, eig: EigenStructure | None = None, variant: Variant = Variant.STANDARD
) -> PixelVerdict:
    """Predicted epsilon = 0 limit of pixel ``i`` (0-based)."""
    A, eig = _prepare(A, P, eig)
    terms_fn = _apss_terms if Variant(variant) is Variant.APSS else _standard_terms
    _, terms, constant = terms_fn(A, eig)
    return _verdict(i, terms, eig.s_hat, constant, _instance_tolerance(terms, eig.s_hat))


def predict_limit_apss(A, P, i: int, eig: EigenStructure | None = None) -> PixelVerdict:
    return predict_limit(A, P, i, eig, Variant.APSS)


def check_global_collapse(A, P, eig: EigenStructure | None = None) -> CollapseCheck:
    """Single eigenvalue 1 and all eigenvalues above -1: every pixel tends to the label whose
    column of ``A`` has the strictly largest product."""
    A, eig = _prepare(A, P, eig)
    log_products = np.log(A).sum(axis=0)
    top = eig.groups[0]
    if abs(top.value - 1.0) > EIGEN_GROUP_TOL or top.multiplicity != 1:
        return CollapseCheck(False, None, log_products, "eigenvalue 1 is not simple")
    if eig.eigenvalues[-1] <= -1.0 + EIGEN_GROUP_TOL:
        return CollapseCheck(False, None, log_products, "eigenvalue -1 present")
    order = np.argsort(log_products)[::-1]
    best, runner_up = log_products[order[0]], log_products[order[1]]
    if best - runner_up <= COLLAPSE_MARGIN * max(1.0, abs(best)):
        return CollapseCheck(True, None, log_products, "largest column product is not unique")
    return CollapseCheck(True, int(order[0]) + 1, log_products)


def analyze(
    A,
    P,
    variant: Variant = Variant.STANDARD,
    eig: EigenStructure | None = None,
    oracle_iterations: int | None = None,
) -> ConvergenceReport:
    """Verdicts for every pixel plus the global collapse check."""
    A, eig = _prepare(A, P, eig)
    variant = Variant(variant)
    if variant is Variant.ADDITIVE:
        raise NotApplicableError("the additive variant has no spectral prediction")
    terms_fn = _apss_terms if variant is Variant.APSS else _standard_terms
    a_hat, terms, constant = terms_fn(A, eig)
    tol = _instance_tolerance(terms, eig.s_hat)
    verdicts = [_verdict(i, terms, eig.s_hat, constant, tol) for i in range(A.shape[0])]
    collapse = check_global_collapse(A, P, eig)
    report = ConvergenceReport(eig, a_hat, verdicts, collapse, variant, tol)
    if oracle_iterations:
        oracle = (
            iterate_apss_log_domain_eps0 if variant is Variant.APSS else iterate_log_domain_eps0
        )
        report.oracle_labels = oracle(A, P, oracle_iterations).labels
    return report


def growth_samples(
    A, P, i: int, l: int, k: int, r_values, eig: EigenStructure | None = None
) -> np.ndarray:
    """``w_il(r) - w_ik(r)`` for the epsilon = 0 iteration, from the spectral form."""
    A, eig = _prepare(A, P, eig)
    _, terms, _ = _standard_terms(A, eig)
    diffs = np.array([t[i, l] - t[i, k] for t in terms])
    mu = np.array([1.0 + g.value for g in eig.groups])
    return np.array([float(np.sum(diffs * mu**r)) for r in r_values])


# Ten-pixel signal: rows 0-1 favor label 1, rows 2-6 label 3, rows 7-9 label 2.
SIGNAL_ROWS = (
    [(0.8, 0.1, 0.1)] * 2 + [(0.2, 0.2, 0.6)] * 5 + [(0.25, 0.5, 0.25)] * 3
)

SIGNAL_EXPECTED_LABELS: dict[float, tuple[int, ...]] = {
    1e-1: (1, 1, 3, 3, 3, 3, 3, 2, 2, 2),
    1e-10: (1, 1, 3, 3, 3, 3, 3, 2, 2, 2),
    1e-11: (1, 1, 1, 3, 3, 3, 3, 2, 2, 2),
    1e-81: (1, 1, 1, 3, 3, 3, 3, 3, 2, 2),
    0.0: (3,) * 10,
}

# Iterations after which the epsilon = 0 run first labels every pixel 3.
SIGNAL_COLLAPSE_ITERATION = 95


def signal_example_assignment() -> np.ndarray:
    return np.array(SIGNAL_ROWS, dtype=float)


def signal_example_graph() -> WeightGraph:
    """Three-point uniform window on a 1 x 10 grid with mirrored ends."""
    return build_local_uniform(GridGeometry(1, 10), 3)


@dataclass
class SignalRun:
    epsilon: float
    labels: tuple[int, ...]
    expected: tuple[int, ...]
    iterations: int
    converged: bool
    vertex_deviation: float

    @property
    def matches(self) -> bool:
        return self.labels == self.expected


@dataclass
class SignalExampleReport:
    runs: list[SignalRun]
    collapse: CollapseCheck
    first_collapse_iteration: int | None
    mismatches: list[str] = field(default_factory=list)

    @property
    def matches(self) -> bool:
        return not self.mismatches

    def to_text(self) -> str:
        lines = ["epsilon      labels               iterations  converged"]
        for run in self.runs:
            labels = " ".join(str(x) for x in run.labels)
            iterations = "-" if run.epsilon == 0 else str(run.iterations)
            lines.append(f"{run.epsilon:<12g} {labels:<20} {iterations:>10}  {run.converged}")
        products = " ".join(f"{p:.6g}" for p in self.collapse.products)
        lines.append(f"column products: {products}")
        lines.append(f"first all-3 iteration at epsilon=0: {self.first_collapse_iteration}")
        lines += [f"MISMATCH: {m}" for m in self.mismatches]
        return "\n".join(lines) + "\n"


def reproduce_signal_example(
    r_max: int = 500, stop: StoppingRule | None = None
) -> SignalExampleReport:
    """Run the ten-pixel signal for each tabulated epsilon and compare with known labels."""
    A = signal_example_assignment()
    graph = signal_example_graph()
    stop = stop or StoppingRule(
        entropy_threshold=1e-300, max_iterations=5000, stationary_tolerance=1e-14
    )
    runs, mismatches = [], []
    first = None
    for epsilon, expected in SIGNAL_EXPECTED_LABELS.items():
        if epsilon == 0.0:
            oracle = iterate_log_domain_eps0(A, graph, r_max)
            labels = tuple(int(x) for x in oracle.labels)
            first = oracle.first_uniform_iteration(3)
            runs.append(SignalRun(0.0, labels, expected, r_max, True, float("nan")))
        else:
            result = iterate(A, graph, epsilon, stop)
            labels = tuple(int(x) for x in assign_labels(result.state.W))
            runs.append(
                SignalRun(
                    epsilon,
                    labels,
                    expected,
                    result.iterations,
                    result.converged,
                    result.vertex_deviation,
                )
            )
        if labels != expected:
            mismatches.append(f"epsilon={epsilon:g}: got {labels}, expected {expected}")
    collapse = check_global_collapse(A, graph)
    if collapse.label != 3:
        mismatches.append(f"collapse label {collapse.label}, expected 3")
    if first != SIGNAL_COLLAPSE_ITERATION:
        mismatches.append(
            f"epsilon=0 collapse at iteration {first}, expected {SIGNAL_COLLAPSE_ITERATION}"
        )
    for m in mismatches:
        logging.warning(m)
    return SignalExampleReport(runs, collapse, first, mismatches)
