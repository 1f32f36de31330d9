"""Pixel grids, row-stochastic weight graphs and their spectral structure."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import csgraph

from library import util
from library.metric_util import MetricSpace

if TYPE_CHECKING:
    from library.labeling import FeatureImage

# Row sums of a stochastic matrix must equal 1 within this tolerance.
ROW_SUM_TOL = 1e-12

# Largest |rho_ij - rho_ji| for a graph to count as symmetric.
SYMMETRY_TOL = 1e-12

# Eigenvalues closer than this are grouped into one eigenspace.
EIGEN_GROUP_TOL = 1e-9

# Weights below this are dropped when a graph is written to disk.
DUMP_MIN_WEIGHT = 1e-16


class GraphError(ValueError):
    """Raised for invalid grids, windows or weight matrices."""

    pass


class NonSymmetricError(GraphError):
    """Raised when an operation needs symmetric weights."""

    pass


@dataclass(frozen=True)
class GridGeometry:
    """An ``height x width`` pixel grid with row-major linear indexing."""

    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise GraphError(f"grid must be at least 1x1, got {self.height}x{self.width}")

    @property
    def n(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def index(self, row, col):
        return np.asarray(row) * self.width + np.asarray(col)

    def coords(self, i) -> tuple:
        return np.divmod(i, self.width)


def mirror_index(idx, size: int) -> np.ndarray:
    """Reflect indices into ``[0, size)`` with the edge sample repeated.

    ``-1 -> 0``, ``size -> size - 1``; applied periodically for windows larger than the grid.
    """
    m = np.mod(np.asarray(idx), 2 * size)
    return np.where(m < size, m, 2 * size - 1 - m)


@dataclass
class WeightGraph:
    """Row-stochastic sparse weights ``rho`` on the pixels of a grid."""

    matrix: sparse.csr_matrix
    symmetric: bool | None = None

    def __post_init__(self):
        m = sparse.csr_matrix(self.matrix, dtype=float, copy=True)
        if m.shape[0] != m.shape[1]:
            raise GraphError(f"weight matrix must be square, got {m.shape}")
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        if m.nnz and m.data.min() < 0:
            raise GraphError("weights must be non-negative")
        sums = np.asarray(m.sum(axis=1)).ravel()
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise GraphError(f"row {bad} sums to {sums[bad]:.17g}, not 1")
        self.matrix = m
        measured = self.asymmetry() <= SYMMETRY_TOL
        if self.symmetric is None:
            self.symmetric = measured
        elif self.symmetric and not measured:
            raise GraphError(f"graph flagged symmetric but asymmetry is {self.asymmetry():.3g}")

    @classmethod
    def from_dense(cls, P, symmetric: bool | None = None) -> "WeightGraph":
        return cls(sparse.csr_matrix(np.asarray(P, dtype=float)), symmetric)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def rows(self, i: int) -> list[tuple[int, float]]:
        start, end = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return [
            (int(j), float(w))
            for j, w in zip(self.matrix.indices[start:end], self.matrix.data[start:end])
        ]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def asymmetry(self) -> float:
        diff = self.matrix - self.matrix.T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def has_positive_diagonal(self) -> bool:
        return bool(np.all(self.matrix.diagonal() > 0))

    def is_irreducible(self) -> bool:
        count, _ = csgraph.connected_components(self.matrix, directed=True, connection="strong")
        return count == 1


def as_weight_graph(P) -> WeightGraph:
    if isinstance(P, WeightGraph):
        return P
    if sparse.issparse(P):
        return WeightGraph(P)
    return WeightGraph.from_dense(P)


def _window_graph(geom: GridGeometry, kernel: np.ndarray) -> WeightGraph:
    """Convolution-style graph: each pixel averages its mirrored window with ``kernel``."""
    s = kernel.shape[0]
    half = s // 2
    rows, cols = geom.coords(np.arange(geom.n))
    src, dst, data = [], [], []
    for dr in range(-half, half + 1):
        for dc in range(-half, half + 1):
            w = kernel[dr + half, dc + half]
            if w <= 0:
                continue
            nbr = geom.index(
                mirror_index(rows + dr, geom.height), mirror_index(cols + dc, geom.width)
            )
            src.append(np.arange(geom.n))
            dst.append(nbr)
            data.append(np.full(geom.n, w))
    entries = (np.concatenate(data), (np.concatenate(src), np.concatenate(dst)))
    m = sparse.coo_matrix(entries, shape=(geom.n, geom.n)).tocsr()
    # The mirrored window is symmetric mathematically; average out summation-order rounding.
    return WeightGraph(0.5 * (m + m.T), symmetric=True)


def _check_window(s: int, geom: GridGeometry) -> None:
    if s < 1 or s % 2 == 0:
        raise GraphError(f"window size must be odd and positive, got {s}")
    if s // 2 > max(geom.height, geom.width):
        raise GraphError(f"window {s}x{s} is too large for a {geom.height}x{geom.width} grid")


def build_local_uniform(geom: GridGeometry, s: int) -> WeightGraph:
    """Uniform ``1/s^2`` weights over the mirrored ``s x s`` window."""
    _check_window(s, geom)
    return _window_graph(geom, np.full((s, s), 1.0 / (s * s)))


def build_local_gaussian(geom: GridGeometry, s: int, sigma: float) -> WeightGraph:
    """Gaussian window weights, truncated to ``|offset| <= 3 sigma`` per axis and normalized.

    The support is the square ``[-3 sigma, 3 sigma]^2`` clipped to the window, not a disc.
    """
    _check_window(s, geom)
    if sigma <= 0:
        raise GraphError(f"sigma must be positive, got {sigma}")
    half = s // 2
    offsets = np.arange(-half, half + 1)
    kernel = np.exp(-(offsets[:, None] ** 2 + offsets[None, :] ** 2) / (2.0 * sigma**2))
    outside = np.abs(offsets) > 3.0 * sigma
    kernel[outside, :] = 0.0
    kernel[:, outside] = 0.0
    return _window_graph(geom, kernel / kernel.sum())


@dataclass(frozen=True)
class NonlocalParams:
    """Patch radius, neighbor count, search window and the two Gaussian widths."""

    s_p: int = 3
    s_nl: int = 7
    t: int = 11
    sigma_p: float = 1.0
    sigma_w: float = 0.2

    def __post_init__(self):
        if self.s_p < 0:
            raise GraphError(f"patch radius must be >= 0, got {self.s_p}")
        if self.t < 1 or self.t % 2 == 0:
            raise GraphError(f"search window must be odd and positive, got {self.t}")
        if self.s_nl < 1:
            raise GraphError(f"need at least one neighbor, got s_nl={self.s_nl}")
        if self.s_nl > self.t * self.t:
            raise GraphError(
                f"search window {self.t}x{self.t} holds fewer than {self.s_nl} pixels"
            )
        if self.sigma_p <= 0 or self.sigma_w <= 0:
            raise GraphError("sigma_p and sigma_w must be positive")


NONLOCAL_PRESETS: dict[str, NonlocalParams] = {
    "color": NonlocalParams(3, 7, 11, 1.0, 0.2),
    "color-19": NonlocalParams(3, 19, 11, 1.0, 0.2),
    "color-37": NonlocalParams(3, 37, 11, 1.0, 0.2),
    "tensor": NonlocalParams(3, 9, 15, 3.0, 0.2),
}


def patch_kernel(s_p: int, sigma_p: float) -> np.ndarray:
    """Normalized Gaussian over the ``(2 s_p + 1)^2`` patch offsets."""
    offsets = np.arange(-s_p, s_p + 1)
    kernel = np.exp(-(offsets[:, None] ** 2 + offsets[None, :] ** 2) / (2.0 * sigma_p**2))
    return kernel / kernel.sum()


def _search_window(center: np.ndarray, size: int, t: int) -> np.ndarray:
    """Start of a length-``t`` window around ``center``, shifted to stay inside the grid."""
    if t >= size:
        return np.zeros_like(center)
    return np.clip(center - t // 2, 0, size - t)


def search_candidates(geom: GridGeometry, t: int) -> np.ndarray:
    """Candidate neighbors of every pixel, ``(n, c)``, in increasing linear index per row."""
    rows, cols = geom.coords(np.arange(geom.n))
    th, tw = min(t, geom.height), min(t, geom.width)
    r0 = _search_window(rows, geom.height, t)
    c0 = _search_window(cols, geom.width, t)
    dr, dc = np.meshgrid(np.arange(th), np.arange(tw), indexing="ij")
    return geom.index(r0[:, None] + dr.ravel(), c0[:, None] + dc.ravel())


def _pair_distances(image: "FeatureImage", space: MetricSpace, features, a, b) -> np.ndarray:
    d = space.paired_distances(space.take(features, a), space.take(features, b))
    return np.where(image.valid_mask[a] & image.valid_mask[b], d, 0.0)


def patch_distance(
    image: "FeatureImage", space: MetricSpace, i: int, j: int, s_p: int, sigma_p: float
) -> float:
    """Gaussian-weighted distance between the mirrored patches around pixels ``i`` and ``j``."""
    geom = image.geometry
    kernel = patch_kernel(s_p, sigma_p)
    features = _filled(image, space)
    ri, ci = geom.coords(i)
    rj, cj = geom.coords(j)
    total = 0.0
    for l1 in range(-s_p, s_p + 1):
        for l2 in range(-s_p, s_p + 1):
            a = geom.index(mirror_index(ri + l1, geom.height), mirror_index(ci + l2, geom.width))
            b = geom.index(mirror_index(rj + l1, geom.height), mirror_index(cj + l2, geom.width))
            d = _pair_distances(image, space, features, np.atleast_1d(a), np.atleast_1d(b))[0]
            total += kernel[l1 + s_p, l2 + s_p] * d
    return float(total)


def _filled(image: "FeatureImage", space: MetricSpace):
    """Features with missing pixels replaced by a valid one, so metrics stay defined."""
    mask = image.valid_mask
    if mask.all():
        return image.features
    if not mask.any():
        raise GraphError("image has no valid pixels")
    return space.fill(image.features, mask, int(np.argmax(mask)))


def nonlocal_candidates(
    image: "FeatureImage", space: MetricSpace, params: NonlocalParams, threads: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Search-window candidates and their patch distances, both ``(n, c)``."""
    geom = image.geometry
    candidates = search_candidates(geom, params.t)
    if candidates.shape[1] < params.s_nl:
        raise GraphError(
            f"search window holds {candidates.shape[1]} pixels, fewer than s_nl={params.s_nl}"
        )
    kernel = patch_kernel(params.s_p, params.sigma_p)
    features = _filled(image, space)
    rows, cols = geom.coords(np.arange(geom.n))
    cand_rows, cand_cols = geom.coords(candidates)

    def block(sl: slice) -> np.ndarray:
        out = np.zeros((sl.stop - sl.start, candidates.shape[1]))
        for l1 in range(-params.s_p, params.s_p + 1):
            pr = mirror_index(rows[sl] + l1, geom.height)
            cr = mirror_index(cand_rows[sl] + l1, geom.height)
            for l2 in range(-params.s_p, params.s_p + 1):
                a = geom.index(pr, mirror_index(cols[sl] + l2, geom.width))
                b = geom.index(cr, mirror_index(cand_cols[sl] + l2, geom.width))
                a = np.broadcast_to(a[:, None], b.shape)
                d = _pair_distances(image, space, features, a.ravel(), b.ravel())
                out += kernel[l1 + params.s_p, l2 + params.s_p] * d.reshape(b.shape)
        return out

    distances = np.vstack(util.map_row_blocks(block, geom.n, threads))
    return candidates, distances


def build_nonlocal(
    image: "FeatureImage", space: MetricSpace, params: NonlocalParams, threads: int = 1
) -> WeightGraph:
    """Patch-similarity graph over the ``s_nl`` most similar pixels of each search window.

    Ties in patch distance keep the lower linear index. The neighbor relation is closed under
    reversal and each row is normalized, so the result is generally not symmetric.
    """
    candidates, distances = nonlocal_candidates(image, space, params, threads)
    n = image.geometry.n
    order = np.argsort(distances, axis=1, kind="stable")[:, : params.s_nl]
    src = np.repeat(np.arange(n), params.s_nl)
    dst = np.take_along_axis(candidates, order, axis=1).ravel()
    dist = np.take_along_axis(distances, order, axis=1).ravel()

    # Union of both directions; the patch distance is symmetric in its two pixels.
    keys = np.concatenate([src * n + dst, dst * n + src])
    values = np.concatenate([dist, dist])
    keys, first = np.unique(keys, return_index=True)
    values = values[first]
    src, dst = np.divmod(keys, n)

    # Row-wise shift before exponentiating; row normalization cancels it.
    row_min = np.full(n, np.inf)
    np.minimum.at(row_min, src, values)
    weights = np.exp(-(values - row_min[src]) / (2.0 * params.sigma_w**2))
    keep = weights > 0
    m = sparse.csr_matrix((weights[keep], (src[keep], dst[keep])), shape=(n, n))
    sums = np.asarray(m.sum(axis=1)).ravel()
    m = sparse.diags(1.0 / sums) @ m
    logging.info(f"Built nonlocal graph: n={n} nnz={m.nnz} s_nl={params.s_nl} t={params.t}")
    return WeightGraph(m)


def symmetrize(graph: WeightGraph) -> tuple[WeightGraph, float]:
    """``(P + P^T) / 2`` renormalized by rows; also returns the largest row-sum correction."""
    m = 0.5 * (graph.matrix + graph.matrix.T)
    sums = np.asarray(m.sum(axis=1)).ravel()
    delta = float(np.abs(sums - 1.0).max())
    m = sparse.diags(1.0 / sums) @ m
    if delta > 0:
        logging.warning(f"Symmetrized graph renormalized by up to {delta:.3g}")
    return WeightGraph(m), delta


class EigenGroup(NamedTuple):
    value: float
    start: int
    multiplicity: int

    @property
    def columns(self) -> slice:
        return slice(self.start, self.start + self.multiplicity)


@dataclass
class EigenStructure:
    """``P = Q diag(eigenvalues) Q^T`` with eigenvalues descending and grouped."""

    Q: np.ndarray
    eigenvalues: np.ndarray
    groups: list[EigenGroup]

    @property
    def s_hat(self) -> int:
        """Number of leading groups with a positive eigenvalue."""
        return sum(1 for g in self.groups if g.value > EIGEN_GROUP_TOL)

    def reconstruct(self) -> np.ndarray:
        return (self.Q * self.eigenvalues) @ self.Q.T


def group_eigenvalues(eigenvalues: np.ndarray, tol: float = EIGEN_GROUP_TOL) -> list[EigenGroup]:
    groups: list[EigenGroup] = []
    start = 0
    for j in range(1, len(eigenvalues) + 1):
        if j == len(eigenvalues) or abs(eigenvalues[j] - eigenvalues[start]) > tol:
            block = eigenvalues[start:j]
            groups.append(EigenGroup(float(block.mean()), start, j - start))
            start = j
    return groups


def eigendecompose(P) -> EigenStructure:
    """Orthonormal eigendecomposition of a symmetric weight matrix."""
    graph = as_weight_graph(P)
    if not graph.symmetric:
        raise NonSymmetricError(
            f"weights are not symmetric (asymmetry {graph.asymmetry():.3g})"
        )
    values, vectors = linalg.eigh(graph.toarray())
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    if vectors[:, 0].sum() < 0:
        vectors[:, 0] *= -1.0
    return EigenStructure(vectors, values, group_eigenvalues(values))


class PowerLimit(NamedTuple):
    converged: bool
    deviation: float


def power_limit_check(P, r: int, tol: float = 1e-8) -> PowerLimit:
    """Compare ``P^r`` with the uniform matrix ``1/n``."""
    dense = as_weight_graph(P).toarray()
    power = np.linalg.matrix_power(dense, r)
    deviation = float(np.abs(power - 1.0 / dense.shape[0]).max())
    return PowerLimit(deviation <= tol, deviation)


def dump_graph(graph: WeightGraph, path: str | Path) -> None:
    """Write ``n nnz`` then one ``i j w`` line per weight, 17 significant digits."""
    coo = graph.matrix.tocoo()
    keep = coo.data >= DUMP_MIN_WEIGHT
    lines = [f"{graph.n} {int(keep.sum())}"]
    lines += [
        f"{i} {j} {w:.17g}" for i, j, w in zip(coo.row[keep], coo.col[keep], coo.data[keep])
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path: str | Path) -> WeightGraph:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise GraphError(f"{path}: empty graph file")
    try:
        n = int(lines[0].split()[0])
        triplets = [ln.split() for ln in lines[1:]]
        rows = np.array([int(t[0]) for t in triplets], dtype=int)
        cols = np.array([int(t[1]) for t in triplets], dtype=int)
        data = np.array([float(t[2]) for t in triplets])
    except (ValueError, IndexError) as e:
        raise GraphError(f"{path}: malformed graph file ({e})") from e
    if len(rows) and (rows.max() >= n or cols.max() >= n or min(rows.min(), cols.min()) < 0):
        raise GraphError(f"{path}: index outside 0..{n - 1}")
    return WeightGraph(sparse.csr_matrix((data, (rows, cols)), shape=(n, n)))
