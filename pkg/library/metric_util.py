"""Feature metric spaces: Euclidean, SPD, rotations modulo symmetry, products.

Features are stored as stacked numpy arrays, one leading row per pixel:

- euclidean: ``(n, d)``
- spd: ``(n, r, r)``
- rotation: ``(n, 4)`` unit quaternions ``(w, x, y, z)``
- multiphase: ``(n, 5)`` quaternion plus phase index in the last column
- product: tuple of component arrays
"""

import logging
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path

import numpy as np

# Symmetry of SPD input matrices, relative to their largest entry.
SPD_SYMMETRY_TOL = 1e-12

# Unit norm tolerance for quaternion features.
QUATERNION_NORM_TOL = 1e-12

# Unit norm tolerance for quaternions read from a symmetry file (renormalized afterwards).
SYMMETRY_FILE_NORM_TOL = 1e-8

# Default distance between orientations of different phases.
DEFAULT_TAU_PHASE = 1.0


class MetricError(ValueError):
    """Raised when a feature lies outside the domain of its metric."""

    pass


class MetricKind(StrEnum):
    EUCLIDEAN = "euclidean"
    SPD = "spd"
    ROTATION_QUOTIENT = "rotation"
    MULTIPHASE_ROTATION = "multiphase"
    PRODUCT = "product"


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of quaternion arrays ``(..., 4)``, broadcasting leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2, a3 = np.moveaxis(a, -1, 0)
    b0, b1, b2, b3 = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ],
        axis=-1,
    )


def quat_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angle ``arccos(|<a, b>|)`` between unit quaternions, sign ignored.

    Evaluated as ``2 atan2(min(|a-b|, |a+b|), max(|a-b|, |a+b|))``, which equals the
    clamped arccos but stays accurate near zero.
    """
    minus = np.linalg.norm(a - b, axis=-1)
    plus = np.linalg.norm(a + b, axis=-1)
    return 2.0 * np.arctan2(np.minimum(minus, plus), np.maximum(minus, plus))


@dataclass(frozen=True)
class SymmetryGroup:
    """Finite subgroup of unit quaternions acting on orientations from the right."""

    name: str
    elements: np.ndarray = field(repr=False)

    def __post_init__(self):
        elements = np.atleast_2d(np.asarray(self.elements, dtype=float))
        if elements.ndim != 2 or elements.shape[1] != 4 or len(elements) == 0:
            raise MetricError(f"symmetry group {self.name} needs a non-empty (m, 4) array")
        object.__setattr__(self, "elements", elements)

    @property
    def order(self) -> int:
        return len(self.elements)

    def is_closed(self, tol: float = 1e-9) -> bool:
        """True when every product of two elements is (up to sign) an element."""
        products = quat_multiply(self.elements[:, None, :], self.elements[None, :, :])
        angles = quat_angle(products[:, :, None, :], self.elements[None, None, :, :])
        return bool(np.all(angles.min(axis=2) <= tol))


def _axis_rotations(axis: tuple[float, float, float], fold: int) -> list[list[float]]:
    ax = np.asarray(axis, dtype=float)
    out = []
    for k in range(fold):
        half = np.pi * k / fold
        out.append([np.cos(half), *(np.sin(half) * ax)])
    return out


SQ3 = np.sqrt(3.0) / 2.0

# Hexagonal (622) point group as quaternions (w, x, y, z).
_HEXAGONAL = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [SQ3, 0.0, 0.0, 0.5],
    [0.5, 0.0, 0.0, SQ3],
    [SQ3, 0.0, 0.0, -0.5],
    [0.5, 0.0, 0.0, -SQ3],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, SQ3, 0.5, 0.0],
    [0.0, 0.5, SQ3, 0.0],
    [0.0, SQ3, -0.5, 0.0],
    [0.0, 0.5, -SQ3, 0.0],
]

BUILTIN_GROUPS: dict[str, SymmetryGroup] = {
    "trivial": SymmetryGroup("trivial", np.array([[1.0, 0.0, 0.0, 0.0]])),
    "c2": SymmetryGroup("c2", np.array(_axis_rotations((0.0, 0.0, 1.0), 2))),
    "c3": SymmetryGroup("c3", np.array(_axis_rotations((0.0, 0.0, 1.0), 3))),
    "hexagonal": SymmetryGroup("hexagonal", np.array(_HEXAGONAL)),
}


def load_symmetry_group(path: str | Path) -> SymmetryGroup:
    """Read a symmetry group file: one quaternion ``w x y z`` per line.

    Blank lines and ``#`` comments are skipped. Each quaternion must have unit norm within
    ``SYMMETRY_FILE_NORM_TOL`` and is renormalized.
    """
    path = Path(path)
    rows = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values = [float(v) for v in line.replace(",", " ").split()]
        except ValueError as e:
            raise MetricError(f"{path}:{line_no}: not a number ({e})") from e
        if len(values) != 4:
            raise MetricError(f"{path}:{line_no}: expected 4 values, got {len(values)}")
        q = np.asarray(values)
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > SYMMETRY_FILE_NORM_TOL:
            raise MetricError(f"{path}:{line_no}: quaternion norm {norm:.12g} is not 1")
        rows.append(q / norm)
    if not rows:
        raise MetricError(f"{path}: no symmetry elements")
    group = SymmetryGroup(path.stem, np.array(rows))
    if not group.is_closed():
        logging.warning(f"Symmetry group {path} is not closed under multiplication")
    return group


def resolve_group(name: str) -> SymmetryGroup:
    """Look up a built-in group by name, otherwise read it from a file."""
    if name in BUILTIN_GROUPS:
        return BUILTIN_GROUPS[name]
    if Path(name).is_file():
        return load_symmetry_group(name)
    raise MetricError(f"unknown symmetry group: {name}")


@dataclass(frozen=True)
class SpdPoint:
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", np.asarray(self.entries, dtype=float))
        _check_spd(self.entries[None])


@dataclass(frozen=True)
class RotationPoint:
    q: np.ndarray
    phase: int = 0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (4,):
            raise MetricError(f"rotation needs a 4-vector, got shape {q.shape}")
        if abs(np.linalg.norm(q) - 1.0) > QUATERNION_NORM_TOL:
            raise MetricError(f"quaternion norm {np.linalg.norm(q):.15g} is not 1")
        object.__setattr__(self, "q", q)


def _check_spd(mats: np.ndarray) -> None:
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise MetricError(f"SPD features need shape (n, r, r), got {mats.shape}")
    scale = np.maximum(1.0, np.abs(mats).max(axis=(1, 2)))
    asym = np.abs(mats - mats.transpose(0, 2, 1)).max(axis=(1, 2))
    if np.any(asym > SPD_SYMMETRY_TOL * scale):
        raise MetricError(f"matrix {int(np.argmax(asym / scale))} is not symmetric")
    smallest = np.linalg.eigvalsh(mats)[:, 0]
    if np.any(~(smallest > 0)):
        raise MetricError(f"matrix {int(np.argmin(smallest))} is not positive definite")


def _check_unit(quats: np.ndarray) -> None:
    norms = np.linalg.norm(quats, axis=-1)
    bad = np.abs(norms - 1.0) > QUATERNION_NORM_TOL
    if np.any(bad):
        raise MetricError(f"quaternion {int(np.argmax(bad))} is not a unit quaternion")


def _euclidean_paired(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] != b.shape[-1]:
        raise MetricError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return np.linalg.norm(a - b, axis=-1)


def _spd_paired(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine-invariant distance ``|Log(a^-1/2 b a^-1/2)|_F`` for stacks of matrices."""
    if a.shape[-2:] != b.shape[-2:]:
        raise MetricError(f"matrix size mismatch: {a.shape[-2:]} vs {b.shape[-2:]}")
    vals, vecs = np.linalg.eigh(a)
    if np.any(~(vals > 0)):
        raise MetricError("matrix is not positive definite")
    inv_sqrt = (vecs / np.sqrt(vals)[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    congruent = inv_sqrt @ b @ inv_sqrt
    congruent = 0.5 * (congruent + np.swapaxes(congruent, -1, -2))
    eig = np.linalg.eigvalsh(congruent)
    if np.any(~(eig > 0)):
        raise MetricError("matrix is not positive definite")
    return np.sqrt(np.sum(np.log(eig) ** 2, axis=-1))


def _rotation_paired(a: np.ndarray, b: np.ndarray, group: SymmetryGroup) -> np.ndarray:
    """Single-sided quotient distance ``min_s arccos |<a s, b>|``."""
    rotated = quat_multiply(a[..., None, :], group.elements)
    return quat_angle(rotated, b[..., None, :]).min(axis=-1)


def _multiphase_paired(
    a: np.ndarray, b: np.ndarray, groups: tuple[SymmetryGroup, ...], tau: float
) -> np.ndarray:
    a, b = np.broadcast_arrays(a, b)
    phase_a = a[..., 4].astype(int)
    phase_b = b[..., 4].astype(int)
    if np.any((phase_a < 0) | (phase_a >= len(groups)) | (phase_b < 0) | (phase_b >= len(groups))):
        raise MetricError(f"phase index outside 0..{len(groups) - 1}")
    out = np.full(phase_a.shape, tau, dtype=float)
    for phase, group in enumerate(groups):
        same = (phase_a == phase) & (phase_b == phase)
        if np.any(same):
            out[same] = _rotation_paired(a[same][:, :4], b[same][:, :4], group)
    return out


def dist_euclidean(x, y) -> float:
    return float(_euclidean_paired(np.asarray(x, float)[None], np.asarray(y, float)[None])[0])


def dist_spd(x: SpdPoint | np.ndarray, y: SpdPoint | np.ndarray) -> float:
    """Affine-invariant Riemannian distance between two SPD matrices."""
    a = x.entries if isinstance(x, SpdPoint) else np.asarray(x, dtype=float)
    b = y.entries if isinstance(y, SpdPoint) else np.asarray(y, dtype=float)
    _check_spd(np.stack([a, b]))
    return float(_spd_paired(a[None], b[None])[0])


def dist_rotation_quotient(x: RotationPoint, y: RotationPoint, group: SymmetryGroup) -> float:
    if x.phase != y.phase:
        raise MetricError(f"phase mismatch: {x.phase} vs {y.phase}; use dist_multiphase")
    return float(_rotation_paired(x.q[None], y.q[None], group)[0])


def dist_multiphase(
    x: RotationPoint,
    y: RotationPoint,
    groups: tuple[SymmetryGroup, ...],
    tau: float = DEFAULT_TAU_PHASE,
) -> float:
    """Quotient distance within a phase, ``tau`` between different phases."""
    a = np.append(x.q, x.phase)[None]
    b = np.append(y.q, y.phase)[None]
    return float(_multiphase_paired(a, b, tuple(groups), tau)[0])


def dist_product(x: tuple, y: tuple, components: tuple["MetricSpace", ...]) -> float:
    return float(np.sqrt(sum(c.distance(xc, yc) ** 2 for c, xc, yc in zip(components, x, y))))


@dataclass(frozen=True)
class MetricSpace:
    """A metric on pixel features, with batched distance evaluation."""

    kind: MetricKind
    dim: int = 0
    group: SymmetryGroup | None = None
    groups: tuple[SymmetryGroup, ...] = ()
    tau_phase: float = DEFAULT_TAU_PHASE
    components: tuple["MetricSpace", ...] = ()

    @classmethod
    def euclidean(cls, dim: int = 0) -> "MetricSpace":
        return cls(MetricKind.EUCLIDEAN, dim=dim)

    @classmethod
    def spd(cls, dim: int = 0) -> "MetricSpace":
        return cls(MetricKind.SPD, dim=dim)

    @classmethod
    def rotation_quotient(cls, group: SymmetryGroup | None = None) -> "MetricSpace":
        return cls(MetricKind.ROTATION_QUOTIENT, group=group or BUILTIN_GROUPS["trivial"])

    @classmethod
    def multiphase(
        cls, groups: tuple[SymmetryGroup, ...], tau: float = DEFAULT_TAU_PHASE
    ) -> "MetricSpace":
        if tau <= 0:
            raise ValueError(f"tau_phase must be positive, got {tau}")
        return cls(MetricKind.MULTIPHASE_ROTATION, groups=tuple(groups), tau_phase=tau)

    @classmethod
    def product(cls, *components: "MetricSpace") -> "MetricSpace":
        return cls(MetricKind.PRODUCT, components=tuple(components))

    @classmethod
    def texture(cls) -> "MetricSpace":
        """Mean vector and covariance matrix of the five-channel texture field."""
        return cls.product(cls.euclidean(5), cls.spd(5))

    # Feature access

    def count(self, features) -> int:
        if self.kind is MetricKind.PRODUCT:
            return self.components[0].count(features[0])
        return len(features)

    def take(self, features, index):
        """Feature(s) at ``index`` (an int or an index array)."""
        if self.kind is MetricKind.PRODUCT:
            return tuple(c.take(f, index) for c, f in zip(self.components, features))
        return features[index]

    def fill(self, features, mask: np.ndarray, donor: int):
        """Copy of ``features`` with rows outside ``mask`` replaced by row ``donor``."""
        if self.kind is MetricKind.PRODUCT:
            return tuple(c.fill(f, mask, donor) for c, f in zip(self.components, features))
        out = np.array(features, dtype=float, copy=True)
        out[~mask] = out[donor]
        return out

    def validate(self, features) -> None:
        """Raise MetricError unless every row lies in the metric's domain."""
        match self.kind:
            case MetricKind.EUCLIDEAN:
                arr = np.asarray(features)
                if arr.ndim != 2 or (self.dim and arr.shape[1] != self.dim):
                    raise MetricError(f"Euclidean features need shape (n, {self.dim or 'd'})")
                finite = np.isfinite(arr).all(axis=1)
                if not finite.all():
                    raise MetricError(f"feature {int(np.argmin(finite))} is not finite")
            case MetricKind.SPD:
                arr = np.asarray(features)
                if self.dim and arr.shape[1:] != (self.dim, self.dim):
                    raise MetricError(f"SPD features need shape (n, {self.dim}, {self.dim})")
                _check_spd(arr)
            case MetricKind.ROTATION_QUOTIENT:
                _check_unit(np.asarray(features))
            case MetricKind.MULTIPHASE_ROTATION:
                arr = np.asarray(features)
                _check_unit(arr[:, :4])
                phases = arr[:, 4]
                if np.any((phases < 0) | (phases >= len(self.groups)) | (phases % 1 != 0)):
                    raise MetricError(f"phase index outside 0..{len(self.groups) - 1}")
            case MetricKind.PRODUCT:
                for c, f in zip(self.components, features):
                    c.validate(f)

    # Distances

    def paired_distances(self, a, b) -> np.ndarray:
        """Elementwise distances between two feature stacks (broadcasting rows)."""
        match self.kind:
            case MetricKind.EUCLIDEAN:
                return _euclidean_paired(np.asarray(a, float), np.asarray(b, float))
            case MetricKind.SPD:
                return _spd_paired(np.asarray(a, float), np.asarray(b, float))
            case MetricKind.ROTATION_QUOTIENT:
                return _rotation_paired(np.asarray(a, float), np.asarray(b, float), self.group)
            case MetricKind.MULTIPHASE_ROTATION:
                return _multiphase_paired(
                    np.asarray(a, float), np.asarray(b, float), self.groups, self.tau_phase
                )
            case MetricKind.PRODUCT:
                squares = [
                    c.paired_distances(fa, fb) ** 2 for c, fa, fb in zip(self.components, a, b)
                ]
                return np.sqrt(np.sum(squares, axis=0))
        raise MetricError(f"unsupported metric kind: {self.kind}")

    def distances_to(self, features, point) -> np.ndarray:
        """Distances from every row of ``features`` to a single ``point``."""
        return self.paired_distances(self._as_batch(point), features)

    def distance(self, x, y) -> float:
        return float(self.paired_distances(self._as_batch(x), self._as_batch(y))[0])

    def _as_batch(self, point):
        if self.kind is MetricKind.PRODUCT:
            return tuple(c._as_batch(p) for c, p in zip(self.components, point))
        if isinstance(point, SpdPoint):
            return point.entries[None]
        if isinstance(point, RotationPoint):
            if self.kind is MetricKind.MULTIPHASE_ROTATION:
                return np.append(point.q, point.phase)[None]
            return point.q[None]
        return np.asarray(point, dtype=float)[None]

    # Row (CSV) conversion

    def row_width(self) -> int:
        """Number of CSV columns one feature occupies (0 when inferred from data)."""
        match self.kind:
            case MetricKind.EUCLIDEAN:
                return self.dim
            case MetricKind.SPD:
                return self.dim * (self.dim + 1) // 2
            case MetricKind.ROTATION_QUOTIENT:
                return 4
            case MetricKind.MULTIPHASE_ROTATION:
                return 5
            case MetricKind.PRODUCT:
                return sum(c.row_width() for c in self.components)
        return 0

    def from_rows(self, rows: np.ndarray):
        """Convert a ``(n, columns)`` float table to this metric's feature layout.

        SPD matrices are stored as their upper triangle in row-major order.
        """
        rows = np.asarray(rows, dtype=float)
        match self.kind:
            case MetricKind.EUCLIDEAN:
                return rows
            case MetricKind.SPD:
                r = self.dim or _triangle_size(rows.shape[1])
                iu = np.triu_indices(r)
                mats = np.zeros((len(rows), r, r))
                mats[:, iu[0], iu[1]] = rows
                mats[:, iu[1], iu[0]] = rows
                return mats
            case MetricKind.ROTATION_QUOTIENT | MetricKind.MULTIPHASE_ROTATION:
                return rows
            case MetricKind.PRODUCT:
                out, start = [], 0
                for c in self.components:
                    width = c.row_width()
                    out.append(c.from_rows(rows[:, start : start + width]))
                    start += width
                return tuple(out)
        raise MetricError(f"unsupported metric kind: {self.kind}")

    def to_rows(self, features) -> np.ndarray:
        match self.kind:
            case MetricKind.SPD:
                mats = np.asarray(features)
                iu = np.triu_indices(mats.shape[1])
                return mats[:, iu[0], iu[1]]
            case MetricKind.PRODUCT:
                return np.hstack([c.to_rows(f) for c, f in zip(self.components, features)])
        return np.asarray(features, dtype=float)


def _triangle_size(width: int) -> int:
    r = int(round((np.sqrt(8 * width + 1) - 1) / 2))
    if r * (r + 1) // 2 != width:
        raise MetricError(f"{width} columns do not form an upper triangle")
    return r
