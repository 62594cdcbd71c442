"""Affine subspaces as points of a higher-dimensional Grassmannian.

A k-dimensional affine subspace of R^n is stored as an orthonormal basis of
its linear part (n x k) plus the unique displacement orthogonal to that
basis.  Lifting it into R^(n+1) gives an (n+1) x (k+1) orthonormal matrix,
and distances between lifted subspaces are root-sum-square principal angles.

Conventions:
    basis       (n, k) orthonormal columns, k = 0 allowed (points)
    displacement (n,)  orthogonal to every basis column
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DimensionMismatch, RankDeficient

Array = np.ndarray

ORTHO_TOL = 1e-10
# Rotated bases are re-orthonormalized only beyond this drift.
REORTHO_DRIFT = 1e-12
RANK_TOL = 1e-8


def _frozen(a: Array) -> Array:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def orthonormalize(raw_basis: Array) -> Array:
    """Orthonormal columns spanning the same space as ``raw_basis``.

    Columns are normalized first so the rank test is scale free; a zero or
    (near) parallel column raises :class:`RankDeficient`.
    """
    raw = np.asarray(raw_basis, dtype=np.float64)
    if raw.ndim == 1:
        raw = raw[:, None]
    n, k = raw.shape
    if k == 0:
        return np.zeros((n, 0))
    norms = np.linalg.norm(raw, axis=0)
    if np.any(norms == 0.0) or not np.all(np.isfinite(raw)):
        raise RankDeficient("zero-length or non-finite basis column")
    scaled = raw / norms
    sv = np.linalg.svd(scaled, compute_uv=False)
    if sv[-1] <= RANK_TOL:
        raise RankDeficient(f"basis has numerical rank < {k} (smallest singular value {sv[-1]:.3g})")
    q, r = np.linalg.qr(scaled)
    # Positive diagonal keeps q[:, 0] parallel (not antiparallel) to the first input column.
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def canonical_displacement(basis: Array, anchor: Array) -> Array:
    """Component of ``anchor`` orthogonal to span(basis): (I - A A^T) c."""
    basis = np.asarray(basis, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    if basis.shape[1] == 0:
        return anchor.copy()
    return anchor - basis @ (basis.T @ anchor)


def projection_matrix(basis: Array) -> Array:
    basis = np.asarray(basis, dtype=np.float64)
    return basis @ basis.T


def tilde(x: Array) -> Array:
    """Append 1 and normalize: puts a displacement on the unit sphere of R^(n+1)."""
    x = np.asarray(x, dtype=np.float64)
    return np.append(x, 1.0) / np.sqrt(1.0 + x @ x)


def bar(x: Array) -> Array:
    """Append 0: lifts a direction into R^(n+1)."""
    return np.append(np.asarray(x, dtype=np.float64), 0.0)


@dataclass(frozen=True, eq=False)
class AffineSubspace:
    """A k-dimensional affine subspace of R^n.

    ``displacement`` may be passed as any point of the subspace; it is
    replaced by its canonical (orthogonal) form.  The basis must already be
    orthonormal; use :meth:`from_raw` for unnormalized input.
    """

    basis: Array
    displacement: Array

    def __post_init__(self) -> None:
        basis = np.array(self.basis, dtype=np.float64)
        if basis.ndim == 1:
            basis = basis[:, None]
        disp = np.array(self.displacement, dtype=np.float64).reshape(-1)
        n, k = basis.shape
        if disp.shape[0] != n:
            raise DimensionMismatch(f"displacement has length {disp.shape[0]}, basis has {n} rows")
        if k >= n:
            raise DimensionMismatch(f"subspace dimension {k} must be < ambient dimension {n}")
        if k and np.max(np.abs(basis.T @ basis - np.eye(k))) > 1e-8:
            raise ValueError("basis columns are not orthonormal; use AffineSubspace.from_raw")
        if k:
            along = basis.T @ disp
            if np.linalg.norm(along) > 1e-13 * max(1.0, np.linalg.norm(disp)):
                disp = disp - basis @ along
        object.__setattr__(self, "basis", _frozen(basis))
        object.__setattr__(self, "displacement", _frozen(disp))

    @classmethod
    def from_raw(cls, raw_basis: Array, anchor: Array) -> "AffineSubspace":
        anchor = np.asarray(anchor, dtype=np.float64).reshape(-1)
        raw = np.asarray(raw_basis, dtype=np.float64)
        if raw.ndim == 1:
            raw = raw[:, None]
        if raw.size == 0:
            raw = np.zeros((anchor.shape[0], 0))
        basis = orthonormalize(raw)
        return cls(basis, canonical_displacement(basis, anchor))

    @property
    def dim_ambient(self) -> int:
        return int(self.basis.shape[0])

    @property
    def dim_sub(self) -> int:
        return int(self.basis.shape[1])

    def projection(self) -> Array:
        return projection_matrix(self.basis)

    def normal(self) -> Array:
        """Unit normal of a plane in R^3 (cross product of the basis columns)."""
        if self.dim_ambient != 3 or self.dim_sub != 2:
            raise DimensionMismatch("normal() is defined for planes in R^3 only")
        nrm = np.cross(self.basis[:, 0], self.basis[:, 1])
        return nrm / np.linalg.norm(nrm)

    def __repr__(self) -> str:
        return (
            f"AffineSubspace(k={self.dim_sub}, n={self.dim_ambient}, "
            f"basis={self.basis.tolist()}, displacement={self.displacement.tolist()})"
        )


def line(direction: Array, anchor: Array) -> AffineSubspace:
    return AffineSubspace.from_raw(np.asarray(direction, dtype=float)[:, None], anchor)


def plane(spanning: Array, anchor: Array) -> AffineSubspace:
    """Plane from two spanning vectors given as rows or columns (3x2 or 2x3)."""
    m = np.asarray(spanning, dtype=float)
    if m.shape == (2, 3):
        m = m.T
    return AffineSubspace.from_raw(m, anchor)


def plane_from_normal(normal: Array, anchor: Array) -> AffineSubspace:
    normal = np.asarray(normal, dtype=float)
    # Null space of the normal via SVD; the sign of the basis is irrelevant.
    _, _, vt = np.linalg.svd(normal[None, :])
    return AffineSubspace.from_raw(vt[1:].T, anchor)


def point(x: Array) -> AffineSubspace:
    x = np.asarray(x, dtype=float).reshape(-1)
    return AffineSubspace(np.zeros((x.shape[0], 0)), x)


@dataclass(frozen=True, eq=False)
class EmbeddedBasis:
    """(n+1) x (k+1) orthonormal matrix representing an affine subspace."""

    matrix: Array

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", _frozen(self.matrix))


def embed(s: AffineSubspace) -> EmbeddedBasis:
    n, k = s.basis.shape
    y = np.zeros((n + 1, k + 1))
    y[:n, :k] = s.basis
    y[:, k] = tilde(s.displacement)
    return EmbeddedBasis(y)


def _as_matrix(y: EmbeddedBasis | Array) -> Array:
    if isinstance(y, EmbeddedBasis):
        return y.matrix
    y = np.asarray(y, dtype=np.float64)
    return y[:, None] if y.ndim == 1 else y


def principal_angles(ya: EmbeddedBasis | Array, yb: EmbeddedBasis | Array) -> Array:
    """Ascending principal angles between span(ya) and span(yb), dim(ya) <= dim(yb).

    Cosines come from the singular values of ya^T yb (clamped to [0, 1]).
    For angles below pi/4 the sine route, singular values of the part of ya
    orthogonal to yb, is used instead: arccos loses half the digits near 1.
    """
    a, b = _as_matrix(ya), _as_matrix(yb)
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    ka, kb = a.shape[1], b.shape[1]
    if ka > kb:
        raise DimensionMismatch(f"first argument must be the smaller subspace ({ka} > {kb})")
    if ka == 0:
        return np.zeros(0)
    cos = np.clip(np.linalg.svd(a.T @ b, compute_uv=False), 0.0, 1.0)  # descending
    theta = np.arccos(cos)
    resid = a - b @ (b.T @ a)
    sin = np.clip(np.linalg.svd(resid, compute_uv=False)[::-1], 0.0, 1.0)  # ascending
    small = sin**2 < 0.5
    theta[small] = np.arcsin(sin[small])
    return theta


def grassmann_distance(ya: EmbeddedBasis | Array, yb: EmbeddedBasis | Array) -> float:
    return float(np.sqrt(np.sum(principal_angles(ya, yb) ** 2)))


def line_angle(u: Array, v: Array) -> float:
    """Acute angle between span{u} and span{v}: arccos|u.v| for unit vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return grassmann_distance(u / np.linalg.norm(u), v / np.linalg.norm(v))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x -> R x + t with R in SO(n)."""

    rotation: Array
    translation: Array

    def __post_init__(self) -> None:
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        n = r.shape[0]
        if r.shape != (n, n) or t.shape != (n,):
            raise DimensionMismatch(f"rotation {r.shape} and translation {t.shape} disagree")
        if np.max(np.abs(r.T @ r - np.eye(n))) > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation is not in SO(n)")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls, n: int = 3) -> "RigidTransform":
        return cls(np.eye(n), np.zeros(n))

    @classmethod
    def from_rotvec(cls, rotvec: Array, translation: Array = (0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix(), translation)

    @property
    def dim(self) -> int:
        return int(self.rotation.shape[0])

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        """Composition: (self @ other) x = self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation, self.rotation @ other.translation + self.translation
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def as_matrix(self) -> Array:
        n = self.dim
        m = np.eye(n + 1)
        m[:n, :n] = self.rotation
        m[:n, n] = self.translation
        return m

    def __repr__(self) -> str:
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def apply_transform(T: RigidTransform, s: AffineSubspace) -> AffineSubspace:
    """SE(n) action: basis -> R A, displacement -> R b0 + R (I - A A^T) R^T t."""
    if T.dim != s.dim_ambient:
        raise DimensionMismatch(f"transform acts on R^{T.dim}, subspace lives in R^{s.dim_ambient}")
    R, t = T.rotation, T.translation
    a = s.basis
    ra = R @ a
    k = a.shape[1]
    if k and np.max(np.abs(ra.T @ ra - np.eye(k))) > REORTHO_DRIFT:
        ra = orthonormalize(ra)
    rt_t = R.T @ t
    disp = R @ s.displacement + R @ (rt_t - a @ (a.T @ rt_t))
    return AffineSubspace(ra, disp)


def apply_transform_point(T: RigidTransform, x: Array) -> Array:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != T.dim:
        raise DimensionMismatch(f"point has length {x.shape[-1]}, transform acts on R^{T.dim}")
    return x @ T.rotation.T + T.translation


def contains_point(s: AffineSubspace, x: Array, tol: float = 1e-9) -> bool:
    d = np.asarray(x, dtype=np.float64) - s.displacement
    off = d - s.basis @ (s.basis.T @ d)
    return bool(np.linalg.norm(off) <= tol)


def sample_points(s: AffineSubspace, count: int, rng: np.random.Generator, scale: float = 1.0) -> Array:
    """Random points on ``s`` (count x n)."""
    coeffs = rng.normal(scale=scale, size=(count, s.dim_sub))
    return s.displacement + coeffs @ s.basis.T
