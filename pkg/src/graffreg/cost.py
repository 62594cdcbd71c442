"""Per-correspondence residuals for line/plane registration.

Each pair splits into a rotation-only term f_i and a translation term g_i.
The source feature is always the one being moved; the target supplies the
vectors that get projected.

``rotation_residual`` reports f_i as a squared angle (what the inlier test
thresholds), ``total_cost`` reports the projection form ||P a - a||^2 that
the least-squares refiner minimizes.  For unit a the two are related by
||P a - a||^2 = sin^2(angle).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, MixedAmbientDims
from .manifold import (
    AffineSubspace,
    RigidTransform,
    apply_transform,
    embed,
    line_angle,
    tilde,
)

Array = np.ndarray

# Below this projected length a line is treated as perpendicular to the plane.
DEGENERATE_PROJECTION = 1e-12


class PairKind(str, enum.Enum):
    LINE_LINE = "l2l"
    LINE_PLANE = "l2p"
    PLANE_PLANE = "p2p"

    @property
    def dims(self) -> tuple[int, int]:
        return {"l2l": (1, 1), "l2p": (1, 2), "p2p": (2, 2)}[self.value]

    @classmethod
    def from_dims(cls, k_target: int, k_source: int) -> "PairKind":
        for kind in cls:
            if kind.dims == (k_target, k_source):
                return kind
        raise DimensionMismatch(f"no pair kind for target dim {k_target}, source dim {k_source}")


@dataclass(frozen=True, eq=False)
class FeaturePair:
    kind: PairKind
    target: AffineSubspace
    source: AffineSubspace
    index: int = 0

    def __post_init__(self) -> None:
        kind = PairKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if (self.target.dim_sub, self.source.dim_sub) != kind.dims:
            raise DimensionMismatch(
                f"{kind.name} needs dims {kind.dims}, got ({self.target.dim_sub}, {self.source.dim_sub})"
            )
        if self.target.dim_ambient != 3 or self.source.dim_ambient != 3:
            raise DimensionMismatch("feature pairs live in R^3")

    @classmethod
    def of(cls, target: AffineSubspace, source: AffineSubspace, index: int = 0) -> "FeaturePair":
        return cls(PairKind.from_dims(target.dim_sub, source.dim_sub), target, source, index)

    def rotating_vector(self) -> Array:
        """Source-side vector moved by R (direction for lines, normal for planes)."""
        if self.kind is PairKind.LINE_LINE:
            return self.source.basis[:, 0]
        return self.source.normal()

    def fixed_vector(self) -> Array:
        """Target-side vector compared against the rotated one."""
        if self.kind is PairKind.PLANE_PLANE:
            return self.target.normal()
        return self.target.basis[:, 0]


@dataclass(frozen=True, eq=False)
class CostBreakdown:
    f_terms: Array
    g_terms: Array
    total: float

    @classmethod
    def from_terms(cls, f_terms: Array, g_terms: Array) -> "CostBreakdown":
        f = np.asarray(f_terms, dtype=float)
        g = np.asarray(g_terms, dtype=float)
        return cls(f, g, float(f.sum() + g.sum()))

    @property
    def f_sum(self) -> float:
        return float(self.f_terms.sum())

    @property
    def g_sum(self) -> float:
        return float(self.g_terms.sum())


def rotation_residual(pair: FeaturePair, R: Array) -> float:
    """Squared angle (rad^2) between the target and the rotated source feature."""
    R = np.asarray(R, dtype=float)
    if pair.kind is PairKind.LINE_LINE:
        return line_angle(R @ pair.source.basis[:, 0], pair.target.basis[:, 0]) ** 2
    if pair.kind is PairKind.PLANE_PLANE:
        return line_angle(R @ pair.source.normal(), pair.target.normal()) ** 2
    d = pair.target.basis[:, 0]
    rb = R @ pair.source.basis
    proj = rb @ (rb.T @ d)
    if np.linalg.norm(proj) < DEGENERATE_PROJECTION:
        return (np.pi / 2) ** 2
    return line_angle(d, proj) ** 2


def translation_residual(pair: FeaturePair, T: RigidTransform) -> float:
    """||P c~ - c~||^2 with P projecting onto the lifted transformed source."""
    return _lifted_residual(pair.target, pair.source, T)


def _lifted_residual(target: AffineSubspace, source: AffineSubspace, T: RigidTransform) -> float:
    c = tilde(target.displacement)
    y = embed(apply_transform(T, source)).matrix
    r = y @ (y.T @ c) - c
    return float(r @ r)


def linear_residual(target: AffineSubspace, source: AffineSubspace, R: Array) -> float:
    """Sum over target basis columns a_j of ||P_{R B} a_j - a_j||^2."""
    rb = np.asarray(R, dtype=float) @ source.basis
    a = target.basis
    r = rb @ (rb.T @ a) - a
    return float(np.sum(r * r))


def affine_cost(target: AffineSubspace, source: AffineSubspace, T: RigidTransform) -> tuple[float, float]:
    """(f, g) of the general k <= l registration cost for one correspondence."""
    if target.dim_ambient != source.dim_ambient:
        raise MixedAmbientDims("target and source live in different ambient spaces")
    if target.dim_sub > source.dim_sub:
        raise DimensionMismatch("target must not have larger dimension than source")
    return linear_residual(target, source, T.rotation), _lifted_residual(target, source, T)


def pair_f_projection(pair: FeaturePair, R: Array) -> float:
    if pair.kind is PairKind.PLANE_PLANE:
        # Orthogonal complements: compare normals instead of the two plane columns.
        n1 = np.asarray(R, dtype=float) @ pair.source.normal()
        n2 = pair.target.normal()
        r = n1 * (n1 @ n2) - n2
        return float(r @ r)
    return linear_residual(pair.target, pair.source, R)


def total_cost(pairs: Sequence[FeaturePair], T: RigidTransform) -> CostBreakdown:
    dims = {p.target.dim_ambient for p in pairs} | {p.source.dim_ambient for p in pairs}
    if len(dims) > 1 or (dims and dims != {T.dim}):
        raise MixedAmbientDims(f"ambient dimensions {sorted(dims | {T.dim})} are mixed")
    f = [pair_f_projection(p, T.rotation) for p in pairs]
    g = [translation_residual(p, T) for p in pairs]
    return CostBreakdown.from_terms(f, g)


def make_pairs(targets: Sequence[AffineSubspace], sources: Sequence[AffineSubspace]) -> list[FeaturePair]:
    if len(targets) != len(sources):
        raise DimensionMismatch(f"{len(targets)} targets vs {len(sources)} sources")
    return [FeaturePair.of(t, s, i) for i, (t, s) in enumerate(zip(targets, sources))]
