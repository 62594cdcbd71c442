"""Lengths of parameter-space straight lines mapped onto the Grassmannian.

A 2D line ax + by + c = 0 is identified with the 2-dimensional subspace of
R^3 whose projection matrix is :func:`line2d_projection`.  Interpolating
the coefficient vector linearly traces a curve on Gr(2, 3) whose length
depends on which sign of the endpoint coefficients was chosen; the two
choices give lengths adding up to pi, the shorter one matching the
geodesic distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PathThroughZero, ZeroVector
from .manifold import principal_angles

Array = np.ndarray

FD_STEP = 1e-6
MIN_SAMPLES = 10


def _as_params(v) -> Array:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected 3 line coefficients, got shape {v.shape}")
    if np.linalg.norm(v) == 0.0:
        raise ZeroVector("line coefficients must not all be zero")
    return v


def line2d_projection(v) -> Array:
    """Projection matrix of the subspace embedding the line a x + b y + c = 0."""
    a, b, c = _as_params(v)
    s = a * a + b * b + c * c
    return np.array([
        [b * b + c * c, -a * b, a * c],
        [-a * b, c * c + a * a, b * c],
        [a * c, b * c, a * a + b * b],
    ]) / s


def _projections(vs: Array) -> Array:
    """Batched line2d_projection for rows of vs, shape (K, 3) -> (K, 3, 3)."""
    a, b, c = vs[:, 0], vs[:, 1], vs[:, 2]
    s = np.sum(vs * vs, axis=1)
    P = np.stack([
        np.stack([b * b + c * c, -a * b, a * c], axis=-1),
        np.stack([-a * b, c * c + a * a, b * c], axis=-1),
        np.stack([a * c, b * c, a * a + b * b], axis=-1),
    ], axis=1)
    return P / s[:, None, None]


def projection_gradient(v) -> Array:
    """d phi_ij / d v_k in closed form, shape (3, 3, 3)."""
    a, b, c = _as_params(v)
    s2 = (a * a + b * b + c * c) ** 2
    g = np.empty((3, 3, 3))
    g[0, 0] = [-2 * a * (b * b + c * c), 2 * a * a * b, 2 * a * a * c]
    g[0, 1] = [-b * (b * b + c * c - a * a), -a * (a * a + c * c - b * b), 2 * a * b * c]
    g[0, 2] = [c * (b * b + c * c - a * a), -2 * a * b * c, a * (a * a + b * b - c * c)]
    g[1, 1] = [2 * a * b * b, -2 * b * (a * a + c * c), 2 * b * b * c]
    g[1, 2] = [-2 * a * b * c, c * (a * a + c * c - b * b), b * (a * a + b * b - c * c)]
    g[2, 2] = [2 * a * c * c, 2 * b * c * c, -2 * c * (a * a + b * b)]
    g[1, 0], g[2, 0], g[2, 1] = g[0, 1], g[0, 2], g[1, 2]
    return g / s2


def closed_form_velocity(v1, v2, t: float) -> Array:
    v1, v2 = _as_params(v1), _as_params(v2)
    return projection_gradient(t * v2 + (1 - t) * v1) @ (v2 - v1)


def fd_velocity(v1, v2, t: float | Array, step: float = FD_STEP) -> Array:
    """Central-difference derivative of t -> phi(v(t)); batched over t."""
    v1, v2 = _as_params(v1), _as_params(v2)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    d = v2 - v1
    base = t[:, None] * v2 + (1 - t[:, None]) * v1
    out = (_projections(base + step * d) - _projections(base - step * d)) / (2 * step)
    return out if out.shape[0] > 1 else out[0]


def curve_length(v1, v2, n: int = 1000) -> float:
    """Riemann sum of sqrt(tr(phi'^2) / 2) at the midpoints of n equal steps of t.

    Midpoints make the error second order in 1/n; left endpoints undershoot
    by O(1/n) whenever the speed varies along the curve.
    """
    v1, v2 = _as_params(v1), _as_params(v2)
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
    t = (np.arange(n) + 0.5) / n
    path = t[:, None] * v2 + (1 - t[:, None]) * v1
    if np.min(np.linalg.norm(path, axis=1)) < 1e-9 or _crosses_zero(v1, v2):
        raise PathThroughZero("the parameter-space segment passes through the origin")
    vel = np.atleast_3d(fd_velocity(v1, v2, t))
    speed = np.sqrt(np.maximum(0.0, 0.5 * np.einsum("kij,kji->k", vel, vel)))
    return float(speed.sum() / n)


def _crosses_zero(v1: Array, v2: Array) -> bool:
    # Closest point of the segment to the origin, not only the sampled ones.
    d = v2 - v1
    dd = d @ d
    if dd == 0.0:
        return False
    s = np.clip(-(v1 @ d) / dd, 0.0, 1.0)
    return bool(np.linalg.norm(v1 + s * d) < 1e-9)


def geodesic_distance(v1, v2) -> float:
    """Grassmann distance between the two embedded lines (a single principal angle)."""
    P1, P2 = line2d_projection(v1), line2d_projection(v2)
    b1 = np.linalg.eigh(P1)[1][:, 1:]
    b2 = np.linalg.eigh(P2)[1][:, 1:]
    return float(np.sqrt(np.sum(principal_angles(b1, b2) ** 2)))


@dataclass(frozen=True)
class CurveReport:
    l_plus: float
    l_minus: float | None  # None when the segment to -v2 passes through the origin
    geodesic: float
    sum_minus_pi: float | None

    @property
    def shortest_minus_geodesic(self) -> float:
        if self.l_minus is None:
            return self.l_plus - self.geodesic
        return min(self.l_plus, self.l_minus) - self.geodesic

    def as_dict(self) -> dict:
        return {
            "l_plus": self.l_plus,
            "l_minus": self.l_minus,
            "geodesic": self.geodesic,
            "sum_minus_pi": self.sum_minus_pi,
        }


def closed_geodesic_report(v1, v2, n: int = 1000) -> CurveReport:
    """Curve lengths from v1 to v2 and to -v2, against the geodesic distance."""
    v1, v2 = _as_params(v1), _as_params(v2)
    l_plus = curve_length(v1, v2, n)
    try:
        l_minus = curve_length(v1, -v2, n)
    except PathThroughZero:
        # v2 is a positive multiple of v1: only the trivial curve exists.
        if l_plus != 0.0:
            raise
        return CurveReport(l_plus, None, geodesic_distance(v1, v2), None)
    return CurveReport(l_plus, l_minus, geodesic_distance(v1, v2), l_plus + l_minus - np.pi)
