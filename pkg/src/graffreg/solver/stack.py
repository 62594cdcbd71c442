"""Stacked numpy views of a list of feature pairs.

Pairs are grouped by kind so every group has fixed array shapes; all
residual evaluations used by the searches and the refiner go through here.
The scalar functions in :mod:`graffreg.cost` are the reference these are
tested against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..cost import FeaturePair, PairKind

Array = np.ndarray


def tilde_rows(x: Array) -> Array:
    """Row-wise tilde lift (..., n) -> (..., n+1)."""
    lifted = np.empty(x.shape[:-1] + (x.shape[-1] + 1,))
    lifted[..., :-1] = x
    lifted[..., -1] = 1.0
    # einsum is much faster than sum over a short last axis.
    lifted /= np.sqrt(1.0 + np.einsum("...j,...j->...", x, x))[..., None]
    return lifted


def acute_angle(u: Array, v: Array) -> Array:
    """Acute angle between lines span{u}, span{v} for unit rows (broadcasting)."""
    u, v = np.broadcast_arrays(u, v)
    dot = np.abs(np.sum(u * v, axis=-1))
    # Explicit cross product; np.cross is slow on many small rows.
    cx = u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1]
    cy = u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2]
    cz = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    return np.arctan2(np.sqrt(cx * cx + cy * cy + cz * cz), dot)


@dataclass
class KindGroup:
    kind: PairKind
    index: Array          # (m,) positions in the original pair list
    f_vectors: Array      # (m, 3, a) target vectors projected in the rotation term
    f_span: Array         # (m, 3, s) source vectors whose rotated span they are projected on
    src_basis: Array      # (m, 3, l) source linear part
    src_disp: Array       # (m, 3) canonical source displacement
    tgt_tilde: Array      # (m, 4) lifted target displacement
    rot_vec: Array        # (m, 3) source direction or normal, moved by R
    fix_vec: Array        # (m, 3) target direction or normal

    def f_residuals(self, R: Array) -> Array:
        """(m, 3*a) vectors P_{R S} F - F."""
        rs = np.einsum("ij,mjk->mik", R, self.f_span)
        coeff = np.einsum("mjs,mja->msa", rs, self.f_vectors)
        r = np.einsum("mjs,msa->mja", rs, coeff) - self.f_vectors
        return r.reshape(r.shape[0], -1)

    def lifted_columns(self, R: Array) -> Array:
        """(m, 4, l) rotated source basis padded with a zero row."""
        rb = np.einsum("ij,mjk->mik", R, self.src_basis)
        return np.concatenate([rb, np.zeros((rb.shape[0], 1, rb.shape[2]))], axis=1)

    def moved_displacement(self, R: Array, t: Array) -> Array:
        """(..., m, 3) R d0 + R (I - B B^T) R^T t for t of shape (..., 3)."""
        rb = np.einsum("ij,mjk->mik", R, self.src_basis)
        rd = self.src_disp @ R.T
        t = np.asarray(t, dtype=float)
        along = np.einsum("mjk,...j->...mk", rb, t)
        return rd + t[..., None, :] - np.einsum("mjk,...mk->...mj", rb, along)

    def g_residuals(self, R: Array, t: Array) -> Array:
        """(m, 4) vectors P c~ - c~ for the lifted transformed source."""
        cols = self.lifted_columns(R)
        u = tilde_rows(self.moved_displacement(R, t))
        c = self.tgt_tilde
        proj = np.einsum("mjk,mk->mj", cols, np.einsum("mjk,mj->mk", cols, c))
        proj += u * np.sum(u * c, axis=-1, keepdims=True)
        return proj - c

    def angles(self, R: Array) -> Array:
        """Rotation residual angles (not squared) at one or more rotations (..., 3, 3)."""
        moved = np.swapaxes(R @ self.rot_vec.T, -1, -2)
        ang = acute_angle(moved, self.fix_vec)
        if self.kind is PairKind.LINE_PLANE:
            ang = np.pi / 2 - ang
        return ang


def _group(kind: PairKind, pairs: Sequence[FeaturePair], index: Sequence[int]) -> KindGroup:
    if kind is PairKind.PLANE_PLANE:
        f_vectors = np.stack([p.target.normal()[:, None] for p in pairs])
        f_span = np.stack([p.source.normal()[:, None] for p in pairs])
    else:
        f_vectors = np.stack([p.target.basis for p in pairs])
        f_span = np.stack([p.source.basis for p in pairs])
    return KindGroup(
        kind=kind,
        index=np.asarray(index, dtype=int),
        f_vectors=f_vectors,
        f_span=f_span,
        src_basis=np.stack([p.source.basis for p in pairs]),
        src_disp=np.stack([p.source.displacement for p in pairs]),
        tgt_tilde=tilde_rows(np.stack([p.target.displacement for p in pairs])),
        rot_vec=np.stack([p.rotating_vector() for p in pairs]),
        fix_vec=np.stack([p.fixed_vector() for p in pairs]),
    )


class PairStack:
    """All pairs of a problem, grouped by kind."""

    def __init__(self, pairs: Sequence[FeaturePair]):
        self.size = len(pairs)
        self.groups: list[KindGroup] = []
        for kind in PairKind:
            idx = [i for i, p in enumerate(pairs) if p.kind is kind]
            if idx:
                self.groups.append(_group(kind, [pairs[i] for i in idx], idx))

    def angles(self, R: Array) -> Array:
        """(..., N) residual angles in the original pair order."""
        R = np.asarray(R, dtype=float)
        out = np.empty(R.shape[:-2] + (self.size,))
        for g in self.groups:
            out[..., g.index] = g.angles(R)
        return out

    @property
    def lp_mask(self) -> Array:
        mask = np.zeros(self.size, dtype=bool)
        for g in self.groups:
            mask[g.index] = g.kind is PairKind.LINE_PLANE
        return mask

    def lp_normal_angles(self, R: Array) -> Array:
        """(..., N) angle between rotated source normal and target direction; NaN off line-plane pairs."""
        R = np.asarray(R, dtype=float)
        out = np.full(R.shape[:-2] + (self.size,), np.nan)
        for g in self.groups:
            if g.kind is PairKind.LINE_PLANE:
                out[..., g.index] = np.pi / 2 - g.angles(R)
        return out

    def f_terms(self, R: Array) -> Array:
        out = np.empty(self.size)
        for g in self.groups:
            r = g.f_residuals(R)
            out[g.index] = np.sum(r * r, axis=1)
        return out

    def g_terms(self, R: Array, t: Array) -> Array:
        out = np.empty(self.size)
        for g in self.groups:
            r = g.g_residuals(R, t)
            out[g.index] = np.sum(r * r, axis=1)
        return out

    def residual_vector(self, R: Array, t: Array | None, rotation: bool = True) -> Array:
        """Concatenated least-squares residuals; f-part if ``rotation``, g-part if ``t`` given."""
        parts = []
        for g in self.groups:
            if rotation:
                parts.append(g.f_residuals(R).ravel())
            if t is not None:
                parts.append(g.g_residuals(R, t).ravel())
        return np.concatenate(parts) if parts else np.zeros(0)
