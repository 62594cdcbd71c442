"""Translation search with the rotation fixed.

With R fixed, the only t-dependent column of the lifted transformed source
is u(t) = tilde(R d0 + R (I - B B^T) R^T t), so each residual is
||w - (c~ . u) u|| with w constant.  For a cube centred at t0,

    sqrt(g_i(t)) >= sqrt(g_i(t0)) - psi_i,
    psi_i >= max_t ||(c~ . u(t0)) u(t0) - (c~ . u(t)) u(t)||,

which gives the lower bound; the value at t0 is the upper bound.  Three
ways of estimating psi_i are provided:

``vertex``       maximum over the 8 cube corners (not guaranteed)
``safeguarded``  corners, edge midpoints and centre, inflated by 5%, capped by
                 ``lipschitz``; on cubes whose provable arc reaches
                 SAFEGUARD_MAX_ARC the sampled value is ignored
``lipschitz``    provable: [x; 1] moves by at most r = max_corner ||M (t - t0)||
                 with M = R (I - B B^T) R^T, so u turns by at most
                 arcsin(r / ||[x0; 1]||), and ||P_u c - P_u0 c|| <= sin of that

Except in ``vertex`` mode, the lower bound is additionally tightened with a
second-order bound.  Because u is orthogonal to the lifted source basis,
each term is g = k - s^2 with s = c~ . u(t) and k constant, and
||Hess g|| <= 2 (1 + 2/sqrt(3)) / ||[x; 1]||^2.  Taylor expansion around t0
then gives e(t) >= e(t0) - h ||grad e(t0)||_1 - 3/2 L h^2 on a cube of
half-side h, which closes quadratically where the gradient vanishes.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..cost import FeaturePair
from ..errors import EmptyInlierSet, QueueOverflow
from .refine import refine_translation
from .stack import PairStack, tilde_rows

Array = np.ndarray

PSI_MODES = ("vertex", "safeguarded", "lipschitz")
SAFEGUARD_INFLATION = 1.05
SAFEGUARD_MAX_ARC = np.pi / 4
HESSIAN_CONSTANT = 2.0 * (1.0 + 2.0 / np.sqrt(3.0))

_CORNERS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
_EDGE_MIDPOINTS = np.array(
    [p for p in itertools.product((-1.0, 0.0, 1.0), repeat=3) if sum(v == 0.0 for v in p) == 1]
)
_SAFEGUARD_POINTS = np.vstack([_CORNERS, _EDGE_MIDPOINTS, np.zeros((1, 3))])


@dataclass
class TranslationCube:
    center: Array
    half_side: float
    lower_bound: float = 0.0
    upper_bound: float = np.inf

    @property
    def vertices(self) -> Array:
        return self.center + self.half_side * _CORNERS

    def children(self) -> list["TranslationCube"]:
        h = self.half_side / 2
        return [TranslationCube(self.center + h * o, h) for o in _CORNERS]

    def contains(self, t: Array, slack: float = 0.0) -> bool:
        return bool(np.all(np.abs(np.asarray(t) - self.center) <= self.half_side + slack))


def _dot(a: Array, b: Array) -> Array:
    """Row-wise dot product over the last axis (broadcasting)."""
    a, b = np.broadcast_arrays(a, b)
    return np.einsum("...j,...j->...", a, b)


class TranslationProblem:
    """Vectorized g-terms of a fixed pair set under a fixed rotation."""

    def __init__(self, pairs: Sequence[FeaturePair], R: Array):
        self.stack = PairStack(pairs)
        self.R = np.asarray(R, dtype=float)
        # Per group: constant residual part w, lifted target c~, and the moving-displacement map.
        self._parts = []
        for g in self.stack.groups:
            cols = g.lifted_columns(self.R)
            c = g.tgt_tilde
            w = c - np.einsum("mjk,mk->mj", cols, np.einsum("mjk,mj->mk", cols, c))
            rb = np.einsum("ij,mjk->mik", self.R, g.src_basis)
            ortho = np.eye(3) - np.einsum("mik,mjk->mij", rb, rb)
            self._parts.append((g, w, c, ortho))
        self._moving = [(g.src_disp @ self.R.T, ortho.reshape(-1, 3)) for g, _, _, ortho in self._parts]
        self._shift_memo: tuple[float, Array] | None = None

    def _moved(self, k: int, t: Array) -> Array:
        """(P, m, 3) moved source displacements of group k at translations (P, 3)."""
        rd, flat = self._moving[k]
        return rd + (t @ flat.T).reshape(t.shape[0], *rd.shape)

    def _pieces(self, t: Array):
        """Per group: (h, w) with h = (c~ . u) u at translations t of shape (P, 3)."""
        out = []
        for k, (g, w, c, _) in enumerate(self._parts):
            u = tilde_rows(self._moved(k, t))                     # (P, m, 4)
            h = u * np.sum(u * c, axis=-1, keepdims=True)
            out.append((g, h, w))
        return out

    def g_terms(self, t: Array) -> Array:
        """(P, N) residuals for translations of shape (P, 3), or (N,) for one translation."""
        t = np.asarray(t, dtype=float)
        single = t.ndim == 1
        t2 = t[None] if single else t
        out = np.empty((t2.shape[0], self.stack.size))
        for g, h, w in self._pieces(t2):
            r = w - h
            out[:, g.index] = np.sum(r * r, axis=-1)
        return out[0] if single else out

    def cost(self, t: Array) -> Array:
        return self.g_terms(t).sum(axis=-1)

    def psi(self, centers: Array, half_side: float, mode: str = "safeguarded") -> Array:
        """Per-pair bound on how far the projected target moves inside each cube.

        ``centers`` is (3,) or (K, 3); the result is (N,) or (K, N).
        """
        if mode not in PSI_MODES:
            raise ValueError(f"unknown psi mode {mode!r}; expected one of {PSI_MODES}")
        centers = np.asarray(centers, dtype=float)
        single = centers.ndim == 1
        centers = np.atleast_2d(centers)
        if mode == "vertex":
            out = self._sampled_psi(centers, half_side, mode)
        else:
            out = self._lipschitz_psi(centers, half_side)
            if mode == "safeguarded":
                narrow = out < np.sin(SAFEGUARD_MAX_ARC)
                if narrow.any():
                    sampled = SAFEGUARD_INFLATION * self._sampled_psi(centers, half_side, mode)
                    out = np.where(narrow, np.minimum(out, sampled), out)
        return out[0] if single else out

    def _shift(self, half_side: float) -> Array:
        """Largest displacement of the moved source anchor over the cube corners, per pair."""
        offsets = half_side * _CORNERS
        out = np.empty(self.stack.size)
        for g, _, _, ortho in self._parts:
            out[g.index] = np.linalg.norm(np.einsum("mij,pj->pmi", ortho, offsets), axis=-1).max(axis=0)
        return out

    def _lipschitz_psi(self, centers: Array, half_side: float) -> Array:
        shift = self._shift(half_side)
        out = np.empty((centers.shape[0], self.stack.size))
        for k, (g, _, _, _) in enumerate(self._parts):
            x0 = self._moved(k, centers)                              # (K, m, 3)
            radius = np.sqrt(1.0 + np.sum(x0 * x0, axis=-1))
            out[:, g.index] = np.minimum(1.0, shift[g.index] / radius)
        return out

    def _sampled_psi(self, centers: Array, half_side: float, mode: str) -> Array:
        offsets = _CORNERS if mode == "vertex" else _SAFEGUARD_POINTS
        n_pts = len(offsets) + 1
        pts = np.concatenate([centers[:, None], centers[:, None] + half_side * offsets[None]], axis=1).reshape(-1, 3)
        out = np.empty((centers.shape[0], self.stack.size))
        for g, h, _ in self._pieces(pts):
            h = h.reshape(centers.shape[0], n_pts, *h.shape[1:])
            out[:, g.index] = np.linalg.norm(h[:, 1:] - h[:, :1], axis=-1).max(axis=1)
        return out

    def quadratic_lower(self, centers: Array, half_side: float) -> Array:
        """Second-order lower bound of the summed g-terms, (K,) for centres (K, 3)."""
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        shift = self._shift(half_side)
        grad = np.zeros((centers.shape[0], 3))
        energy = np.zeros(centers.shape[0])
        curv = np.zeros(centers.shape[0])
        for k, (g, w, c, ortho) in enumerate(self._parts):
            x0 = self._moved(k, centers)                              # (K, m, 3)
            rho = np.sqrt(1.0 + np.sum(x0 * x0, axis=-1))
            u = tilde_rows(x0)
            s = np.sum(u * c, axis=-1)
            grad_x = (c - u * s[..., None])[..., :3] / rho[..., None]
            # Projectors are symmetric, so sum_m M_m v_m is one matmul.
            v = (s[..., None] * grad_x).reshape(centers.shape[0], -1)
            grad -= 2.0 * (v @ ortho.reshape(-1, 3))
            r = w - u * s[..., None]
            energy += np.sum(r * r, axis=(-1, -2))
            nearest = np.maximum(0.0, np.linalg.norm(x0, axis=-1) - shift[g.index])
            curv += np.sum(HESSIAN_CONSTANT / (1.0 + nearest**2), axis=-1)
        return energy - half_side * np.abs(grad).sum(axis=-1) - 1.5 * curv * half_side**2

    def _shift_cached(self, half_side: float) -> Array:
        if self._shift_memo is None or self._shift_memo[0] != half_side:
            self._shift_memo = (half_side, self._shift(half_side))
        return self._shift_memo[1]

    def bounds(self, centers: Array, half_side: float, mode: str = "safeguarded",
               prune_at: float | None = None) -> tuple[Array, Array]:
        """(lower, upper) for one centre (floats) or a batch of centres (arrays).

        Same values as combining g_terms, psi and quadratic_lower, but every
        quantity at the centres is computed once.  With ``prune_at``, centres
        whose cheap (provable) lower bound already reaches it skip the sampled
        psi; their lower bound is then valid but possibly less tight.
        """
        if mode not in PSI_MODES:
            raise ValueError(f"unknown psi mode {mode!r}; expected one of {PSI_MODES}")
        centers = np.asarray(centers, dtype=float)
        single = centers.ndim == 1
        cs = np.atleast_2d(centers)
        n_c = cs.shape[0]
        shift = self._shift_cached(half_side)
        g0 = np.empty((n_c, self.stack.size))
        psi = np.ones((n_c, self.stack.size))
        grad = np.zeros((n_c, 3))
        curv = np.zeros(n_c)
        h0s = []
        for k, (g, w, c, ortho) in enumerate(self._parts):
            x0 = self._moved(k, cs)                                   # (K, m, 3)
            sq = _dot(x0, x0)
            rho = np.sqrt(1.0 + sq)
            u = tilde_rows(x0)
            s = _dot(u, c)
            h0 = u * s[..., None]
            h0s.append(h0)
            r = w - h0
            g0[:, g.index] = _dot(r, r)
            if mode != "vertex":
                psi[:, g.index] = np.minimum(1.0, shift[g.index] / rho)
                grad_x = (c - h0)[..., :3] / rho[..., None]
                v = (s[..., None] * grad_x).reshape(n_c, -1)
                grad -= 2.0 * (v @ ortho.reshape(-1, 3))
                nearest = np.maximum(0.0, np.sqrt(sq) - shift[g.index])
                curv += np.sum(HESSIAN_CONSTANT / (1.0 + nearest**2), axis=-1)
        upper = g0.sum(axis=-1)
        root = np.sqrt(g0)
        if mode == "vertex":
            lower = np.zeros(n_c)
            need = np.ones(n_c, dtype=bool)
            sample = np.ones_like(psi, dtype=bool)
        else:
            lower = np.sum(np.maximum(0.0, root - psi) ** 2, axis=-1)
            quad = upper - half_side * np.abs(grad).sum(axis=-1) - 1.5 * curv * half_side**2
            lower = np.maximum(lower, quad)
            sample = psi < np.sin(SAFEGUARD_MAX_ARC)
            need = sample.any(axis=1) if mode == "safeguarded" else np.zeros(n_c, dtype=bool)
            if prune_at is not None:
                need &= lower < prune_at
        if need.any():
            sel = np.flatnonzero(need)
            offsets = _CORNERS if mode == "vertex" else _SAFEGUARD_POINTS
            pts = (cs[sel, None] + half_side * offsets[None]).reshape(-1, 3)
            for k, (g, _, c, _) in enumerate(self._parts):
                uh = tilde_rows(self._moved(k, pts))
                hh = (uh * _dot(uh, c)[..., None]).reshape(len(sel), len(offsets), *uh.shape[1:])
                d = hh - h0s[k][sel, None]
                sampled = np.sqrt(_dot(d, d)).max(axis=1)
                cols = np.ix_(sel, g.index)
                if mode == "vertex":
                    psi[cols] = sampled
                else:
                    psi[cols] = np.where(sample[cols], np.minimum(psi[cols], SAFEGUARD_INFLATION * sampled), psi[cols])
            tight = np.sum(np.maximum(0.0, root[sel] - psi[sel]) ** 2, axis=-1)
            lower[sel] = np.maximum(lower[sel], tight)
        if single:
            return float(lower[0]), float(upper[0])
        return lower, upper


def translation_bounds(cube: TranslationCube, pairs: Sequence[FeaturePair], R: Array,
                       mode: str = "safeguarded") -> tuple[float, float]:
    """(lower, upper) bounds of the summed g-terms over ``cube``."""
    return TranslationProblem(pairs, R).bounds(cube.center, cube.half_side, mode)


@dataclass
class TranslationSearchResult:
    translation: Array
    cost: float
    stats: dict = field(default_factory=dict)


def translation_bnb(
    pairs: Sequence[FeaturePair],
    R: Array,
    inliers: Sequence[int],
    epsilon_t: float = 1e-6,
    center: Array = (0.0, 0.0, 0.0),
    half_side: float = 10.0,
    psi_mode: str = "safeguarded",
    max_queue: int = 2_000_000,
    refine: bool = True,
    batch_size: int = 1,
) -> TranslationSearchResult:
    """Best-first search for the translation minimizing the g-terms of ``inliers``.

    Terminates once the incumbent is within ``epsilon_t`` of the smallest
    queued lower bound.  Local refinement results are only accepted inside
    the initial cube.  ``batch_size`` > 1 expands several cubes per step;
    popped lower bounds are then no longer guaranteed to be non-decreasing.
    """
    inliers = list(inliers)
    if not inliers:
        raise EmptyInlierSet("translation search needs at least one inlier")
    start = time.perf_counter()
    sub = [pairs[i] for i in inliers]
    problem = TranslationProblem(sub, R)
    root = TranslationCube(np.asarray(center, dtype=float), float(half_side))
    root.lower_bound, root.upper_bound = problem.bounds(root.center, root.half_side, psi_mode)
    t_best, e_best = root.center.copy(), root.upper_bound
    order = itertools.count()
    queue = [(root.lower_bound, next(order), root)]
    expanded = evaluations = refinements = 0
    popped_lower: list[float] = []

    def try_refine(t_start: Array) -> None:
        nonlocal t_best, e_best, refinements
        refinements += 1
        t_new, _ = refine_translation(problem.stack, problem.R, t_start)
        if root.contains(t_new):
            e_new = float(problem.cost(t_new))
            if e_new < e_best:
                t_best, e_best = t_new, e_new

    if refine:
        try_refine(t_best)

    while queue and e_best - queue[0][0] >= epsilon_t:
        # The queue minimum drives termination, so batching only changes evaluation order.
        batch = []
        while queue and len(batch) < batch_size and e_best - queue[0][0] >= epsilon_t:
            batch.append(heapq.heappop(queue))
        popped_lower.extend(b[0] for b in batch)
        expanded += len(batch)
        kids = [kid for _, _, cube in batch for kid in cube.children()]
        parent_lower = np.repeat([b[0] for b in batch], 8)
        centers = np.stack([k.center for k in kids])
        lowers, uppers = problem.bounds(centers, kids[0].half_side, psi_mode, prune_at=e_best - epsilon_t)
        evaluations += len(kids)
        # Bounds of the parent remain valid for every sub-cube.
        lowers = np.maximum(lowers, parent_lower)
        k_best = int(np.argmin(uppers))
        if uppers[k_best] < e_best:
            t_best, e_best = kids[k_best].center.copy(), float(uppers[k_best])
            if refine:
                try_refine(kids[k_best].center)
        for kid, kid_lower, upper in zip(kids, lowers, uppers):
            if kid_lower < e_best - epsilon_t:
                kid.lower_bound, kid.upper_bound = float(kid_lower), float(upper)
                heapq.heappush(queue, (kid.lower_bound, next(order), kid))
        if len(queue) > max_queue:
            raise QueueOverflow(f"translation queue exceeded {max_queue} cubes")

    offset = np.max(np.abs(t_best - root.center))
    stats = {
        "cubes_expanded": expanded,
        "bound_evaluations": evaluations,
        "refinements": refinements,
        "wall_time": time.perf_counter() - start,
        "popped_lower_bounds": popped_lower,
        "on_boundary": bool(offset >= root.half_side * (1 - 1e-3)),
    }
    return TranslationSearchResult(t_best, e_best, stats)
