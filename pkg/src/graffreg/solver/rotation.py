"""Inlier-maximizing rotation search over the axis-angle cube [-pi, pi]^3.

For a cube of half-side s centred at rotation vector r0, every rotation in
the cube moves any unit vector by at most sqrt(3) s from where R0 = exp(r0)
puts it.  That gives, per pair, a relaxed residual
max(0, angle(R0) - psi)^2 that cannot exceed the true residual anywhere in
the cube, hence an upper bound on the inlier count; the count at R0 itself
is the lower bound.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from ..cost import FeaturePair, PairKind, rotation_residual
from ..errors import EmptyInput, QueueOverflow
from ..manifold import AffineSubspace
from .refine import refine_rotation
from .stack import PairStack, acute_angle

Array = np.ndarray

SQRT3 = np.sqrt(3.0)
HALF_PI = np.pi / 2
_OCTANTS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))


@dataclass
class RotationCube:
    center: Array
    half_side: float
    upper_bound: int = 0
    lower_bound: int = 0

    def rotation(self) -> Array:
        return Rotation.from_rotvec(self.center).as_matrix()

    def children(self) -> list["RotationCube"]:
        h = self.half_side / 2
        return [RotationCube(self.center + h * o, h) for o in _OCTANTS]


def uncertainty_angle(half_side: float | Array) -> Array:
    return np.minimum(HALF_PI, SQRT3 * np.asarray(half_side, dtype=float))


def relaxed_angles(angles: Array, half_side: float, lp_normal_angles: Array | None = None) -> Array:
    """max(0, angle - psi) with the line-plane case split where normal angles are given.

    For line-plane pairs psi keeps the sqrt(3) s value only while the rotated
    normal stays at least that far from the line direction; otherwise it
    falls back to pi/2.
    """
    psi = np.broadcast_to(uncertainty_angle(half_side), angles.shape).copy()
    if lp_normal_angles is not None:
        near = np.isfinite(lp_normal_angles) & (lp_normal_angles < SQRT3 * half_side)
        psi[near] = HALF_PI
    return np.maximum(0.0, angles - psi)


def rotation_lower_bound(cube: RotationCube, pairs: Sequence[FeaturePair], epsilon: float) -> int:
    R0 = cube.rotation()
    return int(sum(rotation_residual(p, R0) <= epsilon for p in pairs))


def rotation_upper_bound(cube: RotationCube, pairs: Sequence[FeaturePair], epsilon: float,
                         lp_case_split: bool = False) -> int:
    """Upper bound on the inlier count over ``cube``.

    Every residual angle, the line-plane one included, moves by at most
    sqrt(3) s inside the cube, so that is the default relaxation.  With
    ``lp_case_split`` line-plane pairs whose rotated normal comes within
    sqrt(3) s of the line direction are relaxed to pi/2 instead; this is
    also sound but never tighter, and it does not shrink with the cube along
    the rotations that map the normal onto the line.
    """
    R0 = cube.rotation()
    psi = float(uncertainty_angle(cube.half_side))
    count = 0
    for p in pairs:
        angle = np.sqrt(rotation_residual(p, R0))
        bound = psi
        if lp_case_split and p.kind is PairKind.LINE_PLANE:
            normal_angle = acute_angle(R0 @ p.source.normal(), p.target.basis[:, 0])
            if normal_angle < SQRT3 * cube.half_side:
                bound = HALF_PI
        count += max(0.0, angle - bound) ** 2 <= epsilon
    return int(count)


@dataclass
class RotationSearchResult:
    rotation: Array
    inliers: list[int]
    count: int
    f_sum: float
    stats: dict = field(default_factory=dict)
    matches: list[tuple[int, int]] | None = None


def _rotations(centers: Array) -> Array:
    return Rotation.from_rotvec(centers).as_matrix()


class _PairedScorer:
    def __init__(self, pairs: Sequence[FeaturePair], lp_case_split: bool = False):
        self.pairs = pairs
        self.stack = PairStack(pairs)
        self.lp_mask = self.stack.lp_mask
        self.has_lp = lp_case_split and bool(self.lp_mask.any())

    def bounds(self, rotations, half_side, epsilon):
        ang = self.stack.angles(rotations)
        lower = np.sum(ang**2 <= epsilon, axis=-1)
        # For line-plane pairs the residual angle is pi/2 minus the normal angle.
        lp = np.where(self.lp_mask, HALF_PI - ang, np.nan) if self.has_lp else None
        upper = np.sum(relaxed_angles(ang, half_side, lp) ** 2 <= epsilon, axis=-1)
        fsum = np.sum(np.where(ang**2 <= epsilon, ang**2, 0.0), axis=-1)
        return lower, upper, fsum

    def inliers(self, R, epsilon):
        f = self.stack.angles(R) ** 2
        idx = np.flatnonzero(f <= epsilon)
        return idx.tolist(), float(f[idx].sum())

    def refine(self, R, inliers, epsilon):
        sub = PairStack([self.pairs[i] for i in inliers])
        return refine_rotation(sub, R)[0]


class _FreeScorer:
    """All target x source combinations; a source counts once if any target matches it."""

    def __init__(self, targets: Sequence[AffineSubspace], sources: Sequence[AffineSubspace], kind: PairKind,
                 chunk: int = 2_000_000, lp_case_split: bool = False):
        self.kind = kind
        self.lp_case_split = lp_case_split
        self.targets = targets
        self.sources = sources
        probe = [FeaturePair(kind, targets[0], s) for s in sources]
        self.rot_vec = np.stack([p.rotating_vector() for p in probe])      # (M, 3)
        self.fix_vec = np.stack([FeaturePair(kind, t, sources[0]).fixed_vector() for t in targets])  # (N, 3)
        self.chunk = chunk

    def _angles(self, rotations: Array) -> tuple[Array, Array]:
        moved = np.swapaxes(rotations @ self.rot_vec.T, -1, -2)        # (..., M, 3)
        cos = np.abs(moved @ self.fix_vec.T)                             # (..., M, N)
        cos = np.minimum(cos, 1.0)
        ang = np.arctan2(np.sqrt(1.0 - cos**2), cos)
        if self.kind is PairKind.LINE_PLANE:
            return HALF_PI - ang, ang
        return ang, None

    def _per_source(self, rotations: Array, half_side: float, epsilon: float):
        ang, normal_ang = self._angles(rotations)
        best = np.min(ang, axis=-1)
        lower_hit = best**2 <= epsilon
        relaxed = relaxed_angles(ang, half_side, normal_ang if self.lp_case_split else None)
        upper_hit = np.min(relaxed, axis=-1) ** 2 <= epsilon
        return lower_hit, upper_hit, np.where(lower_hit, best**2, 0.0)

    def bounds(self, rotations, half_side, epsilon):
        m = self.rot_vec.shape[0]
        per_rot = m * self.fix_vec.shape[0]
        step = max(1, self.chunk // max(per_rot, 1))
        lows, ups, fs = [], [], []
        for k in range(0, rotations.shape[0], step):
            lo, up, f = self._per_source(rotations[k:k + step], half_side, epsilon)
            lows.append(lo.sum(-1))
            ups.append(up.sum(-1))
            fs.append(f.sum(-1))
        return np.concatenate(lows), np.concatenate(ups), np.concatenate(fs)

    def inliers(self, R, epsilon):
        lo, _, f = self._per_source(R[None], 0.0, epsilon)
        return np.flatnonzero(lo[0]).tolist(), float(f.sum())

    def refine(self, R, inliers, epsilon):
        matches = find_correspondences(self.targets, self.sources, R, epsilon, kind=self.kind)
        if not matches:
            return R
        pairs = [FeaturePair(self.kind, self.targets[i], self.sources[j]) for i, j in matches]
        return refine_rotation(PairStack(pairs), R)[0]


def _search(scorer, epsilon: float, max_queue: int, initial_half_side: float = np.pi, batch_size: int = 32):
    start = time.perf_counter()
    order = itertools.count()
    root = RotationCube(np.zeros(3), initial_half_side)
    R_best = np.eye(3)
    lo, up, fs = scorer.bounds(R_best[None], root.half_side, epsilon)
    best_count, best_f = int(lo[0]), float(fs[0])
    root.lower_bound, root.upper_bound = best_count, int(up[0])
    queue = [(-root.upper_bound, next(order), root)]
    expanded = evaluations = refinements = 0
    popped_upper: list[int] = []

    while queue and -queue[0][0] > best_count:
        # Expand cubes tied on the top upper bound in one vectorized call;
        # children never exceed their parent, so pops stay non-increasing.
        top = queue[0][0]
        batch = []
        while queue and len(batch) < batch_size and queue[0][0] == top:
            batch.append(heapq.heappop(queue))
        popped_upper.extend(-b[0] for b in batch)
        expanded += len(batch)
        kids = [kid for _, _, cube in batch for kid in cube.children()]
        parent_upper = np.repeat([-b[0] for b in batch], 8)
        centers = np.stack([k.center for k in kids])
        rots = _rotations(centers)
        lower, upper, fsum = scorer.bounds(rots, kids[0].half_side, epsilon)
        evaluations += len(kids)
        # A sub-cube can never admit more inliers than its parent.
        upper = np.minimum(upper, parent_upper)
        k = int(np.lexsort((fsum, -lower))[0])
        if lower[k] > best_count or (lower[k] == best_count and fsum[k] < best_f):
            improved = lower[k] > best_count
            R_best, best_count, best_f = rots[k], int(lower[k]), float(fsum[k])
            if improved:
                inl, _ = scorer.inliers(R_best, epsilon)
                R_ref = scorer.refine(R_best, inl, epsilon)
                refinements += 1
                inl_ref, f_ref = scorer.inliers(R_ref, epsilon)
                if len(inl_ref) > best_count or (len(inl_ref) == best_count and f_ref < best_f):
                    R_best, best_count, best_f = R_ref, len(inl_ref), f_ref
        for kid, lo, up in zip(kids, lower, upper):
            if up > best_count:
                kid.lower_bound, kid.upper_bound = int(lo), int(up)
                heapq.heappush(queue, (-kid.upper_bound, next(order), kid))
        if len(queue) > max_queue:
            raise QueueOverflow(f"rotation queue exceeded {max_queue} cubes; epsilon may be too small")

    inliers, f_sum = scorer.inliers(R_best, epsilon)
    stats = {
        "cubes_expanded": expanded,
        "bound_evaluations": evaluations,
        "refinements": refinements,
        "wall_time": time.perf_counter() - start,
        "popped_upper_bounds": popped_upper,
    }
    return R_best, inliers, f_sum, stats


def corr_rotation_bnb(pairs: Sequence[FeaturePair], epsilon: float, max_queue: int = 2_000_000,
                      lp_case_split: bool = False) -> RotationSearchResult:
    """Rotation search with known correspondences."""
    if not pairs:
        raise EmptyInput("rotation search needs at least one pair")
    R, inliers, f_sum, stats = _search(_PairedScorer(pairs, lp_case_split), epsilon, max_queue)
    return RotationSearchResult(R, inliers, len(inliers), f_sum, stats)


def full_rotation_bnb(
    targets: Sequence[AffineSubspace],
    sources: Sequence[AffineSubspace],
    kind: PairKind,
    epsilon: float,
    max_queue: int = 2_000_000,
    lp_case_split: bool = False,
) -> RotationSearchResult:
    """Rotation search without correspondences, followed by greedy matching."""
    if not targets or not sources:
        raise EmptyInput("rotation search needs non-empty target and source sets")
    kind = PairKind(kind)
    R, _, f_sum, stats = _search(_FreeScorer(targets, sources, kind, lp_case_split=lp_case_split), epsilon, max_queue)
    matches = find_correspondences(targets, sources, R, epsilon, kind=kind)
    return RotationSearchResult(R, list(range(len(matches))), len(matches), f_sum, stats, matches)


def rotation_bnb(pairs, config, correspondences_known: bool = True, targets=None, sources=None, kind=None):
    """Dispatch to the correspondence-based or correspondence-free search."""
    if correspondences_known:
        return corr_rotation_bnb(pairs, config.epsilon_r, config.max_queue, config.lp_case_split)
    return full_rotation_bnb(targets, sources, kind, config.epsilon_r, config.max_queue, config.lp_case_split)


def find_correspondences(
    targets: Sequence[AffineSubspace],
    sources: Sequence[AffineSubspace],
    R: Array,
    epsilon: float,
    kind: PairKind | str | None = None,
) -> list[tuple[int, int]]:
    """Greedy one-to-one matching by ascending rotation residual under R.

    Returns (target_idx, source_idx) tuples sorted by target index.
    """
    if not targets or not sources:
        return []
    if kind is None:
        kind = PairKind.from_dims(targets[0].dim_sub, sources[0].dim_sub)
    kind = PairKind(kind)
    scorer = _FreeScorer(targets, sources, kind)
    ang, _ = scorer._angles(np.asarray(R, dtype=float)[None])
    f = ang[0] ** 2  # (M sources, N targets)
    order = np.argsort(f, axis=None, kind="stable")
    used_t, used_s, out = set(), set(), []
    for flat in order:
        j, i = divmod(int(flat), f.shape[1])
        if f[j, i] > epsilon:
            break
        if i in used_t or j in used_s:
            continue
        used_t.add(i)
        used_s.add(j)
        out.append((i, j))
    return sorted(out)
