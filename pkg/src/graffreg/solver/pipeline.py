"""End-to-end registration: rotation search, translation search, refinement."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..cost import CostBreakdown, FeaturePair, PairKind, rotation_residual, total_cost, translation_residual
from ..errors import EmptyInlierSet
from ..manifold import AffineSubspace, RigidTransform
from .refine import refine_lm
from .rotation import corr_rotation_bnb, full_rotation_bnb
from .translation import PSI_MODES, translation_bnb


@dataclass(frozen=True)
class SolverConfig:
    epsilon_r: float = 0.015
    epsilon_t: float = 1e-6
    initial_translation_halfside: float | None = None
    translation_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    max_queue: int = 2_000_000
    rng_seed: int = 0
    psi_mode: str = "safeguarded"
    final_refine: bool = True
    trim_factor: float | None = 300.0
    lp_case_split: bool = False
    translation_batch: int = 32

    def __post_init__(self) -> None:
        if self.epsilon_r <= 0 or self.epsilon_t <= 0:
            raise ValueError("thresholds must be positive")
        if self.initial_translation_halfside is not None and self.initial_translation_halfside <= 0:
            raise ValueError("initial_translation_halfside must be positive")
        if self.trim_factor is not None and self.trim_factor <= 1:
            raise ValueError("trim_factor must exceed 1")
        if self.translation_batch < 1:
            raise ValueError("translation_batch must be >= 1")
        if self.psi_mode not in PSI_MODES:
            raise ValueError(f"psi_mode must be one of {PSI_MODES}")


@dataclass
class RegistrationResult:
    transform: RigidTransform
    inliers: list[int]
    final_cost: CostBreakdown
    stats: dict = field(default_factory=dict)
    pairs: list[FeaturePair] | None = None
    matches: list[tuple[int, int]] | None = None


def default_halfside(targets: Sequence[AffineSubspace]) -> float:
    """Diagonal of the bounding box of the target displacements (at least 1)."""
    disp = np.stack([t.displacement for t in targets])
    diag = float(np.linalg.norm(disp.max(axis=0) - disp.min(axis=0)))
    return max(diag, float(np.abs(disp).max()), 1.0)


# Residuals below this are numerically zero; keeps noise-free inliers from being trimmed.
TRIM_FLOOR = 1e-12
MIN_PAIRS = 3


def trim_inconsistent(pairs, inliers, T, factor, history=None):
    """Drop rotation inliers whose translation residual dwarfs the rest.

    A pair can agree with the rotation by chance and still be far off in
    position; left in, it drags the least-squares pose so far that residual
    ratios at that pose no longer single it out.  The pose is therefore
    re-fitted while the worst pair is dropped one at a time down to half of
    the set; at that clean pose every pair within ``factor`` times the
    median residual there is readmitted and the pose refined once more.
    Assumes more than half of the rotation inliers are genuine.
    """
    inliers = list(inliers)
    if len(inliers) <= 2 * MIN_PAIRS:
        return inliers, T
    # Backward elimination: one removal per refit, so each decision is made
    # at a pose already freed from the worst offenders.
    active = list(inliers)
    h = (len(inliers) + 1) // 2
    while len(active) > h:
        g = np.array([translation_residual(pairs[i], T) for i in active])
        active.pop(int(np.argmax(g)))
        T = refine_lm(pairs, active, T, history=history)
    # One readmission pass: iterating would let each readmitted outlier raise
    # the median and pull in the next.
    g = np.array([translation_residual(pairs[i], T) for i in inliers])
    limit = factor * max(float(np.median(g)), TRIM_FLOOR)
    kept = [i for i, gi in zip(inliers, g) if gi <= limit]
    return kept, refine_lm(pairs, kept, T, history=history)


def _finish(pairs, inliers, R, rot_stats, config, start, matches=None) -> RegistrationResult:
    if not inliers:
        raise EmptyInlierSet("rotation search found no inliers")
    half = config.initial_translation_halfside or default_halfside([pairs[i].target for i in inliers])
    trans = translation_bnb(
        pairs, R, inliers,
        epsilon_t=config.epsilon_t,
        center=config.translation_center,
        half_side=half,
        psi_mode=config.psi_mode,
        max_queue=config.max_queue,
        batch_size=config.translation_batch,
    )
    T = RigidTransform(R, trans.translation)
    history: list[float] = []
    if config.final_refine:
        T = refine_lm(pairs, inliers, T, history=history)
        if config.trim_factor is not None:
            inliers, T = trim_inconsistent(pairs, inliers, T, config.trim_factor, history)
        kept = [i for i in inliers if rotation_residual(pairs[i], T.rotation) <= config.epsilon_r]
        inliers = kept or inliers
    cost = total_cost([pairs[i] for i in inliers], T)
    stats = {
        "rotation": {k: v for k, v in rot_stats.items() if k != "popped_upper_bounds"},
        "translation": {k: v for k, v in trans.stats.items() if k != "popped_lower_bounds"},
        "translation_halfside": half,
        "refine_history": history,
        "cubes_expanded": rot_stats["cubes_expanded"] + trans.stats["cubes_expanded"],
        "bound_evaluations": rot_stats["bound_evaluations"] + trans.stats["bound_evaluations"],
        "wall_time": time.perf_counter() - start,
    }
    return RegistrationResult(T, list(inliers), cost, stats, list(pairs), matches)


def register_pairs(pairs: Sequence[FeaturePair], config: SolverConfig = SolverConfig()) -> RegistrationResult:
    """Registration with known (possibly outlier-contaminated) correspondences."""
    start = time.perf_counter()
    rot = corr_rotation_bnb(pairs, config.epsilon_r, config.max_queue, config.lp_case_split)
    return _finish(list(pairs), rot.inliers, rot.rotation, rot.stats, config, start)


def register_free(
    targets: Sequence[AffineSubspace],
    sources: Sequence[AffineSubspace],
    kind: PairKind | str,
    config: SolverConfig = SolverConfig(),
) -> RegistrationResult:
    """Registration without correspondences; matches are (target_idx, source_idx)."""
    start = time.perf_counter()
    kind = PairKind(kind)
    rot = full_rotation_bnb(targets, sources, kind, config.epsilon_r, config.max_queue, config.lp_case_split)
    pairs = [FeaturePair(kind, targets[i], sources[j], n) for n, (i, j) in enumerate(rot.matches)]
    return _finish(pairs, list(range(len(pairs))), rot.rotation, rot.stats, config, start, rot.matches)
