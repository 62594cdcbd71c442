import numpy as np
import pytest

from conftest import aligned_pair, random_feature, random_rotation, random_transform
from graffreg.cost import FeaturePair, PairKind, total_cost
from graffreg.errors import EmptyInlierSet
from graffreg.manifold import RigidTransform
from graffreg.solver import TranslationCube, TranslationProblem, translation_bnb, translation_bounds
from graffreg.solver.translation import PSI_MODES

KINDS = list(PairKind)
_unit = np.linspace(-1.0, 1.0, 21)
GRID = np.stack(np.meshgrid(_unit, _unit, _unit, indexing="ij"), axis=-1).reshape(-1, 3)


def noisy_instance(rng, n=6, noise=0.02, outliers=0):
    T = random_transform(rng, 3.0)
    pairs = []
    for i in range(n):
        kind = KINDS[i % 3]
        p = aligned_pair(rng, kind, T)
        src = p.source
        from graffreg.manifold import apply_transform

        jitter = RigidTransform.from_rotvec(rng.normal(size=3) * noise, rng.normal(size=3) * noise)
        pairs.append(FeaturePair(kind, p.target, apply_transform(jitter, src), i))
    for j in range(outliers):
        kind = KINDS[j % 3]
        pairs.append(FeaturePair(kind, random_feature(rng, kind.dims[0]), random_feature(rng, kind.dims[1]), n + j))
    return pairs, T


def grid_violation(problem, center, half, mode):
    lower, upper = problem.bounds(center, half, mode)
    sampled = problem.cost(center + half * GRID)
    return lower > sampled.min() + 1e-12 or upper < sampled.min() - 1e-12


def sandwich_counts(rng, n_cubes):
    bad = dict.fromkeys(PSI_MODES, 0)
    for _ in range(n_cubes):
        pairs, T = noisy_instance(rng, n=int(rng.integers(1, 7)))
        R = T.rotation @ RigidTransform.from_rotvec(rng.normal(size=3) * 0.01).rotation
        problem = TranslationProblem(pairs, R)
        half = float(np.exp(rng.uniform(np.log(1e-3), np.log(20.0))))
        center = T.translation + rng.uniform(-2 * half, 2 * half, 3) + rng.normal(size=3)
        for mode in PSI_MODES:
            bad[mode] += grid_violation(problem, center, half, mode)
    return bad


def test_bound_sandwich(rng):
    bad = sandwich_counts(rng, 150)
    assert bad["safeguarded"] == 0 and bad["lipschitz"] == 0


def test_bound_examples(rng):
    pairs, T = noisy_instance(rng, noise=0.0)
    lo, up = translation_bounds(TranslationCube(T.translation, 0.0), pairs, T.rotation)
    assert lo == pytest.approx(up, abs=1e-15) and up < 1e-12
    for mode in PSI_MODES:
        lo, up = translation_bounds(TranslationCube(T.translation + 1.0, 0.0), pairs, T.rotation, mode)
        assert lo == pytest.approx(up, abs=1e-12)
    pairs, T = noisy_instance(rng, noise=0.02)
    lo, up = translation_bounds(TranslationCube(T.translation, 0.5), pairs, T.rotation)
    assert 0.0 <= lo <= up


def test_batched_bounds_match_single(rng):
    pairs, T = noisy_instance(rng)
    problem = TranslationProblem(pairs, T.rotation)
    centers = rng.normal(size=(5, 3)) * 3
    lows, ups = problem.bounds(centers, 0.7)
    for c, lo, up in zip(centers, lows, ups):
        assert problem.bounds(c, 0.7) == (pytest.approx(lo), pytest.approx(up))


def test_fused_bounds_match_components(rng):
    pairs, T = noisy_instance(rng)
    problem = TranslationProblem(pairs, T.rotation)
    centers = T.translation + rng.normal(size=(6, 3))
    for half in (0.01, 0.3, 4.0):
        for mode in PSI_MODES:
            g0 = problem.g_terms(centers)
            psi = problem.psi(centers, half, mode)
            lower = np.sum(np.maximum(0.0, np.sqrt(g0) - psi) ** 2, axis=-1)
            if mode != "vertex":
                lower = np.maximum(lower, problem.quadratic_lower(centers, half))
            lows, ups = problem.bounds(centers, half, mode)
            np.testing.assert_allclose(lows, lower, rtol=1e-9, atol=1e-12, err_msg=f"{mode} {half}")
            np.testing.assert_allclose(ups, g0.sum(axis=-1), rtol=1e-12)


def test_prune_at_only_skips_pruned_cubes(rng):
    pairs, T = noisy_instance(rng)
    problem = TranslationProblem(pairs, T.rotation)
    centers = T.translation + rng.normal(size=(40, 3)) * 0.5
    full, ups = problem.bounds(centers, 0.05)
    for level in np.quantile(full, [0.1, 0.5, 0.9]):
        cheap, ups2 = problem.bounds(centers, 0.05, prune_at=level)
        np.testing.assert_array_equal(ups, ups2)
        assert np.all(cheap <= full + 1e-15)
        # Any bound that got looser still prunes at the requested level.
        looser = cheap < full
        assert np.all(cheap[looser] >= level)
        np.testing.assert_array_equal(cheap >= level, full >= level)


def test_noise_free_recovery(rng):
    for _ in range(5):
        pairs, T = noisy_instance(rng, n=9, noise=0.0)
        res = translation_bnb(pairs, T.rotation, range(9), half_side=8.0)
        err = np.linalg.norm(res.translation - T.translation) / np.linalg.norm(T.translation)
        assert err < 1e-4
        pops = res.stats["popped_lower_bounds"]
        assert all(a <= b for a, b in zip(pops, pops[1:]))
        assert not res.stats["on_boundary"]


def test_zero_translation(rng):
    R = random_rotation(rng)
    T = RigidTransform(R, np.zeros(3))
    pairs = [aligned_pair(rng, KINDS[i % 3], T) for i in range(6)]
    res = translation_bnb(pairs, R, range(6), half_side=4.0)
    assert np.linalg.norm(res.translation) < 1e-6


def test_cube_missing_the_optimum(rng):
    pairs, T = noisy_instance(rng, n=9, noise=0.0)
    center = T.translation + np.array([3.0, 0.0, 0.0])
    res = translation_bnb(pairs, T.rotation, range(9), center=center, half_side=1.0)
    assert res.cost > 1e-6
    assert res.stats["on_boundary"]
    assert np.all(np.abs(res.translation - center) <= 1.0 + 1e-12)
    # Nothing on a grid over the same cube does better.
    grid_min = TranslationProblem(pairs, T.rotation).cost(center + GRID).min()
    assert res.cost <= grid_min + 1e-6


def test_dominates_grid_oracle(rng):
    for _ in range(5):
        pairs, T = noisy_instance(rng, n=int(rng.integers(2, 10)), noise=0.03)
        center, half = T.translation + rng.normal(size=3), 4.0
        res = translation_bnb(pairs, T.rotation, range(len(pairs)), center=center, half_side=half)
        grid_min = TranslationProblem(pairs, T.rotation).cost(center + half * GRID).min()
        assert res.cost <= grid_min + 1e-6


def test_cost_matches_total_cost(rng):
    pairs, T = noisy_instance(rng, noise=0.05)
    problem = TranslationProblem(pairs, T.rotation)
    t = rng.normal(size=3)
    assert float(problem.cost(t)) == pytest.approx(total_cost(pairs, RigidTransform(T.rotation, t)).g_sum, abs=1e-12)


def test_errors(rng):
    pairs, T = noisy_instance(rng)
    with pytest.raises(EmptyInlierSet):
        translation_bnb(pairs, T.rotation, [])
