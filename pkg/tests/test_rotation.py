import itertools

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from conftest import axis_angle_cube_samples, count_inliers, mixed_pairs, random_rotation
from graffreg.cost import FeaturePair, PairKind, rotation_residual
from graffreg.errors import EmptyInput, QueueOverflow
from graffreg.manifold import line, plane
from graffreg.solver import (
    RotationCube,
    corr_rotation_bnb,
    find_correspondences,
    full_rotation_bnb,
    rotation_lower_bound,
    rotation_upper_bound,
)
from graffreg.solver.rotation import _PairedScorer, relaxed_angles
from graffreg.synthetic import SceneConfig, generate_scene, rotation_error

e1, e2, e3 = np.eye(3)
LL = PairKind.LINE_LINE


def rotation_about(axis, angle):
    return Rotation.from_rotvec(np.asarray(axis, dtype=float) * angle).as_matrix()


def test_upper_bound_examples():
    d = rotation_about(e3, 0.3) @ e1
    pair = FeaturePair(LL, line(d, np.zeros(3)), line(e1, np.zeros(3)))
    cube = RotationCube(np.zeros(3), 0.1)
    assert (0.3 - np.sqrt(3) * 0.1) ** 2 == pytest.approx(0.01608, abs=1e-5)
    assert rotation_upper_bound(cube, [pair], 0.01) == 0
    # Saturated uncertainty angle counts everything.
    assert rotation_upper_bound(RotationCube(np.zeros(3), 1.0), [pair] * 5, 1e-9) == 5
    # A zero-size cube collapses the bounds together.
    for eps in (0.05, 0.1):
        point_cube = RotationCube(np.zeros(3), 0.0)
        assert rotation_upper_bound(point_cube, [pair], eps) == rotation_lower_bound(point_cube, [pair], eps)


def test_dense_sampling_confirms_example():
    d = rotation_about(e3, 0.3) @ e1
    pair = FeaturePair(LL, line(d, np.zeros(3)), line(e1, np.zeros(3)))
    rng = np.random.default_rng(0)
    rots = axis_angle_cube_samples(rng, np.zeros(3), 0.1, 20_000)
    assert all(rotation_residual(pair, R) > 0.01 for R in rots)


def test_lower_bound_examples(rng):
    R = random_rotation(rng)
    aligned = [FeaturePair(LL, line(R @ v, np.zeros(3)), line(v, np.zeros(3))) for v in rng.normal(size=(6, 3))]
    cube = RotationCube(Rotation.from_matrix(R).as_rotvec(), 0.2)
    assert rotation_lower_bound(cube, aligned, 1e-12) == 6
    far = [FeaturePair(LL, line(e1, np.zeros(3)), line(R.T @ e2, np.zeros(3)))]
    assert rotation_lower_bound(cube, far, 0.1) == 0


def test_line_plane_case_split():
    # Line along the plane normal: the plane can swing through the line, so psi falls back to pi/2.
    lp = FeaturePair(PairKind.LINE_PLANE, line(e3, np.zeros(3)), plane([e1, e2], np.zeros(3)))
    cube = RotationCube(np.zeros(3), 0.05)
    assert rotation_upper_bound(cube, [lp], 1e-6, lp_case_split=True) == 1
    assert rotation_lower_bound(cube, [lp], 1e-6) == 0
    # The plain relaxation stays tight: the residual cannot drop below pi/2 - sqrt(3) s.
    assert rotation_upper_bound(cube, [lp], 1e-6) == 0
    ang = np.array([1.2, 1.2])
    assert np.allclose(relaxed_angles(ang, 0.1, np.array([np.nan, 0.1])), [1.2 - np.sqrt(3) * 0.1, 0.0])


def sandwich_violations(rng, n_cubes, lp_case_split, eps_choices=(1e-3, 1e-2, 0.1), samples=100):
    bad = 0
    for _ in range(n_cubes):
        pairs = mixed_pairs(rng, 9, random_rotation(rng))
        half = float(np.exp(rng.uniform(np.log(1e-3), np.log(np.pi))))
        center = rng.uniform(-np.pi, np.pi, 3)
        cube = RotationCube(center, half)
        eps = float(rng.choice(eps_choices))
        lo, up = rotation_lower_bound(cube, pairs, eps), rotation_upper_bound(cube, pairs, eps, lp_case_split)
        best = max(count_inliers(pairs, R, eps) for R in axis_angle_cube_samples(rng, center, half, samples))
        # Vectorized bounds used by the search must agree with the reference ones.
        vlo, vup, _ = _PairedScorer(pairs, lp_case_split).bounds(cube.rotation()[None], half, eps)
        bad += not (lo <= best <= up) or (int(vlo[0]), int(vup[0])) != (lo, up)
    return bad


@pytest.mark.parametrize("lp_case_split", [False, True])
def test_bound_sandwich(rng, lp_case_split):
    assert sandwich_violations(rng, 150, lp_case_split) == 0


def test_plain_bound_never_looser(rng):
    for _ in range(200):
        pairs = mixed_pairs(rng, 9, random_rotation(rng))
        cube = RotationCube(rng.uniform(-np.pi, np.pi, 3), float(rng.uniform(1e-3, 1.0)))
        assert rotation_upper_bound(cube, pairs, 0.01) <= rotation_upper_bound(cube, pairs, 0.01, True)


def test_noise_free_recovery(rng):
    sc = generate_scene(SceneConfig(n_pairs=20, feature_kind=LL, rng_seed=3))
    res = corr_rotation_bnb(sc.pairs, 1e-4)
    assert res.count == 20 and res.inliers == list(range(20))
    assert rotation_error(res.rotation, sc.T_gt.rotation) < 0.1
    pops = res.stats["popped_upper_bounds"]
    assert all(a >= b for a, b in zip(pops, pops[1:]))


def test_outlier_recovery():
    sc = generate_scene(SceneConfig(n_pairs=100, feature_kind=LL, outlier_ratio=0.8, rng_seed=4))
    res = corr_rotation_bnb(sc.pairs, 1e-3)
    assert res.count >= 20
    assert set(np.flatnonzero(sc.inlier_mask)) <= set(res.inliers)
    assert rotation_error(res.rotation, sc.T_gt.rotation) < 0.5


def test_single_pair():
    p = FeaturePair(LL, line(e1, np.zeros(3)), line(e2, np.zeros(3)))
    res = corr_rotation_bnb([p], 1e-6)
    assert res.count == 1 and rotation_residual(p, res.rotation) <= 1e-6


def test_errors():
    with pytest.raises(EmptyInput):
        corr_rotation_bnb([], 1e-3)
    with pytest.raises(EmptyInput):
        full_rotation_bnb([], [line(e1, np.zeros(3))], LL, 1e-3)
    rng = np.random.default_rng(5)
    pairs = [FeaturePair(LL, line(rng.normal(size=3), np.zeros(3)), line(rng.normal(size=3), np.zeros(3))) for _ in range(30)]
    with pytest.raises(QueueOverflow):
        corr_rotation_bnb(pairs, 1e-10, max_queue=50)


def grid_maximum(pairs, eps, n=20):
    axis = (np.arange(n) + 0.5) / n * 2 * np.pi - np.pi
    vecs = np.array(list(itertools.product(axis, axis, axis)))
    scorer = _PairedScorer(pairs)
    lo, _, _ = scorer.bounds(Rotation.from_rotvec(vecs).as_matrix(), 0.0, eps)
    return int(lo.max())


def test_dominates_grid_oracle(rng):
    for _ in range(10):
        pairs = mixed_pairs(rng, int(rng.integers(3, 11)), random_rotation(rng), noise=0.01)
        res = corr_rotation_bnb(pairs, 0.01)
        assert res.count >= grid_maximum(pairs, 0.01)
        assert res.count == count_inliers(pairs, res.rotation, 0.01)


def test_deterministic(rng):
    pairs = mixed_pairs(rng, 10, random_rotation(rng), noise=0.01)
    a, b = corr_rotation_bnb(pairs, 0.01), corr_rotation_bnb(pairs, 0.01)
    assert np.array_equal(a.rotation, b.rotation) and a.inliers == b.inliers


def test_find_correspondences_examples(rng):
    dirs = rng.normal(size=(8, 3))
    feats = [line(d, np.zeros(3)) for d in dirs]
    assert find_correspondences(feats, feats, np.eye(3), 1e-6) == [(i, i) for i in range(8)]
    assert find_correspondences([line(e1, np.zeros(3))], [line(e2, np.zeros(3))], np.eye(3), 0.1) == []
    assert find_correspondences([], feats, np.eye(3), 0.1) == []


def test_find_correspondences_with_distractors(rng):
    R = random_rotation(rng)
    # Well-separated directions so that no distractor is closer than a true mate.
    dirs = np.vstack([np.eye(3), (np.eye(3) + np.roll(np.eye(3), 1, axis=1)) / np.sqrt(2)])
    dirs = np.vstack([dirs, [[1, 1, 1], [1, -1, 1], [-1, 1, 1], [1, 1, -1]]])
    targets = [line(R @ d, np.zeros(3)) for d in dirs]
    sources = [line(d, np.zeros(3)) for d in dirs]
    distractors = [line(R.T @ rotation_about(e3, 0.2 + 0.1 * k) @ e3, np.zeros(3)) for k in range(5)]
    matches = find_correspondences(targets, sources + distractors, R, 1e-4)
    assert matches == [(i, i) for i in range(10)]


def test_free_search_recovers_rotation(rng):
    R = random_rotation(rng)
    dirs = rng.normal(size=(15, 3))
    targets = [line(R @ d, rng.normal(size=3)) for d in dirs]
    sources = [line(d, rng.normal(size=3)) for d in dirs[:8]]
    res = full_rotation_bnb(targets, sources, LL, 1e-4)
    assert rotation_error(res.rotation, R) < 0.1
    assert sorted(res.matches) == [(i, i) for i in range(8)]
