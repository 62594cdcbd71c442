import numpy as np
import pytest

from conftest import aligned_pair, random_feature, random_rotation, random_transform
from graffreg.cost import (
    CostBreakdown,
    FeaturePair,
    PairKind,
    affine_cost,
    make_pairs,
    rotation_residual,
    total_cost,
    translation_residual,
)
from graffreg.errors import DimensionMismatch, MixedAmbientDims
from graffreg.manifold import (
    AffineSubspace,
    RigidTransform,
    apply_transform,
    embed,
    grassmann_distance,
    line,
    plane,
)

e1, e2, e3 = np.eye(3)
KINDS = list(PairKind)
I = RigidTransform.identity(3)


def test_examples():
    l = line(e1, [0.0, 1.0, 0.0])
    assert total_cost([FeaturePair.of(l, l)], I).total < 1e-30
    # Moved line passes through (0, 2, 0); hand projection in R^4 gives 1 - 9/10.
    g = translation_residual(FeaturePair.of(l, l), RigidTransform(np.eye(3), [0.0, 1.0, 0.0]))
    assert g == pytest.approx(0.1, abs=1e-15)
    p = plane([e1, e2], [0, 0, 1.0])
    assert total_cost([FeaturePair.of(p, p)], I).total == pytest.approx(0.0, abs=1e-30)
    c = total_cost([FeaturePair.of(line(e1, np.zeros(3)), line(e2, np.zeros(3)))], I)
    assert c.f_sum == pytest.approx(1.0) and c.g_sum == pytest.approx(0.0, abs=1e-30)
    assert c.total == pytest.approx(1.0)
    assert total_cost([], I).total == 0.0


def test_pair_validation():
    with pytest.raises(DimensionMismatch):
        FeaturePair(PairKind.LINE_PLANE, plane([e1, e2], np.zeros(3)), line(e1, np.zeros(3)))
    with pytest.raises(DimensionMismatch):
        FeaturePair.of(plane([e1, e2], np.zeros(3)), line(e1, np.zeros(3)))
    with pytest.raises(DimensionMismatch):
        make_pairs([line(e1, np.zeros(3))], [])
    with pytest.raises(DimensionMismatch):
        affine_cost(plane([e1, e2], np.zeros(3)), line(e1, np.zeros(3)), I)


def test_mixed_ambient_dims():
    l4 = AffineSubspace(np.eye(4)[:, :1], np.zeros(4))
    with pytest.raises(MixedAmbientDims):
        affine_cost(line(e1, np.zeros(3)), l4, I)


def test_rotation_residual_is_squared_angle():
    R = RigidTransform.from_rotvec([0, 0, 0.3]).rotation
    pair = FeaturePair.of(line(e1, np.zeros(3)), line(e1, np.zeros(3)))
    assert rotation_residual(pair, R) == pytest.approx(0.09, abs=1e-12)
    pp = FeaturePair.of(plane([e1, e2], np.zeros(3)), plane([e1, e2], np.zeros(3)))
    Rx = RigidTransform.from_rotvec([0.2, 0, 0]).rotation
    assert rotation_residual(pp, Rx) == pytest.approx(0.04, abs=1e-12)
    # Line at 0.25 rad out of the plane z = 0.
    d = np.array([np.cos(0.25), 0.0, np.sin(0.25)])
    lp = FeaturePair.of(line(d, np.zeros(3)), plane([e1, e2], np.zeros(3)))
    assert rotation_residual(lp, np.eye(3)) == pytest.approx(0.0625, abs=1e-12)


def test_line_perpendicular_to_plane_is_right_angle():
    lp = FeaturePair.of(line(e3, np.zeros(3)), plane([e1, e2], np.zeros(3)))
    assert rotation_residual(lp, np.eye(3)) == pytest.approx((np.pi / 2) ** 2)


@pytest.mark.parametrize("kind", KINDS)
def test_noise_free_ground_truth_is_zero(rng, kind):
    for _ in range(50):
        T = random_transform(rng)
        pairs = [aligned_pair(rng, kind, T) for _ in range(8)]
        assert total_cost(pairs, T).total < 1e-16
        assert all(rotation_residual(p, T.rotation) < 1e-14 for p in pairs)


@pytest.mark.parametrize("kind", KINDS)
def test_projection_form_matches_sine_of_angle(rng, kind):
    for _ in range(200):
        p = FeaturePair(kind, random_feature(rng, kind.dims[0]), random_feature(rng, kind.dims[1]))
        R = random_rotation(rng)
        f = total_cost([p], RigidTransform(R, np.zeros(3))).f_sum
        assert f == pytest.approx(np.sin(np.sqrt(rotation_residual(p, R))) ** 2, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_f_depends_only_on_rotation(rng, kind):
    pairs = [FeaturePair(kind, random_feature(rng, kind.dims[0]), random_feature(rng, kind.dims[1])) for _ in range(10)]
    R = random_rotation(rng)
    a = total_cost(pairs, RigidTransform(R, np.zeros(3)))
    b = total_cost(pairs, RigidTransform(R, rng.normal(size=3) * 10))
    assert np.array_equal(a.f_terms, b.f_terms)


def test_residual_ranges(rng):
    for _ in range(500):
        kind = KINDS[rng.integers(3)]
        p = FeaturePair(kind, random_feature(rng, kind.dims[0], 50.0), random_feature(rng, kind.dims[1], 50.0))
        T = random_transform(rng, 50.0)
        c = total_cost([p], T)
        assert 0.0 <= c.g_sum <= 2.0 + 1e-12
        assert 0.0 <= c.f_sum <= 1.0 + 1e-12
        assert 0.0 <= rotation_residual(p, T.rotation) <= (np.pi / 2) ** 2 + 1e-12


def _reparametrize(rng, s: AffineSubspace) -> AffineSubspace:
    """Same affine subspace: mixed/negated basis and a different anchor."""
    k = s.dim_sub
    Q, _ = np.linalg.qr(rng.normal(size=(k, k)))
    Q[:, 0] *= -1
    anchor = s.displacement + s.basis @ rng.uniform(-20, 20, k)
    return AffineSubspace.from_raw(s.basis @ Q, anchor)


@pytest.mark.parametrize("kind", KINDS)
def test_representation_invariance(rng, kind):
    for _ in range(100):
        p = FeaturePair(kind, random_feature(rng, kind.dims[0]), random_feature(rng, kind.dims[1]))
        q = FeaturePair(kind, _reparametrize(rng, p.target), _reparametrize(rng, p.source))
        T = random_transform(rng)
        a, b = total_cost([p], T), total_cost([q], T)
        assert np.allclose(a.f_terms, b.f_terms, atol=1e-10)
        assert np.allclose(a.g_terms, b.g_terms, atol=1e-10)
        assert rotation_residual(p, T.rotation) == pytest.approx(rotation_residual(q, T.rotation), abs=1e-10)


def summed_distance(pairs, T) -> float:
    return sum(grassmann_distance(embed(p.target), embed(apply_transform(T, p.source))) ** 2 for p in pairs)


def equivalence_instance(rng, kind, mode):
    T = random_transform(rng)
    pairs = [aligned_pair(rng, kind, T) for _ in range(5)]
    if mode == "exact":
        return pairs, T
    if mode == "near":
        return pairs, T @ RigidTransform.from_rotvec(rng.normal(size=3) * 1e-4, rng.normal(size=3) * 1e-4)
    return [FeaturePair(kind, random_feature(rng, kind.dims[0]), random_feature(rng, kind.dims[1])) for _ in range(5)], T


def check_equivalence(rng, kind, n):
    mismatches = 0
    for i in range(n):
        pairs, T = equivalence_instance(rng, kind, ("exact", "near", "random")[i % 3])
        zero_cost = total_cost(pairs, T).total < 1e-12
        zero_dist = summed_distance(pairs, T) < 1e-10
        mismatches += zero_cost != zero_dist
    return mismatches


@pytest.mark.parametrize("kind", KINDS)
def test_zero_cost_iff_zero_distance(rng, kind):
    assert check_equivalence(rng, kind, 150) == 0


def test_breakdown_sums():
    c = CostBreakdown.from_terms([0.5, 0.25], [0.125])
    assert (c.f_sum, c.g_sum, c.total) == (0.75, 0.125, 0.875)
