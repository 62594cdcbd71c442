import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.spatial.transform import Rotation

from graffreg.manifold import RigidTransform, line, plane, point

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rotation(rng):
    return Rotation.random(random_state=rng).as_matrix()


def random_transform(rng, box=5.0):
    return RigidTransform(random_rotation(rng), rng.uniform(-box, box, 3))


def random_feature(rng, k, extent=5.0):
    anchor = rng.uniform(-extent, extent, 3)
    if k == 0:
        return point(anchor)
    if k == 1:
        return line(rng.normal(size=3), anchor)
    return plane(rng.normal(size=(2, 3)), anchor)


def rz(deg):
    return Rotation.from_euler("z", deg, degrees=True).as_matrix()


def aligned_pair(rng, kind, T, extent=5.0):
    """Target/source features with target = T(source) exactly (containment for line-plane)."""
    from graffreg.cost import FeaturePair, PairKind
    from graffreg.manifold import apply_transform

    kind = PairKind(kind)
    k_t, k_s = kind.dims
    source = random_feature(rng, k_s, extent)
    moved = apply_transform(T, source)
    if k_t == k_s:
        target = moved
    else:
        # A line lying inside the moved plane.
        anchor = moved.displacement + moved.basis @ rng.uniform(-extent, extent, 2)
        target = line(moved.basis @ rng.normal(size=2), anchor)
    return FeaturePair(kind, target, source)


def axis_angle_cube_samples(rng, center, half_side, n):
    from scipy.spatial.transform import Rotation

    pts = center + rng.uniform(-half_side, half_side, size=(n, 3))
    return Rotation.from_rotvec(np.vstack([center, pts])).as_matrix()


def mixed_pairs(rng, n, R=None, noise=0.0):
    """Pairs of all three kinds; some line-plane pairs nearly perpendicular to exercise the bound case split."""
    from graffreg.cost import FeaturePair, PairKind
    from graffreg.manifold import RigidTransform

    T = RigidTransform(np.eye(3) if R is None else R, np.zeros(3))
    pairs = []
    for i in range(n):
        kind = list(PairKind)[i % 3]
        if rng.random() < 0.5:
            p = aligned_pair(rng, kind, T)
            if noise:
                from graffreg.manifold import apply_transform

                jitter = RigidTransform.from_rotvec(rng.normal(size=3) * noise)
                p = FeaturePair(kind, p.target, apply_transform(jitter, p.source))
        else:
            p = FeaturePair(kind, random_feature(rng, kind.dims[0]), random_feature(rng, kind.dims[1]))
        if kind is PairKind.LINE_PLANE and rng.random() < 0.3:
            # Target direction close to the source plane normal.
            n_vec = p.source.normal() + rng.normal(size=3) * 0.05
            p = FeaturePair(kind, line(T.rotation @ n_vec, p.target.displacement), p.source)
        pairs.append(FeaturePair(kind, p.target, p.source, i))
    return pairs


def count_inliers(pairs, R, eps):
    from graffreg.cost import rotation_residual

    return sum(rotation_residual(p, R) <= eps for p in pairs)


# One PASS/FAIL line per acceptance criterion, repeated in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, ok: bool, detail: str) -> None:
    text = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(text)
    print(text)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for text in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(text)
