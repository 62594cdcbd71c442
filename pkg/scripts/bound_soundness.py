"""Count bound violations against dense sampling, for every psi mode and both rotation relaxations.

Usage:
    python3 scripts/bound_soundness.py [--cubes 1000] [--seed 0]
"""

import argparse
import itertools

import numpy as np
from scipy.spatial.transform import Rotation

from graffreg.cost import FeaturePair, PairKind, rotation_residual
from graffreg.manifold import RigidTransform, apply_transform, line, plane
from graffreg.solver.rotation import RotationCube, rotation_lower_bound, rotation_upper_bound
from graffreg.solver.translation import PSI_MODES, TranslationProblem

_unit = np.linspace(-1.0, 1.0, 21)
GRID = np.array(list(itertools.product(_unit, _unit, _unit)))


def _feature(rng, k):
    anchor = rng.uniform(-5, 5, 3)
    return line(rng.normal(size=3), anchor) if k == 1 else plane(rng.normal(size=(2, 3)), anchor)


def _pairs(rng, n, T, noise):
    """Half aligned under T (jittered), half random, all three kinds."""
    out = []
    for i in range(n):
        kind = list(PairKind)[i % 3]
        src = _feature(rng, kind.dims[1])
        if rng.random() < 0.5:
            moved = apply_transform(T, src)
            if kind.dims[0] == kind.dims[1]:
                tgt = moved
            else:
                tgt = line(moved.basis @ rng.normal(size=2), moved.displacement + moved.basis @ rng.normal(size=2))
            jitter = RigidTransform.from_rotvec(rng.normal(size=3) * noise, rng.normal(size=3) * noise)
            src = apply_transform(jitter, src)
        else:
            tgt = _feature(rng, kind.dims[0])
        out.append(FeaturePair(kind, tgt, src, i))
    return out


def rotation_violations(rng, cubes):
    bad = {False: 0, True: 0}
    for _ in range(cubes):
        pairs = _pairs(rng, 9, RigidTransform(Rotation.random(random_state=rng).as_matrix(), np.zeros(3)), 0.01)
        half = float(np.exp(rng.uniform(np.log(1e-3), np.log(np.pi))))
        cube = RotationCube(rng.uniform(-np.pi, np.pi, 3), half)
        eps = float(rng.choice([1e-3, 1e-2, 0.1]))
        rots = Rotation.from_rotvec(cube.center + rng.uniform(-half, half, (100, 3))).as_matrix()
        best = max(sum(rotation_residual(p, R) <= eps for p in pairs) for R in rots)
        lo = rotation_lower_bound(cube, pairs, eps)
        for split in bad:
            bad[split] += not lo <= best <= rotation_upper_bound(cube, pairs, eps, split)
    return bad


def translation_violations(rng, cubes):
    bad = dict.fromkeys(PSI_MODES, 0)
    for _ in range(cubes):
        T = RigidTransform(Rotation.random(random_state=rng).as_matrix(), rng.uniform(-3, 3, 3))
        pairs = _pairs(rng, int(rng.integers(1, 7)), T, 0.02)
        problem = TranslationProblem(pairs, T.rotation)
        half = float(np.exp(rng.uniform(np.log(1e-3), np.log(20.0))))
        center = T.translation + rng.uniform(-2 * half, 2 * half, 3)
        sampled = problem.cost(center + half * GRID).min()
        for mode in PSI_MODES:
            lo, up = problem.bounds(center, half, mode)
            bad[mode] += lo > sampled + 1e-12 or up < sampled - 1e-12
    return bad


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cubes", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    rot = rotation_violations(rng, args.cubes)
    print(f"rotation cubes {args.cubes}: violations plain {rot[False]}, case split {rot[True]}")
    trans = translation_violations(rng, args.cubes // 2)
    print(f"translation cubes {args.cubes // 2}: violations " + ", ".join(f"{m} {n}" for m, n in trans.items()))


if __name__ == "__main__":
    main()
