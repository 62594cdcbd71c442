"""Synthetic PnL benchmark: 100 image lines, 80% outliers, one pixel of noise.

Prints one line per seed and the medians.  Usage:
    python3 scripts/run_pnl_benchmark.py [--seeds 20] [--pixel-noise 1.0]
"""

import argparse
import time

import numpy as np

from graffreg.solver import SolverConfig, register_pairs
from graffreg.synthetic import SceneConfig, default_epsilon, generate_pnl_scene, rotation_error, translation_error


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--n-pairs", type=int, default=100)
    parser.add_argument("--outlier-ratio", type=float, default=0.8)
    parser.add_argument("--pixel-noise", type=float, default=1.0)
    args = parser.parse_args()

    rot, trans, recalled = [], [], []
    total = time.perf_counter()
    print("seed  rot_deg  trans_pct  inliers  recall  seconds")
    for seed in range(args.seeds):
        cfg = SceneConfig(n_pairs=args.n_pairs, outlier_ratio=args.outlier_ratio, pixel_noise=args.pixel_noise,
                          rng_seed=seed)
        sc = generate_pnl_scene(cfg)
        start = time.perf_counter()
        res = register_pairs(sc.pairs, SolverConfig(epsilon_r=default_epsilon(cfg, "pnl")))
        rot.append(rotation_error(res.transform.rotation, sc.T_gt.rotation))
        trans.append(translation_error(res.transform.translation, sc.T_gt.translation).value)
        recalled.append(set(np.flatnonzero(sc.inlier_mask)) <= set(res.inliers))
        print(f"{seed:4d}  {rot[-1]:7.3f}  {trans[-1]:9.3f}  {len(res.inliers):7d}  {recalled[-1]!s:6}  "
              f"{time.perf_counter() - start:7.1f}")
    print(f"median rotation {np.median(rot):.3f} deg, median translation {np.median(trans):.3f} %, "
          f"full recall {np.mean(recalled):.0%}, total {time.perf_counter() - total:.0f} s")


if __name__ == "__main__":
    main()
