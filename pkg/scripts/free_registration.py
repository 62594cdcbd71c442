"""Correspondence-free registration of a noisy 20-line query against a 60-line map.

Usage:
    python3 scripts/free_registration.py [--seeds 10] [--kind l2l]
"""

import argparse
import time

from graffreg.cost import PairKind
from graffreg.solver import SolverConfig, register_free
from graffreg.synthetic import SceneConfig, default_epsilon, generate_map_query, rotation_error, translation_error


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--kind", choices=("l2l", "p2p"), default="l2l")
    parser.add_argument("--map-size", type=int, default=60)
    parser.add_argument("--query-size", type=int, default=20)
    parser.add_argument("--angular-noise", type=float, default=0.002)
    parser.add_argument("--noise", type=float, default=0.005)
    args = parser.parse_args()

    print("seed  rot_deg  trans_pct  correct  seconds")
    for seed in range(args.seeds):
        cfg = SceneConfig(n_pairs=args.query_size, feature_kind=PairKind(args.kind), angular_noise=args.angular_noise,
                          noise_sigma=args.noise, rng_seed=seed)
        mq = generate_map_query(cfg, n_map=args.map_size)
        start = time.perf_counter()
        res = register_free(mq.targets, mq.sources, mq.kind, SolverConfig(epsilon_r=default_epsilon(cfg)))
        correct = len({res.matches[k] for k in res.inliers} & set(mq.matches))
        print(f"{seed:4d}  {rotation_error(res.transform.rotation, mq.T_gt.rotation):7.3f}  "
              f"{translation_error(res.transform.translation, mq.T_gt.translation).value:9.3f}  "
              f"{correct:4d}/{args.query_size}  {time.perf_counter() - start:7.1f}")


if __name__ == "__main__":
    main()
