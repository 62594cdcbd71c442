"""Lengths of the two straight parameter-space curves between 2D lines, against the geodesic.

Usage:
    python3 scripts/curve_report.py [--v1=1,2,-5] [--v2=1,-3,5]
"""

import argparse

from graffreg.curves import closed_geodesic_report


def _vec(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--v1", type=_vec, default=[1.0, 2.0, -5.0])
    parser.add_argument("--v2", type=_vec, default=[1.0, -3.0, 5.0])
    args = parser.parse_args()
    print("      n   to v2      to -v2     sum - pi   shortest - geodesic")
    for n in (10, 100, 1000, 10_000):
        r = closed_geodesic_report(args.v1, args.v2, n)
        print(f"{n:7d}  {r.l_plus:.7f}  {r.l_minus:.7f}  {r.sum_minus_pi:+.2e}  {r.shortest_minus_geodesic:+.2e}")
    print(f"geodesic distance {r.geodesic:.8f}")


if __name__ == "__main__":
    main()
