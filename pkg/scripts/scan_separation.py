"""Singular sites and their separation constant at Omega0 for several omega and radii.

    python3 scripts/scan_separation.py --L 64 128 256
"""
import argparse
import math

from filaments.linear_spectrum import (
    bifurcation_frequency,
    classify_and_cluster,
    cluster_radius,
    diophantine_margin,
)

GOLDEN = (1 + math.sqrt(5)) / 2


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--omega", type=float, nargs="+", default=[0.5, 1.0, math.sqrt(2), GOLDEN])
    ap.add_argument("--L", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--d0", type=float, default=0.05)
    args = ap.parse_args()
    print(f"{'omega':>10} {'L':>5} {'ell':>4} {'#S':>4} {'C':>8} sep  margin(q)")
    for w in args.omega:
        m, q = diophantine_margin(w)
        for L in args.L:
            sc = classify_and_cluster(bifurcation_frequency(w), w, L, args.d0)
            C = sc.separation_constant
            print(f"{w:10.6f} {L:5d} {cluster_radius(L):4d} {len(sc.singular):4d} "
                  f"{C:8.3f} {str(sc.separated()):5} {m:.4f}({q})")


if __name__ == "__main__":
    main()
