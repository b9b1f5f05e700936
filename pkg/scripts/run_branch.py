"""Solve standing-wave branches on an amplitude grid and tabulate Omega(r).

    python3 scripts/run_branch.py --omega 1 1.4142135623730951 --rmax 0.05 --nr 8
"""
import argparse
import math

import numpy as np

from filaments import bifurcation as bf
from filaments import nash_moser as nm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--omega", type=float, nargs="+", default=[1.0, math.sqrt(2)])
    ap.add_argument("--rmax", type=float, default=0.05)
    ap.add_argument("--nr", type=int, default=8)
    args = ap.parse_args()
    sch = nm.SolverSchedule()
    for w in args.omega:
        pc = bf.perturbation_series(w)
        bands = [b for n in range(sch.n_max + 1)
                 for b in nm.excision_neighborhoods(w, args.rmax, n, pc.Omega2_model, sch)]
        br = bf.solve_branch(w, np.linspace(0, args.rmax, args.nr), sch, bands=bands)
        print(f"# omega={w:.10g} Omega0={pc.Omega0:.12f} model curvature={pc.Omega2_model:.6f} "
              f"closed form={pc.Omega2:.6f} bands={[b.site for b in bands]}")
        print(f"{'r':>8} {'Omega':>16} {'(O-O0)/r^2':>12} {'residual':>10} {'max K':>7} flag")
        for p in br:
            d = p.diagnostics
            K = max(d.K_norms) if d and d.K_norms else math.nan
            q = (p.Omega - pc.Omega0) / p.r**2 if p.r else math.nan
            flag = "h3" if p.h3_failure else ("band" if p.excised else "")
            print(f"{p.r:8.4f} {p.Omega:16.12f} {q:12.6f} {p.residual:10.1e} {K:7.3f} {flag}")
        try:
            print(f"# fitted curvature {bf.fit_curvature(br, pc.Omega0, args.rmax):.6f}")
        except ValueError as e:
            print(f"# {e}")


if __name__ == "__main__":
    main()
