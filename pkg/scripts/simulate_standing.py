"""Integrate a two-filament standing wave over several periods and report drifts.

    python3 scripts/simulate_standing.py --r 0.02 --periods 10
"""
import argparse

from filaments import bifurcation as bf
from filaments import dynamics as dyn
from filaments import nash_moser as nm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--r", type=float, default=0.02)
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--periods", type=int, default=10)
    ap.add_argument("--steps", type=int, default=200, help="steps per period")
    args = ap.parse_args()
    cc = dyn.central_configuration(args.n)
    p = bf.solve_branch(cc.omega, [args.r], nm.SolverSchedule())[0]
    if p.excised:
        raise SystemExit(f"r={args.r} is excised at omega={cc.omega}")
    rec = dyn.reconstruct(cc.points, cc.omega, p.field(cc.omega), p.Omega, p.r)
    defect, traj = dyn.periodicity_defect(rec, steps=args.steps, periods=args.periods)
    print(f"omega={cc.omega:.6g} Omega={p.Omega:.12f} periods={args.periods}")
    print(f"periodicity defect {defect:.2e}")
    print(f"energy drift {traj.energy_drift():.2e}, center drift {traj.center_drift():.2e}")
    print(f"min separation {min(traj.separation):.6f}")


if __name__ == "__main__":
    main()
