"""Command-line front end.  Every command writes its artifacts and a manifest
into <out>/<command>-<config hash> and prints a short summary.

Exit codes: 0 ok, 2 excised, 3 no contraction, 4 config error, 5 orbit escaped.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_EXCISED, EXIT_NO_CONTRACTION, EXIT_CONFIG, EXIT_ESCAPED = 0, 2, 3, 4, 5
OUT_ENV = "FILAMENTS_OUT"
COMMANDS = ("spectrum", "classify", "branch", "omega2", "excisions", "simulate", "orbits",
            "traveling")
SCENARIOS = ("two-filament-standing", "parallel", "helix", "traveling")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    omega: list = field(default_factory=lambda: [1.0])
    schedule: dict = field(default_factory=dict)
    r0: float = 0.05
    n_r: int = 6
    L: int = 32
    d0: float = 0.05
    sigma: float = 0.1
    s_weight: float = 2.0
    scenario: str = "two-filament-standing"
    r: float = 0.02
    n: int = 2
    periods: int = 1
    steps_per_period: int = 400
    c: float = 1.0
    rho_offset: float = 1e-6
    k: int = 1
    n_amp: int = 6
    seed: int = 0
    out: str = ""

    def validate(self, command):
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        if not self.omega or any(not math.isfinite(w) or w <= 0 for w in self.omega):
            raise ConfigError("omega must be positive and finite")
        if self.r0 < 0 or self.r < 0:
            raise ConfigError("amplitudes must be nonnegative")
        if self.n_r < 1 or self.n_amp < 1:
            raise ConfigError("grid sizes must be >= 1")
        if self.L < 3:
            raise ConfigError("L must be >= 3")
        if self.d0 <= 0:
            raise ConfigError("d0 must be positive")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if command == "orbits" and self.c == 0:
            raise ConfigError("orbits needs c != 0 (c = 0 has only the static equilibrium)")
        from .nash_moser import SolverSchedule
        try:
            self.solver_schedule()
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad schedule: {e}") from None
        known = {f.name for f in dataclasses.fields(SolverSchedule)}
        extra = set(self.schedule) - known
        if extra:
            raise ConfigError(f"unknown schedule fields {sorted(extra)}")

    def solver_schedule(self):
        from .nash_moser import SolverSchedule
        return SolverSchedule(**self.schedule)

    def canonical(self):
        d = dataclasses.asdict(self)
        d.pop("out")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.h = cfg.hash()
        root = Path(cfg.out or os.environ.get(OUT_ENV, "runs"))
        self.dir = root / f"{command}-{self.h[:12]}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.artifacts = []

    def write_json(self, name, obj):
        p = self.dir / name
        p.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
        self.artifacts.append(name)
        return p

    def write_csv(self, name, header, rows):
        p = self.dir / name
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        self.artifacts.append(name)
        return p

    def manifest(self, status):
        import scipy
        m = {
            "command": self.command,
            "config": json.loads(self.cfg.canonical()),
            "config_hash": self.h,
            "status": status,
            "versions": {"filaments": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__},
            "artifacts": {a: _sha(self.dir / a) for a in self.artifacts},
        }
        (self.dir / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
        return m


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# commands ----------------------------------------------------------------

def cmd_spectrum(run, cfg):
    from .fourier_lattice import build_lattice
    from .linear_spectrum import bifurcation_frequency, eigenpair
    rows = []
    for w in cfg.omega:
        O0 = bifurcation_frequency(w)
        for x in build_lattice(cfg.L):
            ep = eigenpair(x, O0, w)
            rows.append([w, O0, x.j, x.k, x.l, ep.lam, ep.vector[0], ep.vector[1]])
    run.write_csv("spectrum.csv", ["omega", "Omega", "j", "k", "l", "lambda", "va", "vb"], rows)
    print(f"{len(rows)} eigenpairs")
    return EXIT_OK


def cmd_classify(run, cfg):
    from .linear_spectrum import bifurcation_frequency, classify_and_cluster, diophantine_margin
    out = {}
    for w in cfg.omega:
        O0 = bifurcation_frequency(w)
        sc = classify_and_cluster(O0, w, cfg.L, cfg.d0)
        d = sc.as_dict()
        d.pop("regular")
        d["n_regular"] = len(sc.regular)
        d["separated"] = sc.separated()
        d["diophantine"] = dict(zip(("margin", "q"), diophantine_margin(w)))
        out[repr(w)] = d
        print(f"omega={w:.10g} singular={[tuple(c) for c in sc.singular]} "
              f"separated={sc.separated()}")
    run.write_json("classification.json", out)
    return EXIT_OK


def cmd_omega2(run, cfg):
    from .bifurcation import omega2_closed_form, perturbation_series
    rows = []
    for w in cfg.omega:
        pc = perturbation_series(w)
        cf = omega2_closed_form(w)
        rows.append([w, cf, pc.Omega2, abs(cf - pc.Omega2), pc.Omega2_model])
        print(f"omega={w:.10g} closed_form={cf:.6f} series={pc.Omega2:.6f} "
              f"diff={abs(cf - pc.Omega2):.1e} branch={pc.Omega2_model:.6f}")
    run.write_csv("omega2.csv", ["omega", "closed_form", "series", "abs_diff", "branch_model"],
                  rows)
    return EXIT_OK


def cmd_branch(run, cfg):
    from .bifurcation import fit_curvature, perturbation_series, solve_branch
    from .nash_moser import cantor_measure, excision_neighborhoods
    sch = cfg.solver_schedule()
    status = EXIT_OK
    summary = {}
    for w in cfg.omega:
        pc = perturbation_series(w)
        bands = []
        for n in range(sch.n_max + 1):
            bands += excision_neighborhoods(w, cfg.r0, n, pc.Omega2_model, sch)
        grid = np.linspace(0.0, cfg.r0, cfg.n_r)
        br = solve_branch(w, grid, sch, bands=bands)
        rows = []
        for p in br:
            d = p.diagnostics
            rows.append([p.r, p.Omega, p.residual, int(p.excised), p.w_norm,
                         max(d.K_norms) if d and d.K_norms else math.nan,
                         d.kappa_fit if d else math.nan])
        run.write_csv(f"branch_{w:.10g}.csv",
                      ["r", "Omega", "residual", "excised", "w_norm", "max_K", "kappa"], rows)
        try:
            fit = fit_curvature(br, pc.Omega0, cfg.r0)
        except ValueError:
            fit = math.nan
        meas = cantor_measure(cfg.r0, sch, pc.Omega2_model, bands, omega=w)
        summary[repr(w)] = {"Omega0": pc.Omega0, "curvature_fit": fit,
                            "curvature_model": pc.Omega2_model,
                            "curvature_closed_form": pc.Omega2, "measure": meas,
                            "excised": [p.r for p in br if p.excised]}
        print(f"omega={w:.10g} Omega0={pc.Omega0:.10f} fitted curvature={fit:.6f} "
              f"excised={summary[repr(w)]['excised']}")
        solved = [p for p in br if p.r > 0 and not p.excised]
        if not solved and any(p.r > 0 for p in br):
            status = EXIT_EXCISED
    run.write_json("branch_summary.json", summary)
    return status


def cmd_excisions(run, cfg):
    from .bifurcation import omega2_model
    from .nash_moser import excision_neighborhoods
    sch = cfg.solver_schedule()
    out = {}
    for w in cfg.omega:
        recs = []
        for n in range(sch.n_max + 1):
            recs += [r.as_dict() for r in excision_neighborhoods(w, cfg.r0, n,
                                                                 omega2_model(w), sch)]
        out[repr(w)] = recs
        print(f"omega={w:.10g} bands={[tuple(r['site']) for r in recs]}")
    run.write_json("excisions.json", out)
    return EXIT_OK


def cmd_simulate(run, cfg):
    from . import dynamics as dyn
    w = cfg.omega[0]
    report = {"scenario": cfg.scenario}
    if cfg.scenario == "two-filament-standing":
        from .bifurcation import solve_branch
        cc = dyn.central_configuration(2)
        br = solve_branch(cc.omega, [cfg.r], cfg.solver_schedule())
        p = br[0]
        if p.excised:
            run.write_json("simulation.json", {"excised": True, "r": cfg.r})
            return EXIT_EXCISED
        rec = dyn.reconstruct(cc.points, cc.omega, p.field(cc.omega), p.Omega, p.r)
        defect, traj = dyn.periodicity_defect(rec, cfg.steps_per_period, cfg.periods)
        report.update(Omega=p.Omega, periodicity_defect=defect,
                      energy_drift=traj.energy_drift(), center_drift=traj.center_drift(),
                      min_separation=min(traj.separation))
    elif cfg.scenario == "parallel":
        cc = dyn.central_configuration(cfg.n)
        report.update(omega=cc.omega, residual=cc.residual,
                      rotation_defect=dyn.rotation_defect(cc))
    elif cfg.scenario == "helix":
        sigma = 1
        cc = dyn.central_configuration(cfg.n)
        ens = dyn.FilamentEnsemble.from_function(
            lambda j, s: cc.points[j] * np.exp(1j * sigma * s), cfg.n, 8)
        T = 2 * np.pi
        traj = dyn.integrate(ens, T, T / cfg.steps_per_period)
        om = cc.omega - sigma**2
        exact = cc.points[:, None] * np.exp(1j * (om * T + sigma * ens.grid()))[None, :]
        report.update(rotation_rate=om,
                      defect=float(np.max(np.abs(traj.final.values() - exact))))
    else:
        from .classical_orbits import traveling_branch, traveling_ensemble
        cc = dyn.central_configuration(cfg.n, R=math.sqrt((cfg.n - 1) / (2 * w)))
        br = traveling_branch(w, cfg.k, [0.0, cfg.r])
        pt = br.points[-1]
        ens, exact = traveling_ensemble(cc.points, cc.omega, pt)
        T = 2 * np.pi / pt.Omega
        traj = dyn.integrate(ens, T, T / cfg.steps_per_period)
        report.update(Omega=pt.Omega,
                      defect=float(np.max(np.abs(traj.final.values() - exact(T, ens.grid())))),
                      energy_drift=traj.energy_drift())
    run.write_json("simulation.json", report)
    print(json.dumps(_plain(report), sort_keys=True))
    return EXIT_OK


def cmd_orbits(run, cfg):
    from .classical_orbits import (RadialOrbitParams, effective_potential, equilibria,
                                   harmonic_period, integrate_radial)
    w = cfg.omega[0]
    p = RadialOrbitParams(cfg.c, w)
    eq = equilibria(cfg.c, w)
    P = harmonic_period(p)
    orbit = integrate_radial(p, (0.0, 10 * P), eq.rho[0] + cfg.rho_offset)
    run.write_csv("orbit.csv", ["theta", "rho"], zip(orbit.theta, orbit.rho))
    info = {"rho": eq.rho, "amplitude": eq.amplitude,
            "dV": [float(effective_potential(r, p)[1]) for r in eq.rho],
            "harmonic_period": P, "period": orbit.period(),
            "energy_drift": orbit.energy_drift(), "outside_validity": orbit.outside_validity}
    run.write_json("equilibria.json", info)
    print(json.dumps(_plain(info), sort_keys=True))
    return EXIT_OK


def cmd_traveling(run, cfg):
    from .classical_orbits import traveling_branch
    w = cfg.omega[0]
    br = traveling_branch(w, cfg.k, np.linspace(0.0, cfg.r0, cfg.n_amp))
    rows = [[p.amplitude, p.Omega, p.residual] for p in br.points]
    run.write_csv("traveling.csv", ["amplitude", "Omega", "residual"], rows)
    print(f"Omega0={br.Omega0:.10f} points={len(rows)} fold={br.fold}")
    return EXIT_OK


HANDLERS = {
    "spectrum": cmd_spectrum, "classify": cmd_classify, "branch": cmd_branch,
    "omega2": cmd_omega2, "excisions": cmd_excisions, "simulate": cmd_simulate,
    "orbits": cmd_orbits, "traveling": cmd_traveling,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="filaments", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with RunConfig fields")
        p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
        p.add_argument("--omega", type=float, nargs="+")
        p.add_argument("--rmax", dest="r0", type=float)
        p.add_argument("--nr", dest="n_r", type=int)
        p.add_argument("--L", type=int)
        p.add_argument("--d0", type=float)
        p.add_argument("--scenario")
        p.add_argument("--r", type=float)
        p.add_argument("--n", type=int)
        p.add_argument("--steps", dest="steps_per_period", type=int)
        p.add_argument("--c", type=float)
        p.add_argument("--k", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--schedule", help="JSON object of solver schedule overrides")
    return ap


def load_config(args):
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown config fields {sorted(extra)}")
    for name in known - {"schedule"}:
        v = getattr(args, name, None)
        if v is not None:
            data[name] = v
    if args.schedule:
        try:
            extra_sched = json.loads(args.schedule)
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad schedule JSON: {e}") from None
        if not isinstance(extra_sched, dict):
            raise ConfigError("schedule must be a JSON object")
        data["schedule"] = {**data.get("schedule", {}), **extra_sched}
    if isinstance(data.get("omega"), (int, float)):
        data["omega"] = [data["omega"]]
    try:
        cfg = RunConfig(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    cfg.validate(args.command)
    return cfg


def run(command, cfg):
    """Dispatch one command; returns the exit status."""
    from .hamiltonian_ops import DefectTooLarge
    from .classical_orbits import NoEquilibria, OrbitEscaped
    from .nash_moser import Excised, NoContraction
    np.random.seed(cfg.seed)
    r = Run(command, cfg)
    try:
        status = HANDLERS[command](r, cfg)
    except Excised as e:
        print(f"excised: {e}", file=sys.stderr)
        status = EXIT_EXCISED
    except (NoContraction, DefectTooLarge) as e:
        print(f"no contraction: {e}", file=sys.stderr)
        status = EXIT_NO_CONTRACTION
    except OrbitEscaped as e:
        print(f"orbit escaped: {e}", file=sys.stderr)
        status = EXIT_ESCAPED
    except NoEquilibria as e:
        print(f"config error: {e}", file=sys.stderr)
        status = EXIT_CONFIG
    r.manifest(status)
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
