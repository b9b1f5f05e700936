"""Range-equation solver on doubling Fourier balls, with excision bookkeeping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import brentq

from .fourier_lattice import NormParams, SymmetricField, build_lattice, sigma_norm
from .hamiltonian_ops import (
    Decomposition,
    DefectTooLarge,
    LatticeOperator,
    SpectrumTooClose,
    assemble_hamiltonian,
    assemble_preconditioner,
    conj_multiplication_matrix,
    decay_envelope_ratio,
    multiplier,
    operator_norm_sigma,
    residual,
    _coefficient_map,
    _exp_weights,
)
from .linear_spectrum import (
    KERNEL_SITE,
    EigenBasis,
    bifurcation_frequency,
    cluster_radius,
    eigenvalue,
    kernel_field,
    resonance_frequency,
)


@dataclass(frozen=True)
class SolverSchedule:
    L0: int = 8
    n_max: int = 2
    beta: float = 2.0
    sigma0: float = 0.2
    s_weight: float = 2.0
    kappa: float = 1.5
    d0: float = 0.05
    ell_const: float = 1.0
    band_const: float = 2.0
    newton_per_stage: int = 1
    polish_steps: int = 8
    tol: float = 1e-10
    initial_tol: float = 1e-12
    max_halvings: int = 5

    def __post_init__(self):
        if self.beta <= 1.5:
            raise ValueError("beta must exceed 3/2")
        if self.L0 < 3:
            raise ValueError("L0 must be >= 3 so the kernel mode is resolved")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        if not 1 < self.kappa < 2:
            raise ValueError("kappa must lie in (1, 2)")

    def L(self, n):
        return self.L0 * 2**n

    def d(self, n):
        return self.L(n) ** (-self.beta)

    def gamma(self, n):
        return self.sigma0 / 2 ** (n + 2)

    def sigma(self, n):
        return self.sigma0 - sum(2 * self.gamma(m) for m in range(1, n + 1))

    def ell(self, n):
        return cluster_radius(self.L(n), self.ell_const)

    def norm(self, n):
        return NormParams(self.sigma(n), self.s_weight)

    def band_halfwidth(self, n):
        return self.band_const * self.d(n) / self.L(n)

    def as_dict(self):
        return asdict(self)


class Excised(RuntimeError):
    def __init__(self, record, msg=None):
        super().__init__(msg or f"excised at {record.site} stage {record.stage}")
        self.record = record


class NoContraction(RuntimeError):
    pass


class InitialWindowViolated(ValueError):
    pass


@dataclass
class ExcisionRecord:
    site: tuple
    stage: int
    half_width: float
    r_samples: list = field(default_factory=list)
    center: list = field(default_factory=list)
    doubled: bool = True
    slope: float | None = None
    linear_coef: float | None = None
    quad_coef: float | None = None
    hit: tuple | None = None  # (r, Omega, eigenvalue) when produced by a failed solve

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half-width must be positive")

    def center_at(self, r):
        if not self.center:
            return None
        if len(self.center) == 1:
            return self.center[0]
        # center is even in r: interpolate in r^2
        return float(np.interp(np.square(r), np.square(self.r_samples), self.center))

    def contains(self, r, Omega, doubled=False):
        c = self.center_at(r)
        if c is None:
            return False
        w = self.half_width * (2 if doubled else 1)
        return abs(Omega - c) < w

    def as_dict(self):
        return asdict(self)


@dataclass
class SolveDiagnostics:
    residuals: list = field(default_factory=list)
    dw_norms: list = field(default_factory=list)
    K_norms: list = field(default_factory=list)
    K_terms: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    h1_ratios: list = field(default_factory=list)
    precond_errors: list = field(default_factory=list)
    min_eigs: list = field(default_factory=list)
    excisions: list = field(default_factory=list)
    final_residual: float = math.nan
    kappa_fit: float = math.nan

    def as_dict(self):
        d = asdict(self)
        d["excisions"] = [e if isinstance(e, dict) else asdict(e) for e in d["excisions"]]
        return d


def range_basis(L, Omega, omega):
    """Eigen-coordinates on B_L minus the kernel site; the (1,1) block is pinned at Omega0."""
    sites = [x for x in build_lattice(L) if x != KERNEL_SITE]
    return EigenBasis(sites, Omega, omega, pinned={(1, 1): bifurcation_frequency(omega)})


def ansatz(r, omega, L):
    return kernel_field(omega, L) * r


def _range_residual(r, w, Omega, omega, basis):
    u = ansatz(r, omega, basis.L) + w.resize(basis.L)
    return basis.coords(residual(u, Omega, omega, basis.L))


def fit_kappa(norms, floor=1e-14):
    """Slope of log||dw_{m+1}|| against log||dw_m|| (superlinear when > 1)."""
    x = [math.log(v) for v in norms if v > floor]
    if len(x) < 3:
        return math.nan
    a, b = np.array(x[:-1]), np.array(x[1:])
    return float(np.polyfit(a, b, 1)[0])


def initial_step(r, Omega, omega, schedule=None, w_guess=None, diag=None):
    """Solve the range equation on B_0 by Newton with a dense inverse."""
    sch = SolverSchedule() if schedule is None else schedule
    L0 = sch.L(0)
    basis = range_basis(L0, Omega, omega)
    lam = np.abs(np.diag(basis.diagonal_operator(Omega)))
    floor = sch.d(0)
    if lam.min() <= floor:
        x = basis.sites[int(np.argmin(lam))]
        raise InitialWindowViolated(
            f"initial window violated: |lambda{x}| = {lam.min():.3e} <= {floor:.3e}")
    if r == 0:
        return SymmetricField.zeros(L0)
    p = sch.norm(0)
    y = np.zeros(len(basis)) if w_guess is None else basis.coords(w_guess)
    for it in range(40):
        w = basis.field(y)
        F = _range_residual(r, w, Omega, omega, basis)
        res = sigma_norm(basis.field(F), p)
        if diag is not None:
            diag.residuals.append(res)
            diag.stages.append(0)
        if res <= sch.initial_tol:
            return w
        H, _ = assemble_hamiltonian(ansatz(r, omega, L0) + w, r, Omega, omega, L0, basis)
        dy = -np.linalg.solve(H.mat, F)
        y, _ = _damped_update(y, dy, res, r, Omega, omega, basis, p, sch)
        if diag is not None:
            diag.dw_norms.append(sigma_norm(basis.field(dy), p))
    raise NoContraction("Newton stall in initial step")


def _damped_update(y, dy, res, r, Omega, omega, basis, p, sch):
    t = 1.0
    for _ in range(sch.max_halvings + 1):
        yn = y + t * dy
        Fn = _range_residual(r, basis.field(yn), Omega, omega, basis)
        rn = sigma_norm(basis.field(Fn), p)
        if rn < res or rn <= sch.tol * 1e-3:
            return yn, rn
        t *= 0.5
    raise NoContraction(f"no contraction: residual {res:.3e} not reduced by halving")


def decompose(basis, n, Omega, omega, sch):
    """E_n = B_{n-1} u S_n u A_n for the range sites of B_n."""
    Lp = sch.L(n - 1)
    E = basis.sites
    B_prev = [x for x in E if x.j + x.k < Lp]
    ann = [x for x in E if x.j + x.k >= Lp]
    lam = eigenvalue(np.array([x.j for x in ann]), np.array([x.k for x in ann]),
                     np.array([x.l for x in ann]), Omega, omega) if ann else []
    S = [x for x, v in zip(ann, lam) if abs(v) <= sch.d0]
    if any(x.l == 1 for x in S):
        from .linear_spectrum import ThresholdTooLarge
        raise ThresholdTooLarge("threshold too large: a +1 branch site is singular")
    Sset = set(S)
    A = [x for x in ann if x not in Sset]
    return Decomposition(E, A, B_prev, [[x] for x in S], sch.ell(n))


def _envelope_constant(state, r, omega, p):
    return omega * sigma_norm(state, p) / max(r, 1e-300)


def iterate(r, Omega, omega, schedule=None, w0=None, dense=False, audit=False, diag=None):
    """Doubling-ball approximate Newton iteration for the range equation.

    Returns (w, diagnostics).  Raises Excised when a local block has an
    eigenvalue in the excluded window, DefectTooLarge when the
    preconditioner defect exceeds 3/4, NoContraction on stall.
    """
    sch = SolverSchedule() if schedule is None else schedule
    diag = SolveDiagnostics() if diag is None else diag
    if w0 is None:
        w0 = initial_step(r, Omega, omega, sch, diag=diag)
    w = w0
    if r == 0 and not np.any(w.a) and not np.any(w.b):
        for n in range(1, sch.n_max + 1):
            diag.stages.append(n)
            diag.residuals.append(0.0)
            diag.dw_norms.append(0.0)
        diag.final_residual = 0.0
        return SymmetricField.zeros(sch.L(sch.n_max)), diag

    for n in range(1, sch.n_max + 1):
        Ln = sch.L(n)
        p = sch.norm(n)
        basis = range_basis(Ln, Omega, omega)
        y = basis.coords(w)
        final = n == sch.n_max
        steps = sch.newton_per_stage + (sch.polish_steps if final else 0)
        for it in range(steps):
            wf = basis.field(y)
            F = _range_residual(r, wf, Omega, omega, basis)
            res = sigma_norm(basis.field(F), p)
            diag.stages.append(n)
            diag.residuals.append(res)
            if final and res <= sch.tol and it >= sch.newton_per_stage:
                break
            if res <= 1e-15:
                break
            state = ansatz(r, omega, Ln) + wf
            H, T = assemble_hamiltonian(state, r, Omega, omega, Ln, basis)
            diag.h1_ratios.append(
                decay_envelope_ratio(T, r, _envelope_constant(state, r, omega, p), p))
            if dense:
                dy = -np.linalg.solve(H.mat, F)
            else:
                dec = decompose(basis, n, Omega, omega, sch)
                try:
                    pc = assemble_preconditioner(H, dec, sch.d(n - 1), sch.d(n), p)
                except SpectrumTooClose as e:
                    rec = _record_from_failure(e, n, r, Omega, sch)
                    diag.excisions.append(rec)
                    raise Excised(rec, str(e)) from e
                diag.K_norms.append(pc.norm_K)
                diag.K_terms.append(pc.terms)
                diag.min_eigs.append(pc.min_eigs)
                if pc.G_E is None:
                    raise DefectTooLarge(f"defect too large: ||K|| = {pc.norm_K:.3f}", pc.norm_K)
                dy = -(pc.G_E.mat @ F)
                if audit:
                    G_dense = LatticeOperator(basis.sites, basis.sites, np.linalg.inv(H.mat))
                    err = operator_norm_sigma(pc.G_E - G_dense, p) / operator_norm_sigma(G_dense, p)
                    diag.precond_errors.append(err)
            y, res_new = _damped_update(y, dy, res, r, Omega, omega, basis, p, sch)
            diag.dw_norms.append(sigma_norm(basis.field(dy), p))
        w = basis.field(y)

    Lf = sch.L(sch.n_max)
    basis = range_basis(Lf, Omega, omega)
    F = _range_residual(r, w, Omega, omega, basis)
    diag.final_residual = sigma_norm(basis.field(F), sch.norm(sch.n_max))
    diag.kappa_fit = fit_kappa(diag.dw_norms)
    if diag.final_residual > sch.tol:
        raise NoContraction(f"no contraction: final residual {diag.final_residual:.3e}")
    return w, diag


def _record_from_failure(err, n, r, Omega, sch):
    core = err.core
    site = tuple(core[0]) if isinstance(core, list) and core else ("B", n - 1)
    return ExcisionRecord(site=site, stage=n, half_width=sch.band_halfwidth(n),
                          hit=(r, Omega, err.eigenvalue))


def solve(r, Omega, omega, schedule=None, w_guess=None, dense=False, audit=False):
    """initial_step followed by iterate."""
    sch = SolverSchedule() if schedule is None else schedule
    diag = SolveDiagnostics()
    w0 = initial_step(r, Omega, omega, sch, w_guess=None if w_guess is None else
                      w_guess.resize(sch.L(0)), diag=diag)
    if w_guess is not None and sch.n_max > 0:
        # keep the higher modes of the guess
        w0 = w0 + (w_guess - w_guess.resize(sch.L(0)).resize(w_guess.L))
    return iterate(r, Omega, omega, sch, w0, dense=dense, audit=audit, diag=diag)


def kernel_component(r, w, Omega, omega, L):
    """<f(v(r) + w), e_{1,1,-1}>."""
    e = kernel_field(omega, L)
    from .fourier_lattice import inner
    u = ansatz(r, omega, L) + w.resize(L)
    return inner(residual(u, Omega, omega, L), e)


# excision neighborhoods ---------------------------------------------------

def _pair_basis(sites_jk):
    """Orthonormal (a, b) coordinates on a set of (j, k) modes."""
    from .fourier_lattice import LatticeSite
    sites, V = [], []
    for (j, k) in sites_jk:
        sites.append(LatticeSite(j, k, 1)); V.append((1.0, 0.0))
        if j >= 1:
            sites.append(LatticeSite(j, k, -1)); V.append((0.0, 1.0))
    b = EigenBasis(sites, 1.0, 1.0)
    b.V = np.array(V)
    return b


class LocalProblem:
    """Local eigenvalue e(r, Omega) of H restricted to the neighborhood of one site."""

    def __init__(self, site, omega, L, ell, state_fn):
        self.site = site
        self.omega = omega
        self.L = L
        jk = sorted({(j, k) for j in range(L) for k in range(L - j)
                     if abs(j - site[0]) + abs(k - site[1]) <= ell and (j, k) != (1, 1)})
        self.basis = _pair_basis(jk)
        self.state_fn = state_fn
        self._cache = {}

    def T(self, r):
        if r not in self._cache:
            st = self.state_fn(r, self.L)
            Hc = multiplier(st, self.omega, 2 * self.L)
            Tc = conj_multiplication_matrix(Hc, self.L)
            Q = _coefficient_map(self.basis, self.L)
            W = _exp_weights(self.L)
            T = Q.T @ (W[:, None] * (Tc @ Q))
            self._cache[r] = 0.5 * (T + T.T)
        return self._cache[r]

    def M(self, Omega):
        n = len(self.basis)
        M = np.zeros((n, n))
        idx = {}
        for i, x in enumerate(self.basis.sites):
            idx[(x.j, x.k, x.l)] = i
        for (j, k, l), i in idx.items():
            B = [[k**2 + 2 * self.omega, -Omega * j], [-Omega * j, k**2]]
            if l == 1:
                M[i, i] = B[0][0]
                if (j, k, -1) in idx:
                    M[i, idx[(j, k, -1)]] = B[0][1]
            else:
                M[i, i] = B[1][1]
                M[i, idx[(j, k, 1)]] = B[1][0]
        return M

    def e(self, r, Omega):
        ev = np.linalg.eigvalsh(self.M(Omega) + self.T(r))
        ref = eigenvalue(self.site[0], self.site[1], -1, Omega, self.omega)
        return float(ev[np.argmin(np.abs(ev - ref))])

    def root(self, r, guess, width=1e-2):
        f = lambda O: self.e(r, O)
        a, b = guess - width, guess + width
        fa, fb = f(a), f(b)
        k = 0
        while fa * fb > 0 and k < 8:
            width *= 2
            a, b = guess - width, guess + width
            fa, fb = f(a), f(b)
            k += 1
        return brentq(f, a, b, xtol=1e-15, rtol=1e-15)


def perturbative_state(omega):
    """r -> r e_{1,1,-1} + r^2 u_2 (order-two branch profile)."""
    from .bifurcation import second_order_profile
    u2 = second_order_profile(omega, 8)

    def fn(r, L):
        return ansatz(r, omega, L) + (r * r) * u2.resize(L)
    return fn


def relevant_sites(omega, stage, schedule, window):
    """-1 sites of the given annulus whose resonance lies in the Omega window."""
    sch = schedule
    lo_r = 0 if stage == 0 else sch.L(stage - 1)
    hi_r = sch.L(stage)
    out = []
    for k in range(hi_r):
        for j in range(1, hi_r - k):
            if not lo_r <= j + k < hi_r or (j, k) == (1, 1):
                continue
            if k == 0:
                continue
            Ojk = resonance_frequency(j, k, omega)
            if window[0] <= Ojk <= window[1]:
                out.append((j, k, -1))
    return out


def excision_neighborhoods(omega, r_max, n, Omega2, schedule=None, n_r=9, state_fn=None,
                           margin=None):
    """Trace Omega_z(r) for the singular sites of annulus n near the branch."""
    sch = SolverSchedule() if schedule is None else schedule
    O0 = bifurcation_frequency(omega)
    hw = sch.band_halfwidth(n)
    span = abs(Omega2) * r_max**2
    margin = 4 * hw + 0.02 * span + 1e-3 if margin is None else margin
    window = (O0 - span - margin, O0 + span + margin)
    state_fn = perturbative_state(omega) if state_fn is None else state_fn
    rs = list(np.linspace(0.0, r_max, n_r))
    recs = []
    for site in relevant_sites(omega, n, sch, window):
        lp = LocalProblem(site, omega, sch.L(n), sch.ell(n), state_fn)
        Ojk = resonance_frequency(site[0], site[1], omega)
        centers = []
        for r in rs:
            centers.append(lp.root(r, centers[-1] if centers else Ojk))
        h = 1e-7
        slope = (lp.e(0.0, Ojk + h) - lp.e(0.0, Ojk - h)) / (2 * h)
        A = np.vstack([np.array(rs), np.array(rs) ** 2]).T
        c = np.array(centers) - centers[0]
        (lin, quad), *_ = np.linalg.lstsq(A, c, rcond=None)
        recs.append(ExcisionRecord(site=tuple(site), stage=n, half_width=hw,
                                   r_samples=rs, center=[float(v) for v in centers],
                                   doubled=True, slope=float(slope),
                                   linear_coef=float(lin), quad_coef=float(quad)))
    return recs


class DegenerateBranch(ValueError):
    pass


def cantor_measure(r0, schedule, Omega2, excisions, omega=None, branch=None, n_grid=20001):
    """Analytic lower bound and swept measure of non-excised amplitudes in [0, r0]."""
    sch = schedule
    if abs(Omega2) < 1e-8:
        raise DegenerateBranch("degenerate branch: Omega2 vanishes")
    if branch is None:
        O0 = bifurcation_frequency(omega)
        branch = lambda r: O0 + Omega2 * r**2
    rs = np.linspace(0.0, r0, n_grid)
    Om = branch(rs)
    bad = np.zeros_like(rs, dtype=bool)
    for rec in excisions:
        c = np.interp(rs**2, np.square(rec.r_samples), rec.center)
        bad |= np.abs(Om - c) < 2 * rec.half_width
    excluded = float(bad.mean() * r0)
    C_beta = (sch.band_const / math.sqrt(abs(Omega2))) * sum(
        sch.L(n) ** (1.5 - sch.beta) for n in range(sch.n_max + 1))
    return {
        "r0": r0,
        "C_beta": C_beta,
        "lower_bound": r0 * (1 - r0 * C_beta),
        "measure": r0 - excluded,
        "excluded": excluded,
        "excluded_fraction": excluded / r0,
        "bound_fraction": r0 * C_beta,
    }
