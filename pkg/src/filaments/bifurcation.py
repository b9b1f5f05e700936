"""Kernel equation, perturbation coefficients and branch continuation.

Two second-order coefficients are computed:

* `omega2_closed_form` / `PerturbationCoefficients.Omega2`: the reference
  closed form and the recipe that produces it, built from
  u1 = 2 (a cos t + i b sin t) cos s and block_matrix, whose sin sign is
  opposite to the stored basis.
* `omega2_model` / `PerturbationCoefficients.Omega2_model`: the coefficient
  of the residual map actually solved here (see hamiltonian_ops), obtained
  by projecting its order-r^3 equation on the kernel.  This is what solved
  branches follow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .fourier_lattice import SymmetricField, inner, multiply, sigma_norm
from .hamiltonian_ops import linear_part, residual
from .linear_spectrum import (
    bifurcation_frequency,
    block_matrix,
    diophantine_margin,
    kernel_field,
    kernel_vector,
)
from . import nash_moser as nm


def omega2_closed_form(omega):
    w = omega
    return (w**2 / (6 * (w + 1) * (w + 2) * math.sqrt(2 * w + 1))) * (
        4 * w**3 + 29 * w**2 + 33 * w - 6)


def omega2_model(omega):
    """Curvature of the solved branch, normalized by the unit kernel vector."""
    w = omega
    return -(w**2) * (w + 14) / (6 * (w + 1) * (w + 2) * math.sqrt(2 * w + 1))


def _cubic(w):
    return 4 * w**3 + 29 * w**2 + 33 * w - 6


def exceptional_omega0():
    """Unique positive root of 4w^3 + 29w^2 + 33w - 6."""
    x = brentq(_cubic, 0.1, 0.2, xtol=1e-16)
    for _ in range(3):
        x -= _cubic(x) / (12 * x**2 + 58 * x + 33)
    return x


def positive_root_count():
    """Descartes' rule: sign changes of the coefficient sequence."""
    c = [4, 29, 33, -6]
    return sum(1 for a, b in zip(c, c[1:]) if a * b < 0)


# block-wise inverses of the linear part ----------------------------------

def apply_blockwise(u, Omega, omega, inverse=False, drop_kernel=True):
    """Apply M_{j,k}(Omega) (or its inverse on the range) to the (a, b) coefficients."""
    a = np.array(u.a)
    b = np.array(u.b)
    L = u.L
    kv = kernel_vector(omega)
    for j in range(L):
        for k in range(L - j):
            if j == 0:
                lam = k**2 + 2 * omega
                a[0, k] = a[0, k] / lam if inverse else a[0, k] * lam
                continue
            M = block_matrix(j, k, Omega, omega)
            x = np.array([a[j, k], b[j, k]])
            if inverse:
                if (j, k) == (1, 1) and drop_kernel:
                    # invert on the orthogonal complement of the kernel vector
                    vp = np.array([kv[1], -kv[0]]) if Omega > 0 else np.array([kv[1], kv[0]])
                    lam = vp @ M @ vp
                    x = vp * (vp @ x) / lam
                else:
                    x = np.linalg.solve(M, x)
            else:
                x = M @ x
            a[j, k], b[j, k] = x
    return SymmetricField(a, b, L)


def linear_inverse(u, omega):
    """L^{-1} on the range, at Omega0."""
    return apply_blockwise(u, bifurcation_frequency(omega), omega, inverse=True)


def reference_linear_inverse(u, omega):
    """Inverse of block_matrix acting on coefficients of (a cos jt + i b sin jt).

    In stored coordinates this is the model operator with Omega -> -Omega.
    """
    return apply_blockwise(u, -bifurcation_frequency(omega), omega, inverse=True)


def reference_kernel_field(omega, L=3):
    a, b = kernel_vector(omega)
    return SymmetricField.from_entries({(1, 1): (2 * a, -2 * b)}, L)


def time_harmonic_split(u):
    """(j == 0 part, j >= 1 part)."""
    a0 = np.zeros_like(u.a); a0[0] = u.a[0]
    return SymmetricField(a0, None, u.L), u - SymmetricField(a0, None, u.L)


def second_order_profile(omega, L=8):
    """u2 = omega L^{-1} conj(u1)^2, the order-r^2 correction of the model."""
    u1 = kernel_field(omega, L)
    return linear_inverse(omega * multiply(u1.conj(), u1.conj(), L=L), omega)


@dataclass
class PerturbationCoefficients:
    omega: float
    Omega0: float
    a: float
    b: float
    aP: float
    bP: float
    Q: float
    u1: SymmetricField
    u2: SymmetricField
    Omega1: float
    Omega2: float
    Omega2_model: float
    identities: dict = field(default_factory=dict)

    def as_dict(self):
        d = {k: getattr(self, k) for k in ("omega", "Omega0", "a", "b", "aP", "bP", "Q",
                                            "Omega1", "Omega2", "Omega2_model")}
        d["identities"] = dict(self.identities)
        d["u1"] = self.u1.to_json(self.omega)
        d["u2"] = self.u2.to_json(self.omega)
        return d


def perturbation_series(omega, L=8):
    if L < 5:
        raise ValueError("resonance clash: truncation must contain the second harmonics")
    O0 = bifurcation_frequency(omega)
    a, b = kernel_vector(omega)
    Qv = math.sqrt(omega**2 + 8 * omega + 4)
    # second-harmonic (2,2) minus-branch eigenvector at Omega0
    R2 = math.hypot(2 * O0, omega)
    v2 = np.array([R2 - omega, 2 * O0]); v2 /= np.linalg.norm(v2)
    aP, bP = float(v2[0]), float(v2[1])

    # reference recipe
    uP = reference_kernel_field(omega, L)
    uP2 = multiply(uP, uP, L=L)
    uPb = uP.conj()
    dt_pair = inner(uP.i_dt(), uP)
    cube = inner(multiply(multiply(uPb, uPb, L=L), uPb, L=L), uP)
    quad = inner(multiply(uPb, uPb, L=L), uP)
    LinvP = reference_linear_inverse(uP2, omega)
    form = inner(LinvP, uP2)
    z0, z2 = time_harmonic_split(uP2)
    first = inner(reference_linear_inverse(z0, omega), z0)
    Pterm = inner(reference_linear_inverse(z2, omega), z2)
    Omega2 = omega / (2 * a * b) * (cube + 2 * omega * form)

    # model expansion
    u1 = kernel_field(omega, L)
    u1b2 = multiply(u1.conj(), u1.conj(), L=L)
    u2 = linear_inverse(omega * u1b2, omega)
    lin = linear_part(u2, O0, omega)
    order2 = sigma_norm(lin - omega * u1b2)
    if order2 > 1e-12:
        raise AssertionError(f"u2 does not solve the order-r^2 equation ({order2:.2e})")
    literal = linear_inverse(multiply(u1, u1, L=L), omega).conj() * (-omega)
    literal_defect = sigma_norm(linear_part(literal, O0, omega) - omega * u1b2)
    m_dt = inner(u1.i_dt(), u1)
    m_cube = inner(multiply(multiply(u1.conj(), u1.conj(), L=L), u1.conj(), L=L), u1)
    m_form = inner(linear_inverse(u1b2, omega), u1b2)
    Omega2_model = omega * (m_cube - 2 * omega * m_form) / m_dt
    Omega1 = omega * quad / dt_pair if dt_pair else 0.0

    ids = {
        "dt_pair": dt_pair,
        "cube": cube,
        "quad": quad,
        "form": form,
        "first_term": first,
        "P": Pterm,
        "model_dt_pair": m_dt,
        "model_cube": m_cube,
        "model_form": m_form,
        "order2_defect": order2,
        "literal_u2_defect": literal_defect,
    }
    return PerturbationCoefficients(omega, O0, float(a), float(b), aP, bP, Qv, u1, u2,
                                    Omega1, Omega2, Omega2_model, ids)


# branch ------------------------------------------------------------------

@dataclass
class BranchPoint:
    r: float
    Omega: float
    w: SymmetricField | None
    residual: float
    excised: bool = False
    diagnostics: object = None
    excision: object = None
    w_norm: float = math.nan
    h3_failure: bool = False  # the solve itself hit a small divisor

    def field(self, omega):
        """Full solution u = r e_{1,1,-1} + w."""
        L = self.w.L
        return nm.ansatz(self.r, omega, L) + self.w


def profile_coefficient(u, omega):
    """Coefficient of cos s (cos t - i Omega0 sin t) in u (least squares on the (1,1) pair)."""
    O0 = bifurcation_frequency(omega)
    return (u.a[1, 1] + O0 * u.b[1, 1]) / (1 + O0**2)


class DegenerateBranch(ValueError):
    pass


def full_residual(r, w, Omega, omega, schedule):
    L = schedule.L(schedule.n_max)
    u = nm.ansatz(r, omega, L) + w.resize(L)
    return sigma_norm(residual(u, Omega, omega, L), schedule.norm(schedule.n_max))


def solve_point(r, omega, schedule, Omega_guess, w_guess=None, tol=1e-12, max_iter=20,
                audit=False):
    """Secant iteration on the kernel equation, range solved at every frequency."""
    sch = schedule
    L = sch.L(sch.n_max)

    def F(O, wg):
        w, diag = nm.solve(r, O, omega, sch, w_guess=wg, audit=audit)
        return nm.kernel_component(r, w, O, omega, L), w, diag

    O_a = Omega_guess
    f_a, w_a, d_a = F(O_a, w_guess)
    if abs(f_a) <= tol:
        return O_a, w_a, d_a
    O_b = O_a + max(1e-9, 1e-3 * r * r)
    f_b, w_b, d_b = F(O_b, w_a)
    for _ in range(max_iter):
        if abs(f_b) <= tol:
            return O_b, w_b, d_b
        O_c = O_b - f_b * (O_b - O_a) / (f_b - f_a)
        O_a, f_a, w_a = O_b, f_b, w_b
        O_b = O_c
        f_b, w_b, d_b = F(O_b, w_a)
    if abs(f_b) <= 10 * tol:
        return O_b, w_b, d_b
    raise nm.NoContraction(f"kernel equation did not converge at r={r}")


def solve_branch(omega, r_grid, schedule=None, audit=False, bands=()):
    """Solve the bifurcation equation along the given amplitudes."""
    sch = nm.SolverSchedule() if schedule is None else schedule
    coeffs = perturbation_series(omega)
    if abs(coeffs.Omega2_model) < 1e-10:
        raise DegenerateBranch("degenerate branch: curvature vanishes")
    O0 = coeffs.Omega0
    Lf = sch.L(sch.n_max)
    out = []
    prev = None
    for r in sorted(float(x) for x in r_grid):
        if r == 0:
            out.append(BranchPoint(0.0, O0, SymmetricField.zeros(Lf), 0.0, False, w_norm=0.0))
            continue
        guess = O0 + coeffs.Omega2_model * r * r
        wg = (r * r) * coeffs.u2.resize(Lf)
        if prev is not None and prev.w is not None:
            wg = prev.w * (r / prev.r) ** 2
        in_band = [b for b in bands if b.contains(r, guess, doubled=True)]
        try:
            O, w, diag = solve_point(r, omega, sch, guess, wg, audit=audit)
        except nm.Excised as e:
            out.append(BranchPoint(r, guess, None, math.nan, True, None, e.record,
                                   h3_failure=True))
            continue
        res = full_residual(r, w, O, omega, sch)
        bp = BranchPoint(r, O, w, res, False, diag, None, sigma_norm(w, sch.norm(sch.n_max)))
        prev = bp
        if in_band:
            # inside a doubled band: kept for bookkeeping, carries no w
            bp = BranchPoint(r, O, None, res, True, diag, in_band[0], bp.w_norm)
        out.append(bp)
    return out


def fit_curvature(branch, Omega0=None, r_max=0.05):
    pts = [p for p in branch if p.r > 0 and not p.excised and p.r <= r_max + 1e-15]
    if len(pts) < 4:
        raise ValueError("insufficient points for a curvature fit")
    r = np.array([p.r for p in pts])
    y = (np.array([p.Omega for p in pts]) - Omega0) / r**2
    A = np.vstack([np.ones_like(r), r]).T
    (c0, c1), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(c0)


def diophantine_screen(omega, q_max=100):
    m, q = diophantine_margin(omega)
    return {"margin": m, "q": q}
