"""Relative equilibria by quadrature, helices, Galilean maps and traveling waves.

Radial reduction: c^2 rho'' + c^2 rho - 1/rho + omega/rho^3 = 0, with the
first integral c^2 rho'^2 + V(rho) = E and V = c^2 rho^2 - ln rho^2 - omega rho^-2.

Traveling waves live on the line lattice {(l, lk)}: v = sum_l v_l e^{il(t + ks)}
with real v_l, so no small divisors appear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, root


class NoEquilibria(ValueError):
    pass


class OrbitEscaped(RuntimeError):
    pass


class FoldDetected(RuntimeError):
    pass


@dataclass(frozen=True)
class RadialOrbitParams:
    c: float
    omega: float
    E: float = 0.0

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")


def effective_potential(rho, p):
    """(V, V') at rho > 0."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    c2, w = p.c**2, p.omega
    V = c2 * rho**2 - np.log(rho**2) - w / rho**2
    dV = 2 * c2 * rho - 2 / rho + 2 * w / rho**3
    return V, dV


def potential_curvature(rho, p):
    return 2 * p.c**2 + 2 / rho**2 - 6 * p.omega / rho**4


@dataclass
class Equilibria:
    c: float
    omega: float
    rho: tuple
    amplitude: tuple  # helix amplitudes 1/rho

    def helices(self):
        """(amplitude a, pitch sigma) of u = rho^-1 e^{i(omega t + c rho^2 s)}."""
        return [(1 / r, self.c * r**2) for r in self.rho]


def equilibria(c, omega):
    """Critical points of V: rho_+- with rho^2 = (1 +- sqrt(1 - 4 c^2 omega)) / (2 c^2)."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    if c == 0:
        rho = math.sqrt(omega)
        return Equilibria(c, omega, (rho,), (1 / rho,))
    disc = 1 - 4 * c**2 * omega
    if disc < 0:
        raise NoEquilibria(f"no equilibria: omega >= 1/(4c^2) = {1 / (4 * c * c):.6g}")
    q = math.sqrt(disc)
    rp = math.sqrt((1 + q) / (2 * c**2))
    # small root through the conjugate form to avoid cancellation
    rm = math.sqrt(2 * omega / (1 + q))
    rho = (rp,) if disc == 0 else (rp, rm)
    return Equilibria(c, omega, rho, tuple(1 / r for r in rho))


@dataclass
class RadialOrbit:
    theta: np.ndarray
    rho: np.ndarray
    drho: np.ndarray
    energy: np.ndarray
    params: RadialOrbitParams
    outside_validity: bool = False

    def energy_drift(self):
        return float(np.max(np.abs(self.energy - self.energy[0])))

    def period(self):
        """Mean spacing of successive maxima of rho (nan if fewer than two)."""
        d = self.drho
        idx = np.where((d[:-1] > 0) & (d[1:] <= 0))[0]
        if len(idx) < 2:
            return math.nan
        tz = []
        for i in idx:
            t0, t1 = self.theta[i], self.theta[i + 1]
            tz.append(t0 - d[i] * (t1 - t0) / (d[i + 1] - d[i]))
        return float(np.mean(np.diff(tz)))


def radial_energy(rho, drho, p):
    return p.c**2 * drho**2 + effective_potential(rho, p)[0]


def integrate_radial(p, theta_span, rho0, drho0=0.0, n_out=2001, rtol=1e-13, atol=1e-15,
                     rho_max=1e3):
    """c^2 rho'' = -V'(rho)/2 by an 8th-order Runge-Kutta method."""
    if p.c == 0:
        raise ValueError("the radial equation needs c != 0")
    c2 = p.c**2

    def rhs(th, y):
        return [y[1], -effective_potential(y[0], p)[1] / (2 * c2)]

    def escape(th, y):
        return min(y[0] - 1e-8, rho_max - y[0])
    escape.terminal = True

    th = np.linspace(theta_span[0], theta_span[1], n_out)
    sol = solve_ivp(rhs, theta_span, [rho0, drho0], method="DOP853", t_eval=th,
                    rtol=rtol, atol=atol, events=escape)
    if sol.status == 1:
        raise OrbitEscaped(f"orbit escaped at theta={sol.t_events[0][0]:.6g}")
    if sol.status == -1:
        # step size collapse: the orbit is falling into rho = 0
        raise OrbitEscaped(f"orbit collapsed near theta={sol.t[-1]:.6g}: {sol.message}")
    rho, drho = sol.y
    E = radial_energy(rho, drho, p)
    eq = None
    try:
        eq = equilibria(p.c, p.omega)
    except NoEquilibria:
        pass
    small = eq is not None and len(eq.rho) == 2 and float(rho.min()) < eq.rho[1]
    return RadialOrbit(sol.t, rho, drho, E, p, outside_validity=small)


def harmonic_period(p):
    """Small-oscillation period about rho_+: 2 pi / sqrt(V''(rho_+) / (2 c^2))."""
    rp = equilibria(p.c, p.omega).rho[0]
    return 2 * np.pi / math.sqrt(potential_curvature(rp, p) / (2 * p.c**2))


def potential_roots(p, lo=1e-3, hi=10.0, n=4000):
    """Roots of V' located by sign changes on a log grid and refined by brentq."""
    x = np.geomspace(lo, hi, n)
    d = effective_potential(x, p)[1]
    out = []
    for i in np.where(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]:
        out.append(brentq(lambda r: float(effective_potential(r, p)[1]), x[i], x[i + 1],
                          xtol=1e-15))
    return sorted(out, reverse=True)


# helices and symmetries ---------------------------------------------------

@dataclass(frozen=True)
class Helix:
    """w = a e^{i(omega t + sigma s)}."""

    a: float
    sigma: float
    omega: float

    def values(self, t, s):
        return self.a * np.exp(1j * (self.omega * t + self.sigma * np.asarray(s)))


def helix_omega(a, sigma):
    if a <= 0:
        raise ValueError("a must be positive")
    return -sigma**2 + a**-2


def helix_and_galilei(a, sigma, alpha=None):
    """Helix frequency and its image under e^{-i alpha^2 t} e^{i alpha s} w(t, s - 2 alpha t).

    alpha defaults to -sigma, which straightens the helix.
    """
    om = helix_omega(a, sigma)
    alpha = -sigma if alpha is None else alpha
    image = Helix(a, sigma + alpha, om - alpha**2 - 2 * alpha * sigma)
    return om, image


def scale_helix(h, tau):
    """tau^-1 w(tau^2 t, tau s)."""
    return Helix(h.a / tau, tau * h.sigma, tau**2 * h.omega)


def period_scaling(P):
    """tau mapping an s-period P to 2 pi."""
    return P / (2 * np.pi)


# traveling waves -----------------------------------------------------------

@dataclass
class LineLatticeField:
    """v(theta) = sum_{|l| <= L} v_l e^{il theta}, theta = t + k s; real v_l."""

    k: int
    coeffs: np.ndarray  # index l + L

    @property
    def L(self):
        return (len(self.coeffs) - 1) // 2

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def __call__(self, t, s):
        th = np.asarray(t) + self.k * np.asarray(s)
        l = np.arange(-self.L, self.L + 1)
        return np.exp(1j * np.multiply.outer(th, l)) @ self.coeffs

    @classmethod
    def constant(cls, k, L):
        c = np.zeros(2 * L + 1)
        c[L] = 1.0
        return cls(k, c)


def traveling_frequency(omega, k):
    return abs(k) * math.sqrt(k**2 + 2 * omega)


def traveling_kernel(omega, k):
    """Unit null vector of the (v_1, v_-1) block at Omega_0."""
    O0 = traveling_frequency(omega, k)
    v = np.array([-omega, O0 + k**2 + omega])
    return v / np.linalg.norm(v)


def traveling_residual(c, Omega, omega, k, N=None):
    """Coefficients (l = -L..L) of -i Omega v' - k^2 v'' + omega (1 - |v|^-2) v, complex."""
    L = (len(c) - 1) // 2
    N = 8 * (2 * L + 1) if N is None else N
    l = np.arange(-L, L + 1)
    F = np.zeros(N, dtype=complex)
    F[l % N] = c
    th = 2 * np.pi * np.arange(N) / N
    v = np.fft.ifft(F) * N
    nl = omega * (1 - 1 / np.abs(v) ** 2) * v
    G = np.fft.fft(nl) / N
    return Omega * l * c + k**2 * l**2 * c + G[l % N]


@dataclass
class TravelingPoint:
    amplitude: float
    Omega: float
    field: LineLatticeField
    residual: float
    max_imag: float


@dataclass
class TravelingBranch:
    omega: float
    k: int
    Omega0: float
    points: list = field(default_factory=list)
    fold: float | None = None


def traveling_branch(omega, k, amplitude_grid, L=16, tol=1e-13):
    """Continuation in the kernel amplitude; stops (fold flagged) when Newton fails."""
    O0 = traveling_frequency(omega, k)
    e = traveling_kernel(omega, k)
    br = TravelingBranch(omega, k, O0)
    n = 2 * L + 1
    i1, im1 = L + 1, L - 1
    c = np.zeros(n); c[L] = 1.0
    Om = O0
    prev_amp = 0.0
    for amp in sorted(float(x) for x in amplitude_grid):
        if amp == 0:
            fld = LineLatticeField(k, c.copy())
            res = traveling_residual(fld.coeffs, O0, omega, k)
            br.points.append(TravelingPoint(0.0, O0, fld, float(np.max(np.abs(res))),
                                            float(np.max(np.abs(res.imag)))))
            continue
        guess = c.copy()
        if prev_amp == 0:
            guess[i1], guess[im1] = amp * e
        else:
            guess[[i1, im1]] *= amp / prev_amp

        def F(x):
            cc, O = x[:n], x[n]
            r = traveling_residual(cc, O, omega, k)
            return np.concatenate([r.real, [cc[i1] * e[0] + cc[im1] * e[1] - amp]])

        sol = root(F, np.concatenate([guess, [Om]]), method="hybr", tol=1e-15)
        x = sol.x
        res = traveling_residual(x[:n], x[n], omega, k)
        if not sol.success and np.max(np.abs(res)) > 1e-10:
            br.fold = amp
            break
        # a Newton polish with a finite-difference Jacobian
        for _ in range(2):
            J = _fd_jacobian(F, x)
            x = x - np.linalg.solve(J, F(x))
        res = traveling_residual(x[:n], x[n], omega, k)
        if np.max(np.abs(res)) > max(tol, 1e-10):
            br.fold = amp
            break
        c, Om, prev_amp = x[:n], x[n], amp
        br.points.append(TravelingPoint(amp, float(Om), LineLatticeField(k, c.copy()),
                                        float(np.max(np.abs(res))),
                                        float(np.max(np.abs(res.imag)))))
    return br


def _fd_jacobian(F, x, h=1e-7):
    f0 = F(x)
    J = np.empty((len(f0), len(x)))
    for i in range(len(x)):
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        J[:, i] = (F(xp) - F(xm)) / (2 * h)
    return J


def traveling_ensemble(points, omega, point, M=None):
    """Filaments u_j = a_j e^{i omega t} v(Omega t + k s) at t = 0, with the exact evaluator."""
    from .dynamics import FilamentEnsemble

    fld = point.field
    M = fld.L * fld.k + 2 if M is None else M
    points = np.asarray(points, dtype=complex)

    def exact(t, s):
        v = fld(point.Omega * t, s)
        return points[:, None] * np.exp(1j * omega * t) * v[None, :]

    s = 2 * np.pi * np.arange(4 * M) / (4 * M)
    return FilamentEnsemble.from_values(exact(0.0, s), M), exact
