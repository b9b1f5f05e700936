"""Time-domain model of n near-parallel filaments.

Each filament is a curve (u_j(t, s), s) with u_j complex and 2 pi periodic in s:

    d/dt u_j = i (u_j'' + sum_{i != j} (u_j - u_i) / |u_j - u_i|^2).

Filaments are stored as Fourier coefficients in s (modes |m| <= M) and
evaluated on 4M collocation points.  The linear part is integrated exactly
(integrating factor) and the interaction by classical RK4 (Lawson scheme).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import root

from .fourier_lattice import SymmetricField, evaluate


class SeparationBreach(RuntimeError):
    """Two filaments came closer than the separation floor."""

    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


class NewtonDiverged(RuntimeError):
    pass


# central configurations --------------------------------------------------

def interaction(a):
    """sum_{i != j} (a_j - a_i) / |a_j - a_i|^2 for each j."""
    a = np.asarray(a, dtype=complex)
    d = a[:, None] - a[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(d != 0, d / np.abs(d) ** 2, 0.0)
    return q.sum(axis=1)


def virial_omega(a):
    """omega forced by sum_j conj(a_j) F_j = n(n-1)/2 for a central configuration."""
    n = len(a)
    return n * (n - 1) / (2 * float(np.sum(np.abs(a) ** 2)))


@dataclass
class CentralConfiguration:
    points: np.ndarray
    omega: float
    residual: float


def central_configuration(n, shape="polygon", R=1.0, seed=None, tol=1e-12):
    """Points with omega a_j = sum_{i != j} (a_j - a_i)/|a_j - a_i|^2."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if shape == "polygon":
        a = R * np.exp(2j * np.pi * np.arange(n) / n)
    elif shape == "custom":
        if seed is None or len(seed) != n:
            raise ValueError("custom shape needs a seed of n points")
        a0 = np.asarray(seed, dtype=complex)
        a0 = a0 - a0.mean()

        def F(x):
            z = x[:n] + 1j * x[n:]
            g = virial_omega(z) * z - interaction(z)
            return np.concatenate([g.real, g.imag])

        sol = root(F, np.concatenate([a0.real, a0.imag]), method="lm", tol=1e-15)
        a = sol.x[:n] + 1j * sol.x[n:]
        if not np.all(np.isfinite(a)):
            raise NewtonDiverged("Newton diverged from the seed")
    else:
        raise ValueError(f"unknown shape {shape!r}")
    om = virial_omega(a)
    res = float(np.max(np.abs(om * a - interaction(a))))
    if shape == "custom" and res > tol:
        raise NewtonDiverged(f"Newton did not converge (residual {res:.2e})")
    return CentralConfiguration(a, om, res)


def polygon_omega(n, R=1.0):
    return (n - 1) / (2 * R**2)


# ensembles ---------------------------------------------------------------

def _modes(M):
    return np.arange(-M, M + 1)


@dataclass
class FilamentEnsemble:
    """n filaments as Fourier coefficients c[j, m + M] of u_j(s) = sum c e^{ims}."""

    coeffs: np.ndarray
    t: float = 0.0

    @property
    def n(self):
        return self.coeffs.shape[0]

    @property
    def M(self):
        return (self.coeffs.shape[1] - 1) // 2

    @property
    def N(self):
        return 4 * self.M

    def grid(self):
        return 2 * np.pi * np.arange(self.N) / self.N

    def values(self):
        """u_j on the collocation grid, shape (n, 4M)."""
        return to_grid(self.coeffs, self.N)

    def copy(self, coeffs=None, t=None):
        return FilamentEnsemble(self.coeffs.copy() if coeffs is None else coeffs,
                                self.t if t is None else t)

    @classmethod
    def from_values(cls, values, M, t=0.0):
        return cls(from_grid(np.atleast_2d(values), M), t)

    @classmethod
    def from_function(cls, fn, n, M, t=0.0):
        """fn(j, s) -> complex values on the grid."""
        s = 2 * np.pi * np.arange(4 * M) / (4 * M)
        return cls.from_values(np.array([fn(j, s) for j in range(n)]), M, t)


def to_grid(c, N):
    n, m2 = c.shape
    M = (m2 - 1) // 2
    F = np.zeros((n, N), dtype=complex)
    F[:, : M + 1] = c[:, M:]
    F[:, N - M:] = c[:, :M]
    return np.fft.ifft(F, axis=1) * N


def from_grid(v, M):
    N = v.shape[1]
    F = np.fft.fft(v, axis=1) / N
    return np.concatenate([F[:, N - M:], F[:, : M + 1]], axis=1)


def shift_modes(c, shift):
    """Coefficients of u(s - shift) (any real shift, exact in Fourier space)."""
    M = (c.shape[1] - 1) // 2
    return c * np.exp(-1j * _modes(M) * shift)[None, :]


# reconstruction ----------------------------------------------------------

@dataclass
class Reconstruction:
    ensemble: FilamentEnsemble
    points: np.ndarray
    omega: float
    Omega: float
    u: SymmetricField | None

    def exact(self, t, s):
        """u_j(t, s) = a_j e^{i omega t} (1 + u(Omega t, s)), shape (n, len(s))."""
        s = np.asarray(s, dtype=float)
        w = np.ones_like(s, dtype=complex)
        if self.u is not None:
            w = w + evaluate(self.u, self.Omega * t, s)
        return self.points[:, None] * np.exp(1j * self.omega * t) * w[None, :]


def reconstruct(points, omega, u=None, Omega=0.0, r=0.0, M=None):
    """Filaments a_j (1 + u(0, s)) at t = 0 and the exact evaluator for later times."""
    points = np.asarray(points, dtype=complex)
    if M is None:
        M = max(8, u.L if u is not None else 8)
    rec = Reconstruction(None, points, float(omega), float(Omega), u)
    N = 4 * M
    s = 2 * np.pi * np.arange(N) / N
    rec.ensemble = FilamentEnsemble.from_values(rec.exact(0.0, s), M)
    return rec


# integration -------------------------------------------------------------

def interaction_field(v):
    """i sum_{i != j} (u_j - u_i)/|u_j - u_i|^2 on the grid."""
    d = v[:, None, :] - v[None, :, :]
    n = v.shape[0]
    mask = ~np.eye(n, dtype=bool)
    out = np.zeros_like(v)
    for j in range(n):
        dj = d[j, mask[j]]
        out[j] = (dj / np.abs(dj) ** 2).sum(axis=0)
    return 1j * out


def min_separation(ens_or_values):
    """(minimum |u_i - u_j| over the grid, (i, j), s) for i != j."""
    v = ens_or_values.values() if isinstance(ens_or_values, FilamentEnsemble) else ens_or_values
    n, N = v.shape
    best = (math.inf, None, None)
    for i in range(n):
        for j in range(i + 1, n):
            dist = np.abs(v[i] - v[j])
            k = int(np.argmin(dist))
            if dist[k] < best[0]:
                best = (float(dist[k]), (i, j), 2 * np.pi * k / N)
    return best


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    center: list = field(default_factory=list)
    separation: list = field(default_factory=list)
    breach: bool = False

    @property
    def final(self):
        return FilamentEnsemble(self.frames[-1], self.times[-1])

    def energy_drift(self):
        e = np.array(self.energy)
        return float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))

    def center_drift(self):
        c = np.array(self.center)
        return float(np.max(np.abs(c - c[0])))


def _nonlinear(c, N, M):
    return from_grid(interaction_field(to_grid(c, N)), M)


def integrate(ens, T, dt, save_every=1, floor_factor=1e-3):
    """Lawson RK4 from ens.t to ens.t + T; dt is adjusted to divide T exactly."""
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    steps = max(1, int(math.ceil(T / dt - 1e-12))) if T > 0 else 0
    h = T / steps if steps else 0.0
    M, N = ens.M, ens.N
    m2 = (_modes(M) ** 2)[None, :]
    E1 = np.exp(-1j * m2 * h)
    E2 = np.exp(-1j * m2 * h / 2)
    c = ens.coeffs.astype(complex).copy()
    sep0 = min_separation(ens)[0]
    floor = floor_factor * sep0
    traj = Trajectory()

    def record(c, t):
        e = FilamentEnsemble(c.copy(), t)
        inv = invariants(e)
        traj.times.append(t)
        traj.frames.append(c.copy())
        traj.energy.append(inv.H_total)
        traj.center.append(inv.center)
        traj.separation.append(min_separation(e)[0])

    record(c, ens.t)
    t = ens.t
    for step in range(1, steps + 1):
        k1 = _nonlinear(c, N, M)
        k2 = _nonlinear(E2 * (c + 0.5 * h * k1), N, M)
        k3 = _nonlinear(E2 * c + 0.5 * h * k2, N, M)
        k4 = _nonlinear(E1 * c + h * E2 * k3, N, M)
        c = E1 * c + (h / 6) * (E1 * k1 + 2 * E2 * (k2 + k3) + k4)
        t = ens.t + step * h
        sep = min_separation(to_grid(c, N))[0]
        if not np.all(np.isfinite(c)) or sep < floor:
            record(c, t)
            traj.breach = True
            raise SeparationBreach(
                f"separation floor breached at t={t:.6g} (min {sep:.3e} < {floor:.3e})", traj)
        if step % save_every == 0 or step == steps:
            record(c, t)
    return traj


# invariants --------------------------------------------------------------

@dataclass
class ConservedSet:
    H_total: float
    center: complex
    H: float | None = None
    I: float | None = None
    W: float | None = None


def _quad(v):
    """integral over [0, 2 pi] by the trapezoidal (spectral) rule."""
    return 2 * np.pi * np.mean(v, axis=-1)


def _ds(c, N):
    M = (c.shape[1] - 1) // 2
    return to_grid(1j * _modes(M)[None, :] * c, N)


def invariants(ens, points=None, tol=1e-9):
    """Ensemble energy and center, plus scalar H, I, W when the ensemble is homographic."""
    v = ens.values()
    vs = _ds(ens.coeffs, ens.N)
    kin = float(np.sum(_quad(np.abs(vs) ** 2)))
    pot = 0.0
    for i in range(ens.n):
        for j in range(i + 1, ens.n):
            pot += float(_quad(np.log(np.abs(v[i] - v[j]) ** 2)))
    out = ConservedSet(kin - pot, complex(np.sum(_quad(v))))
    if points is not None:
        w = homographic_profile(ens, points, tol)
        if w is not None:
            out.H, out.I, out.W = scalar_invariants(w)
    return out


def homographic_profile(ens, points, tol=1e-9):
    """w with u_j = a_j w, or None when the ensemble is not of that form."""
    points = np.asarray(points, dtype=complex)
    i = int(np.argmax(np.abs(points)))
    w = ens.coeffs[i] / points[i]
    defect = np.max(np.abs(ens.coeffs - points[:, None] * w[None, :]))
    return w if defect <= tol * max(1.0, float(np.max(np.abs(ens.coeffs)))) else None


def scalar_invariants(w_coeffs):
    """H = int |w'|^2 - ln |w|^2, I = int |w|^2, W = int conj(w) i w' over one period."""
    c = np.atleast_2d(w_coeffs)
    M = (c.shape[1] - 1) // 2
    N = 4 * M
    w = to_grid(c, N)[0]
    ws = _ds(c, N)[0]
    H = float(_quad(np.abs(ws) ** 2 - np.log(np.abs(w) ** 2)))
    I = float(_quad(np.abs(w) ** 2))
    W = float(np.real(_quad(np.conj(w) * 1j * ws)))
    return H, I, W


def helix_invariants(a, sigma):
    """Closed forms for w = a e^{i sigma s}."""
    return (2 * np.pi * (a**2 * sigma**2 - math.log(a**2)), 2 * np.pi * a**2,
            -2 * np.pi * sigma * a**2)


# checks ------------------------------------------------------------------

def galilean_transform(ens, alpha, t):
    """e^{-i alpha^2 t} e^{i alpha s} u(t, s - 2 alpha t), alpha an integer."""
    if int(alpha) != alpha:
        raise ValueError("alpha must be an integer to keep 2 pi periodicity")
    alpha = int(alpha)
    c = shift_modes(ens.coeffs, 2 * alpha * t)
    c = np.roll(c, alpha, axis=1)
    M = ens.M
    if alpha > 0:
        lost = ens.coeffs[:, 2 * M + 1 - alpha:]
        c[:, :alpha] = 0
    elif alpha < 0:
        lost = ens.coeffs[:, :-alpha]
        c[:, alpha:] = 0
    else:
        lost = np.zeros(1)
    if np.max(np.abs(lost), initial=0.0) > 1e-14:
        raise ValueError("mode range too small for the boost")
    return FilamentEnsemble(np.exp(-1j * alpha**2 * t) * c, ens.t)


def galilean_defect(ens, alpha, T, dt):
    """Compare integrate(boost(data)) with boost(integrate(data)) at time T."""
    direct = integrate(galilean_transform(ens, alpha, 0.0), T, dt).final
    plain = integrate(ens, T, dt).final
    moved = galilean_transform(FilamentEnsemble(plain.coeffs, T), alpha, T)
    return float(np.max(np.abs(direct.values() - moved.values())))


def rotation_defect(conf, T=10.0, dt=0.002, M=4):
    """Max deviation of integrated parallel filaments from a_j e^{i omega t}."""
    rec = reconstruct(conf.points, conf.omega, M=M)
    traj = integrate(rec.ensemble, T, dt, save_every=50)
    err = 0.0
    for t, c in zip(traj.times, traj.frames):
        exact = rec.exact(t, np.zeros(1))
        v = to_grid(c, 4 * M)
        err = max(err, float(np.max(np.abs(v - exact))))
    return err


def periodicity_defect(rec, steps=400, periods=1):
    """|e^{-i omega T} u_j(T) - u_j(0)| after T = periods * 2 pi / Omega (steps per period)."""
    T = periods * 2 * np.pi / rec.Omega
    traj = integrate(rec.ensemble, T, T / (steps * periods), save_every=max(1, steps // 20))
    end = np.exp(-1j * rec.omega * T) * traj.final.values()
    start = rec.ensemble.values()
    return float(np.max(np.abs(end - start))), traj
