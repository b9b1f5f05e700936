"""Closed-form spectrum of the linearized operator and small-divisor bookkeeping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fourier_lattice import (
    LatticeSite,
    SymmetricField,
    basis_scale,
    build_lattice,
    site_distance,
)


def block_matrix(j, k, Omega, omega):
    return np.array([[k**2 + 2 * omega, -Omega * j], [-Omega * j, k**2]], dtype=float)


def eigenvalue(j, k, l, Omega, omega):
    """lambda_{j,k,l}; vectorized.  For j == 0 only l = +1 is meaningful (k^2 + 2 omega)."""
    j = np.asarray(j, dtype=float)
    k = np.asarray(k, dtype=float)
    R = np.sqrt(j**2 * Omega**2 + omega**2)
    lam = k**2 + omega + np.asarray(l) * R
    out = np.where(j == 0, k**2 + 2 * omega, lam)
    return float(out) if out.ndim == 0 else out


def eigenvector(j, k, l, Omega, omega):
    """Unit eigenvector in (a, b) with positive first component."""
    if j == 0:
        return np.array([1.0, 0.0])
    R = math.hypot(j * Omega, omega)
    if l == 1:
        v = np.array([omega + R, -j * Omega])
    else:
        v = np.array([R - omega, j * Omega])
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class EigenPair:
    site: LatticeSite
    lam: float
    vector: np.ndarray
    omega: float
    Omega: float

    def residual(self):
        M = block_matrix(self.site.j, self.site.k, self.Omega, self.omega)
        if self.site.j == 0:
            return abs(M[0, 0] - self.lam)
        return float(np.linalg.norm(M @ self.vector - self.lam * self.vector))


def eigenpair(site, Omega, omega):
    j, k, l = site
    return EigenPair(site, eigenvalue(j, k, l, Omega, omega),
                     eigenvector(j, k, l, Omega, omega), omega, Omega)


def resonance_frequency(j, k, omega):
    if j < 1:
        raise ValueError("j must be >= 1")
    return math.sqrt(k**4 + 2 * k**2 * omega) / j


def bifurcation_frequency(omega):
    return math.sqrt(1 + 2 * omega)


def block_determinant(j, k, omega):
    return 2 * (k**2 - j**2) * omega + (k**4 - j**2)


def kernel_vector(omega):
    """(a, b) of the kernel direction e_{1,1,-1} at Omega0, with a > 0."""
    return eigenvector(1, 1, -1, bifurcation_frequency(omega), omega)


def kernel_field(omega, L=2):
    """e_{1,1,-1} = 2 (a cos t - i b sin t) cos s, unit norm."""
    a, b = kernel_vector(omega)
    return SymmetricField.from_entries({(1, 1): (2 * a, 2 * b)}, max(L, 3))


KERNEL_SITE = LatticeSite(1, 1, -1)


def site_arrays(sites):
    j = np.array([x.j for x in sites])
    k = np.array([x.k for x in sites])
    l = np.array([x.l for x in sites])
    return j, k, l


def spectrum(sites, Omega, omega):
    j, k, l = site_arrays(sites)
    return eigenvalue(j, k, l, Omega, omega)


def kernel_sites(Omega, omega, L, tol):
    sites = build_lattice(L)
    lam = spectrum(sites, Omega, omega)
    return [x for x, v in zip(sites, lam) if abs(v) <= tol]


class EigenBasis:
    """Orthogonal change of coordinates between fields and lattice eigen-coordinates.

    Each (j, k) block uses eigenvectors of M_{j,k}(Omega_basis); `pinned` maps
    (j, k) to an alternative frequency for that block (used to keep the
    kernel direction fixed while Omega moves).
    """

    def __init__(self, sites, Omega, omega, pinned=None):
        self.sites = list(sites)
        self.Omega = Omega
        self.omega = omega
        self.pinned = dict(pinned or {})
        self.index = {x: n for n, x in enumerate(self.sites)}
        self.j, self.k, self.l = site_arrays(self.sites)
        self.L = int((self.j + self.k).max()) + 1 if self.sites else 1
        V = np.zeros((len(self.sites), 2))
        for n, x in enumerate(self.sites):
            Ob = self.pinned.get((x.j, x.k), Omega)
            V[n] = eigenvector(x.j, x.k, x.l, Ob, omega)
        self.V = V

    def __len__(self):
        return len(self.sites)

    def coords(self, u):
        """Eigen-coordinates of a field (modes outside the site set are dropped)."""
        sc = basis_scale(max(u.L, self.L))
        u = u.resize(max(u.L, self.L))
        pa = u.a[self.j, self.k] * sc[self.j, self.k]
        pb = u.b[self.j, self.k] * sc[self.j, self.k]
        return self.V[:, 0] * pa + self.V[:, 1] * pb

    def field(self, y, L=None):
        L = self.L if L is None else L
        pa = np.zeros((L, L))
        pb = np.zeros((L, L))
        np.add.at(pa, (self.j, self.k), self.V[:, 0] * y)
        np.add.at(pb, (self.j, self.k), self.V[:, 1] * y)
        return SymmetricField.from_orthonormal(pa, pb, L)

    def diagonal_operator(self, Omega):
        """Matrix of the linear part L(Omega) in these coordinates.

        Diagonal except on pinned blocks, where the 2x2 block is rotated.
        """
        n = len(self.sites)
        D = np.zeros((n, n))
        lam = spectrum(self.sites, Omega, self.omega)
        D[np.arange(n), np.arange(n)] = lam
        for (j, k), Ob in self.pinned.items():
            if Ob == Omega:
                continue
            idx = [self.index[x] for x in (LatticeSite(j, k, 1), LatticeSite(j, k, -1))
                   if x in self.index]
            if not idx:
                continue
            M = block_matrix(j, k, Omega, self.omega)
            Vb = self.V[idx]
            D[np.ix_(idx, idx)] = Vb @ M @ Vb.T
        return D

    def distance_matrix(self):
        return np.abs(self.j[:, None] - self.j[None, :]) + np.abs(self.k[:, None] - self.k[None, :])


# classification ---------------------------------------------------------

class ThresholdTooLarge(ValueError):
    pass


@dataclass
class Cluster:
    center: LatticeSite
    sites: list

    def as_dict(self):
        return {"center": list(self.center), "sites": [list(x) for x in self.sites]}


@dataclass
class SiteClassification:
    d0: float
    regular: list
    clusters: list
    ell: dict
    separation_constant: float
    min_cluster_gap: dict = field(default_factory=dict)

    @property
    def singular(self):
        return [c.center for c in self.clusters]

    def separated(self):
        """True when clusters inside each annulus are more than 4 ell apart."""
        return all(g is None or g > 4 * self.ell[n] for n, g in self.min_cluster_gap.items())

    def as_dict(self):
        return {
            "d0": self.d0,
            "regular": [list(x) for x in self.regular],
            "clusters": [c.as_dict() for c in self.clusters],
            "ell": {str(k): v for k, v in self.ell.items()},
            "separation_constant": self.separation_constant,
            "min_cluster_gap": {str(k): v for k, v in self.min_cluster_gap.items()},
        }


def dyadic_radii(L, L0=8):
    radii = [L0]
    while radii[-1] < L:
        radii.append(2 * radii[-1])
    return radii


def annulus_of(x, radii):
    for n, R in enumerate(radii):
        if x.j + x.k < R:
            return n
    return len(radii)


def cluster_radius(Ln, const=1.0):
    return max(1, int(math.ceil(const * math.sqrt(Ln) - 1e-12)))


def classify_and_cluster(Omega, omega, L, d0=0.05, L0=8, ell_const=1.0, exclude=()):
    """Split the truncated lattice into regular sites and single-site singular clusters."""
    sites = [x for x in build_lattice(L) if x not in set(exclude)]
    lam = spectrum(sites, Omega, omega)
    sing = [x for x, v in zip(sites, lam) if abs(v) <= d0]
    if any(x.l == 1 for x in sing):
        raise ThresholdTooLarge("threshold too large: a +1 branch site is singular")
    radii = dyadic_radii(L, L0)
    ell = {n: cluster_radius(R, ell_const) for n, R in enumerate(radii)}
    by_annulus = {}
    for x in sing:
        by_annulus.setdefault(annulus_of(x, radii), []).append(x)
    gaps = {}
    for n, group in by_annulus.items():
        g = None
        for a_ in range(len(group)):
            for b_ in range(a_ + 1, len(group)):
                d = site_distance(group[a_], group[b_])
                if d <= ell[n]:
                    raise ThresholdTooLarge(
                        f"threshold too large: {group[a_]} and {group[b_]} share a cluster")
                g = d if g is None else min(g, d)
        gaps[n] = g
    sepC = separation_constant(sing)
    singular_set = set(sing)
    regular = [x for x in sites if x not in singular_set]
    clusters = [Cluster(x, [x]) for x in sing]
    return SiteClassification(d0, regular, clusters, ell, sepC, gaps)


def separation_constant(sites):
    """min |j1 - j2| / (k1 + k2) over distinct pairs (inf for fewer than two sites)."""
    best = math.inf
    for a_ in range(len(sites)):
        for b_ in range(a_ + 1, len(sites)):
            x, y = sites[a_], sites[b_]
            if x.k + y.k == 0:
                continue
            best = min(best, abs(x.j - y.j) / (x.k + y.k))
    return best


def singular_sites_fast(Omega, omega, L, d0):
    """Singular -1 sites by a per-k scan (linear cost, for large L)."""
    out = []
    for k in range(L):
        # lambda_{j,k,-1} = 0 near j* = sqrt((k^2+omega)^2 - omega^2) / Omega
        jstar = math.sqrt(max((k**2 + omega) ** 2 - omega**2, 0.0)) / Omega
        for j in range(max(1, int(jstar) - 2), int(jstar) + 3):
            if j + k >= L:
                continue
            if abs(eigenvalue(j, k, -1, Omega, omega)) <= d0:
                out.append(LatticeSite(j, k, -1))
    return sorted(out)


@dataclass(frozen=True)
class DiophantineParams:
    gamma: float = 0.1
    tau: float = 1.0
    q_max: int = 100

    def __post_init__(self):
        if self.gamma <= 0 or self.tau <= 0:
            raise ValueError("gamma and tau must be positive")
        if self.q_max < 2:
            raise ValueError("q_max must be >= 2")


def diophantine_margin(omega, p=None):
    """min over 1 <= q <= q_max of |q omega - p| q^tau, and the minimizing q."""
    p = DiophantineParams() if p is None else p
    q = np.arange(1, p.q_max + 1)
    x = q * omega
    m = np.abs(x - np.round(x)) * q.astype(float) ** p.tau
    i = int(np.argmin(m))
    return float(m[i]), int(q[i])
