"""Symmetric Fourier fields on the reduced lattice.

A field is a truncated series

    u(t, s) = sum_k a[0,k] cos ks + sum_{j>=1,k} (a[j,k] cos jt - i b[j,k] sin jt) cos ks

with real a, b and j + k < L.  Every such series satisfies
u(t, s) = u(t, -s) = conj(u(-t, s)).

Internally products are formed in the exponential basis
u = sum_{j in Z, k >= 0} c[j,k] e^{ijt} cos ks, where c is real and
c[j] = (a - b)/2, c[-j] = (a + b)/2 for j >= 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import total_ordering

import numpy as np
from scipy.signal import convolve


@total_ordering
@dataclass(frozen=True)
class LatticeSite:
    j: int
    k: int
    l: int = 1

    def __post_init__(self):
        if not in_lattice(self.j, self.k, self.l):
            raise ValueError(f"({self.j},{self.k},{self.l}) is not a lattice site")

    @property
    def key(self):
        return (self.j + self.k, self.j, self.k, -self.l)

    @property
    def norm(self):
        return self.j + self.k

    def __lt__(self, other):
        return self.key < other.key

    def __iter__(self):
        return iter((self.j, self.k, self.l))

    def __repr__(self):
        return f"({self.j},{self.k},{self.l:+d})"


def in_lattice(j, k, l):
    if j < 0 or k < 0 or l not in (1, -1):
        return False
    return j >= 1 or l == 1


def build_lattice(L):
    """All sites with j + k < L, canonically ordered."""
    if L < 1:
        raise ValueError("L must be >= 1")
    sites = []
    for n in range(L):
        for j in range(n + 1):
            k = n - j
            sites.append(LatticeSite(j, k, 1))
            if j >= 1:
                sites.append(LatticeSite(j, k, -1))
    return sites


def site_distance(x, y):
    return abs(x.j - y.j) + abs(x.k - y.k)


@dataclass(frozen=True)
class NormParams:
    sigma: float = 0.1
    s_weight: float = 2.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.s_weight <= 1:
            raise ValueError("s_weight must be > 1")

    def weight(self, n):
        """Squared-norm weight e^{2 sigma n} <n>^{2 s} for l1 index size n."""
        n = np.asarray(n, dtype=float)
        return np.exp(2 * self.sigma * n) * (1.0 + n**2) ** self.s_weight

    def op_weight(self, n):
        """Entry weight e^{sigma n} <n>^s used by operator norms."""
        n = np.asarray(n, dtype=float)
        return np.exp(self.sigma * n) * (1.0 + n**2) ** (self.s_weight / 2)


def _radius_mask(L):
    j, k = np.indices((L, L))
    return (j + k) < L


def basis_scale(L):
    """Norm of cos jt cos ks in the normalized L2 product, per (j, k)."""
    sc = np.full((L, L), 0.5)
    sc[0, :] = np.sqrt(0.5)
    sc[:, 0] = np.sqrt(0.5)
    sc[0, 0] = 1.0
    return sc


class SymmetricField:
    """Immutable truncated series in the (a, b) basis."""

    __slots__ = ("a", "b", "L")

    def __init__(self, a, b=None, L=None):
        a = np.asarray(a, dtype=float)
        if L is None:
            L = a.shape[0]
        A = np.zeros((L, L))
        B = np.zeros((L, L))
        n0, n1 = min(L, a.shape[0]), min(L, a.shape[1])
        A[:n0, :n1] = a[:n0, :n1]
        if b is not None:
            b = np.asarray(b, dtype=float)
            m0, m1 = min(L, b.shape[0]), min(L, b.shape[1])
            B[:m0, :m1] = b[:m0, :m1]
        mask = _radius_mask(L)
        A[~mask] = 0.0
        B[~mask] = 0.0
        B[0, :] = 0.0
        A.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "a", A)
        object.__setattr__(self, "b", B)
        object.__setattr__(self, "L", int(L))

    def __setattr__(self, name, value):
        raise AttributeError("SymmetricField is immutable")

    # constructors
    @classmethod
    def zeros(cls, L):
        return cls(np.zeros((L, L)), None, L)

    @classmethod
    def constant(cls, c, L=1):
        a = np.zeros((L, L))
        a[0, 0] = c
        return cls(a, None, L)

    @classmethod
    def from_entries(cls, entries, L):
        """entries: {(j, k): a} for j == 0 or {(j, k): (a, b)}."""
        a = np.zeros((L, L))
        b = np.zeros((L, L))
        for (j, k), val in entries.items():
            if j + k >= L:
                raise ValueError(f"mode ({j},{k}) outside radius {L}")
            if np.ndim(val) == 0:
                a[j, k] = val
            else:
                a[j, k], b[j, k] = val
                if j == 0 and b[j, k] != 0:
                    raise ValueError("b[0,k] must vanish")
        return cls(a, b, L)

    @classmethod
    def from_exp(cls, C, L=None):
        """From exponential coefficients C of shape (2M-1, M), j offset M-1."""
        M = C.shape[1]
        L = M if L is None else L
        c0 = M - 1
        n = min(L, M)
        a = np.zeros((L, L))
        b = np.zeros((L, L))
        a[0, :n] = C[c0, :n]
        jj = np.arange(1, n)
        plus = C[c0 + jj, :n]
        minus = C[c0 - jj, :n]
        a[1:n, :n] = plus + minus
        b[1:n, :n] = minus - plus
        return cls(a, b, L)

    # conversions
    def to_exp(self):
        L = self.L
        C = np.zeros((2 * L - 1, L))
        c0 = L - 1
        C[c0] = self.a[0]
        C[c0 + 1:] = 0.5 * (self.a[1:] - self.b[1:])
        C[:c0] = 0.5 * (self.a[1:] + self.b[1:])[::-1]
        return C

    def resize(self, L):
        return SymmetricField(self.a, self.b, L)

    def orthonormal_pairs(self):
        """Coefficients in an orthonormal basis: arrays pa, pb of shape (L, L)."""
        sc = basis_scale(self.L)
        return self.a * sc, self.b * sc

    @classmethod
    def from_orthonormal(cls, pa, pb, L):
        sc = basis_scale(L)
        return cls(pa / sc, pb / sc, L)

    # arithmetic
    def conj(self):
        return SymmetricField(self.a, -self.b, self.L)

    def _binary(self, other, op):
        L = max(self.L, other.L)
        x, y = self.resize(L), other.resize(L)
        return SymmetricField(op(x.a, y.a), op(x.b, y.b), L)

    def __add__(self, other):
        if np.isscalar(other):
            other = SymmetricField.constant(other, 1)
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            other = SymmetricField.constant(other, 1)
        return self._binary(other, np.subtract)

    def __neg__(self):
        return SymmetricField(-self.a, -self.b, self.L)

    def __mul__(self, other):
        if isinstance(other, SymmetricField):
            return multiply(self, other)
        return SymmetricField(other * self.a, other * self.b, self.L)

    __rmul__ = __mul__

    def i_dt(self):
        """The field i d/dt u."""
        j = np.arange(self.L)[:, None]
        return SymmetricField(j * self.b, j * self.a, self.L)

    def dss(self):
        k = np.arange(self.L)[None, :]
        return SymmetricField(-(k**2) * self.a, -(k**2) * self.b, self.L)

    def wiener(self):
        return float(np.abs(self.to_exp()).sum())

    def parity_odd_part(self):
        """Max coefficient with j + k odd (zero for fields invariant under (t,s)->(t+pi,s+pi))."""
        j, k = np.indices((self.L, self.L))
        odd = (j + k) % 2 == 1
        if not odd.any():
            return 0.0
        return float(max(np.abs(self.a[odd]).max(), np.abs(self.b[odd]).max()))

    def __call__(self, t, s):
        return evaluate(self, t, s)

    def __repr__(self):
        return f"SymmetricField(L={self.L}, wiener={self.wiener():.3e})"

    # io
    def to_json(self, omega=None):
        entries = []
        for n in range(self.L):
            for j in range(n + 1):
                k = n - j
                a, b = self.a[j, k], self.b[j, k]
                if a == 0 and b == 0:
                    continue
                entries.append([j, k, float(a)] if j == 0 else [j, k, float(a), float(b)])
        return json.dumps({"L": self.L, "omega": omega, "entries": entries})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        L = d["L"]
        a = np.zeros((L, L))
        b = np.zeros((L, L))
        for e in d["entries"]:
            j, k = e[0], e[1]
            a[j, k] = e[2]
            if len(e) > 3:
                b[j, k] = e[3]
        return cls(a, b, L)


def inner(u, v):
    """Normalized L2 product (1/4pi^2) int u conj(v); real for symmetric fields."""
    L = max(u.L, v.L)
    u, v = u.resize(L), v.resize(L)
    sc2 = basis_scale(L) ** 2
    return float(np.sum(sc2 * (u.a * v.a + u.b * v.b)))


def _extend(C):
    """Even extension in k: (2M-1, M) -> (2M-1, 2M-1)."""
    M = C.shape[1]
    E = np.zeros((C.shape[0], 2 * M - 1))
    E[:, M - 1] = C[:, 0]
    E[:, M:] = 0.5 * C[:, 1:]
    E[:, :M - 1] = 0.5 * C[:, :0:-1]
    return E


def _fold(E):
    """Inverse of _extend for an even array."""
    M = (E.shape[1] + 1) // 2
    C = np.empty((E.shape[0], M))
    C[:, 0] = E[:, M - 1]
    C[:, 1:] = 2.0 * E[:, M:]
    return C


DIRECT_LIMIT = 2_000_000


def exp_product(C1, C2):
    """Product of two exponential coefficient arrays (untruncated).

    Small inputs use direct summation (exact up to rounding of each term);
    large ones switch to FFT convolution.
    """
    E1, E2 = _extend(C1), _extend(C2)
    method = "direct" if E1.size * E2.size <= DIRECT_LIMIT else "fft"
    E = convolve(E1, E2, mode="full", method=method)
    return _fold(E)


def _truncate_exp(C, L):
    """Restrict exponential coefficients to |j| + k < L, shape (2L-1, L)."""
    M = C.shape[1]
    out = np.zeros((2 * L - 1, L))
    n = min(L, M)
    c0, d0 = M - 1, L - 1
    lo = max(0, c0 - d0)
    hi = min(C.shape[0], c0 + d0 + 1)
    out[d0 - (c0 - lo):d0 + (hi - c0), :n] = C[lo:hi, :n]
    j = np.arange(-(L - 1), L)[:, None]
    k = np.arange(L)[None, :]
    out[(np.abs(j) + k) >= L] = 0.0
    return out


def multiply(u, v, exact=False, L=None):
    """Pointwise product.

    The result is truncated to max(u.L, v.L) unless `exact` is set, in which
    case the full product on radius u.L + v.L - 1 is returned.
    """
    if L is None:
        L = u.L + v.L - 1 if exact else max(u.L, v.L)
    C = exp_product(u.to_exp(), v.to_exp())
    return SymmetricField.from_exp(_truncate_exp(C, L), L)


def sigma_norm(u, p=None):
    p = NormParams() if p is None else p
    pa, pb = u.orthonormal_pairs()
    j, k = np.indices((u.L, u.L))
    return float(np.sqrt(np.sum((pa**2 + pb**2) * p.weight(j + k))))


def exponential_norm(u, p=None):
    """Weighted l2 norm over the full Z x N exponential expansion."""
    p = NormParams() if p is None else p
    C = u.to_exp()
    L = u.L
    j = np.arange(-(L - 1), L)[:, None]
    k = np.arange(L)[None, :]
    w = np.where(k == 0, 1.0, 0.5)
    return float(np.sqrt(np.sum(C**2 * w * p.weight(np.abs(j) + k))))


def evaluate(u, t, s):
    """Sum the series at phases (t, s); broadcasts over array inputs."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    idx = np.arange(u.L)
    ct = np.cos(np.multiply.outer(t, idx))
    st = np.sin(np.multiply.outer(t, idx))
    cs = np.cos(np.multiply.outer(s, idx))
    re = np.einsum("...j,jk,...k->...", ct, u.a, cs)
    im = -np.einsum("...j,jk,...k->...", st, u.b, cs)
    out = re + 1j * im
    return complex(out) if out.ndim == 0 else out


def grid_values(u, nt, ns):
    """Values on the uniform nt x ns grid of [0, 2pi)^2."""
    t = 2 * np.pi * np.arange(nt) / nt
    s = 2 * np.pi * np.arange(ns) / ns
    return evaluate(u, t[:, None], s[None, :])
