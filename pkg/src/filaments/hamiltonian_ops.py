"""Residual map, linearized operator H = D + T and its block inverses.

The residual of the standing-wave problem for v = 1 + u is

    f(u) = -i Omega u_t - u_ss + omega (u + conj u) + N(u),
    N(u) = -omega conj(u)^2 / (1 + conj u),

so that f(u) = 0 is  i Omega v_t = -v_ss + omega (1 - |v|^-2) v.  The
derivative of N is the real-linear map  du -> h(u) conj(du)  with
h = -omega conj(u)(2 + conj u)/(1 + conj u)^2, which is evaluated by its
power series in conj(u).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fourier_lattice import (
    NormParams,
    SymmetricField,
    _extend,
    _truncate_exp,
    basis_scale,
    exp_product,
)
from .linear_spectrum import EigenBasis


class StateTooLarge(ValueError):
    pass


class SpectrumTooClose(ArithmeticError):
    """Raised when a block has an eigenvalue inside the excluded window."""

    def __init__(self, msg, eigenvalue=None, sites=None, core=None):
        super().__init__(msg)
        self.eigenvalue = eigenvalue
        self.sites = sites
        self.core = core


class DefectTooLarge(ArithmeticError):
    def __init__(self, msg, norm=None):
        super().__init__(msg)
        self.norm = norm


SERIES_TOL = 1e-18
MAX_TERMS = 400


def _series(u, L_work, want_h=True, want_n=True):
    """Power series of N(u) and h(u) in conj(u), on radius L_work."""
    Ub = u.conj().resize(L_work).to_exp()
    rho = float(np.abs(Ub).sum())
    if rho >= 1.0:
        raise StateTooLarge(f"state too large: Wiener norm {rho:.3f} >= 1")
    shape = (2 * L_work - 1, L_work)
    Nacc = np.zeros(shape)
    Hacc = np.zeros(shape)
    P = Ub.copy()  # conj(u)^(n-1)
    n = 2
    while True:
        # h gets n (-1)^n conj(u)^(n-1), N gets (-1)^n conj(u)^n
        sgn = 1.0 if n % 2 == 0 else -1.0
        if want_h:
            Hacc += n * sgn * P
        P = _truncate_exp(exp_product(P, Ub), L_work)
        if want_n:
            Nacc += sgn * P
        size = float(np.abs(P).sum())
        if n * size < SERIES_TOL or n > MAX_TERMS:
            break
        n += 1
    return Nacc, Hacc


def linear_part(u, Omega, omega):
    return -Omega * u.i_dt() - u.dss() + omega * (u + u.conj())


def nonlinear_part(u, omega, L=None):
    L = u.L if L is None else L
    Nacc, _ = _series(u, 2 * max(L, u.L), want_h=False)
    return SymmetricField.from_exp(_truncate_exp(-omega * Nacc, L), L)


def residual(u, Omega, omega, L=None):
    """f(u) projected to radius L (default u.L)."""
    L = u.L if L is None else L
    lin = linear_part(u.resize(L), Omega, omega)
    return lin + nonlinear_part(u, omega, L)


def multiplier(u, omega, L_work):
    """Exponential coefficients of h(u) on radius L_work."""
    _, Hacc = _series(u, L_work, want_n=False)
    return -omega * Hacc


# lattice operators ------------------------------------------------------

@dataclass
class LatticeOperator:
    rows: list
    cols: list
    mat: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._ri = {x: n for n, x in enumerate(self.rows)}
        self._ci = {x: n for n, x in enumerate(self.cols)}

    @property
    def shape(self):
        return self.mat.shape

    def row_index(self, sites):
        try:
            return np.array([self._ri[x] for x in sites], dtype=int)
        except KeyError as e:
            raise KeyError(f"unknown site {e.args[0]}") from None

    def col_index(self, sites):
        try:
            return np.array([self._ci[x] for x in sites], dtype=int)
        except KeyError as e:
            raise KeyError(f"unknown site {e.args[0]}") from None

    def distances(self):
        rj = np.array([x.j for x in self.rows]); rk = np.array([x.k for x in self.rows])
        cj = np.array([x.j for x in self.cols]); ck = np.array([x.k for x in self.cols])
        return np.abs(rj[:, None] - cj[None, :]) + np.abs(rk[:, None] - ck[None, :])

    def __matmul__(self, other):
        if isinstance(other, LatticeOperator):
            return LatticeOperator(self.rows, other.cols, self.mat @ other.mat)
        return self.mat @ other

    def __sub__(self, other):
        return LatticeOperator(self.rows, self.cols, self.mat - other.mat, dict(self.meta))

    def __add__(self, other):
        return LatticeOperator(self.rows, self.cols, self.mat + other.mat, dict(self.meta))


def identity_operator(sites):
    return LatticeOperator(list(sites), list(sites), np.eye(len(sites)))


def _coefficient_map(basis, L):
    """Matrix Q with c = Q y (exponential coefficients from eigen-coordinates).

    Exponential coefficients are indexed by (j, k) with |j| + k < L and
    flattened as (j + L - 1) * L + k.
    """
    n = len(basis)
    sc = basis_scale(L)
    Q = np.zeros(((2 * L - 1) * L, n))
    for col, x in enumerate(basis.sites):
        va, vb = basis.V[col]
        s = sc[x.j, x.k]
        if x.j == 0:
            Q[(L - 1) * L + x.k, col] = va / s
        else:
            a, b = va / s, vb / s
            Q[(x.j + L - 1) * L + x.k, col] = 0.5 * (a - b)
            Q[(-x.j + L - 1) * L + x.k, col] = 0.5 * (a + b)
    return Q


def _exp_weights(L):
    k = np.tile(np.arange(L), 2 * L - 1)
    return np.where(k == 0, 1.0, 0.5)


def conj_multiplication_matrix(H, L):
    """Matrix of c -> coefficients of h * conj(c) on radius L, in exponential coordinates.

    H: exponential coefficients of h on a radius >= 2L - 1.
    """
    M = H.shape[1]
    Eh = _extend(H)  # index (j + M - 1, m + M - 1)
    j = np.repeat(np.arange(-(L - 1), L), L)
    k = np.tile(np.arange(L), 2 * L - 1)
    J = j[:, None] + j[None, :]
    K1, K2 = k[:, None], k[None, :]

    def hat(jj, mm):
        ok = (np.abs(jj) <= M - 1) & (np.abs(mm) <= M - 1)
        out = np.zeros(jj.shape)
        out[ok] = Eh[jj[ok] + M - 1, mm[ok] + M - 1]
        return out

    F = np.where(K1 == 0, 1.0, 2.0)
    U = np.where(K2 == 0, 1.0, 0.5)
    T = hat(J, K1 - K2) + np.where(K2 > 0, hat(J, K1 + K2), 0.0)
    return F * U * T


def assemble_hamiltonian(state, r, Omega, omega, L, basis=None, check=True):
    """H = D + T in the eigen-coordinates of `basis` (default: all sites of B_L at Omega)."""
    from .fourier_lattice import build_lattice

    if basis is None:
        basis = EigenBasis(build_lattice(L), Omega, omega)
    state = state.resize(max(state.L, 1))
    Lw = 2 * L
    Hc = multiplier(state, omega, Lw)
    Tc = conj_multiplication_matrix(Hc, L)
    Q = _coefficient_map(basis, L)
    W = _exp_weights(L)
    T = Q.T @ (W[:, None] * (Tc @ Q))
    asym = float(np.abs(T - T.T).max()) if T.size else 0.0
    if check and asym > 1e-12 * max(1.0, float(np.abs(T).max(initial=0.0))):
        raise AssertionError(f"T asymmetric by {asym:.2e}")
    T = 0.5 * (T + T.T)
    D = basis.diagonal_operator(Omega)
    meta = {"Omega": Omega, "omega": omega, "r": r, "L": L, "asymmetry": asym,
            "fingerprint": _fingerprint(state)}
    return LatticeOperator(basis.sites, basis.sites, D + T, meta), LatticeOperator(
        basis.sites, basis.sites, T, meta)


def _fingerprint(u):
    import hashlib
    h = hashlib.sha1(np.ascontiguousarray(u.a).tobytes() + np.ascontiguousarray(u.b).tobytes())
    return h.hexdigest()[:12]


def residual_coords(y, basis, Omega, omega, offset=None):
    """f(offset + field(y)) in the coordinates of `basis`."""
    u = basis.field(y)
    if offset is not None:
        u = u + offset.resize(basis.L)
    return basis.coords(residual(u, Omega, omega, basis.L))


def finite_difference_jacobian(state, basis, Omega, omega, eps=1e-6):
    y0 = basis.coords(state)
    rest = state.resize(basis.L) - basis.field(y0)
    n = len(basis)
    J = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n); e[i] = eps
        fp = residual_coords(y0 + e, basis, Omega, omega, rest)
        fm = residual_coords(y0 - e, basis, Omega, omega, rest)
        J[:, i] = (fp - fm) / (2 * eps)
    return J


# norms and blocks -------------------------------------------------------

def operator_norm_sigma(G, p=None):
    """max of the weighted row and column sums of |G(x,y)| e^{sigma|x-y|} <x-y>^s."""
    p = NormParams() if p is None else p
    if G.mat.size == 0:
        return 0.0
    A = np.abs(G.mat) * p.op_weight(G.distances())
    return float(max(A.sum(axis=1).max(), A.sum(axis=0).max()))


def restrict_block(G, A, B):
    A, B = list(A), list(B)
    ri, ci = G.row_index(A), G.col_index(B)
    return LatticeOperator(A, B, G.mat[np.ix_(ri, ci)], dict(G.meta))


def invert_block(H_E, d_floor=0.0):
    if H_E.mat.size == 0:
        return LatticeOperator(H_E.cols, H_E.rows, np.zeros((0, 0)))
    ev = np.linalg.eigvalsh(0.5 * (H_E.mat + H_E.mat.T))
    m = float(np.abs(ev).min())
    if m <= d_floor:
        raise SpectrumTooClose(
            f"spectrum within d_floor: |eig| = {m:.3e} <= {d_floor:.3e}", m, list(H_E.rows))
    G = np.linalg.inv(H_E.mat)
    return LatticeOperator(H_E.cols, H_E.rows, G, {"min_abs_eig": m})


@dataclass
class Decomposition:
    E: list
    A: list
    B_prev: list
    clusters: list  # list of site lists
    ell: int

    def neighborhood(self, core, avoid=()):
        """Sites of E within ell of core, minus `avoid`."""
        core = list(core)
        if not core:
            return []
        avoid = set(avoid)
        cj = np.array([x.j for x in core]); ck = np.array([x.k for x in core])
        out = []
        for x in self.E:
            if x in avoid:
                continue
            if (np.abs(cj - x.j) + np.abs(ck - x.k)).min() <= self.ell:
                out.append(x)
        return out

    def check(self):
        E = set(self.E)
        parts = [set(self.A), set(self.B_prev)] + [set(c) for c in self.clusters]
        union = set().union(*parts)
        if union != E or sum(len(p) for p in parts) != len(E):
            raise ValueError("decomposition is not a partition of E")
        from .fourier_lattice import site_distance
        for i in range(len(self.clusters)):
            for k in range(i + 1, len(self.clusters)):
                d = min(site_distance(x, y) for x in self.clusters[i] for y in self.clusters[k])
                if d <= 4 * self.ell:
                    return False
        return True


@dataclass
class PreconditionerResult:
    L_n: LatticeOperator
    K_n: LatticeOperator
    norm_L: float
    norm_K: float
    terms: dict
    G_E: LatticeOperator | None
    min_eigs: dict


def assemble_preconditioner(H, dec, d_prev, d_n, p=None, max_defect=0.75):
    """Block preconditioner on E from local inverses on A, C(B_prev) and C(S_j)."""
    p = NormParams() if p is None else p
    E = list(dec.E)
    idx = {x: n for n, x in enumerate(E)}
    H_E = restrict_block(H, E, E)
    n = len(E)
    Lmat = np.zeros((n, n))
    mins = {}

    G_A = invert_block(restrict_block(H_E, dec.A, dec.A), 0.0)
    ia = np.array([idx[x] for x in dec.A], dtype=int)
    if len(ia):
        Lmat[np.ix_(ia, ia)] = G_A.mat
        mins["A"] = G_A.meta["min_abs_eig"]

    if dec.B_prev:
        # singular sites of the new annulus keep their own blocks
        CB = dec.neighborhood(dec.B_prev, avoid=[x for S in dec.clusters for x in S])
        try:
            G_CB = invert_block(restrict_block(H_E, CB, CB), d_prev)
        except SpectrumTooClose as e:
            e.core = "B"
            raise
        ib = np.array([idx[x] for x in dec.B_prev], dtype=int)
        rows = G_CB.row_index(dec.B_prev)
        Lmat[np.ix_(ib, np.array([idx[x] for x in CB]))] = G_CB.mat[rows]
        mins["B"] = G_CB.meta["min_abs_eig"]

    for c, S in enumerate(dec.clusters):
        CS = dec.neighborhood(S)
        try:
            G_CS = invert_block(restrict_block(H_E, CS, CS), d_n)
        except SpectrumTooClose as e:
            e.core = list(S)
            raise
        iss = np.array([idx[x] for x in S], dtype=int)
        rows = G_CS.row_index(S)
        Lmat[np.ix_(iss, np.array([idx[x] for x in CS]))] = G_CS.mat[rows]
        mins[f"S{c}"] = G_CS.meta["min_abs_eig"]

    L_n = LatticeOperator(E, E, Lmat)
    K = Lmat @ H_E.mat - np.eye(n)
    K_n = LatticeOperator(E, E, K)
    nK = operator_norm_sigma(K_n, p)
    terms = {}
    for name, part in (("A", dec.A), ("B", dec.B_prev),
                       ("S", [x for S in dec.clusters for x in S])):
        if part:
            terms[name] = operator_norm_sigma(restrict_block(K_n, part, E), p)
        else:
            terms[name] = 0.0
    G_E = None
    if nK <= max_defect:
        G_E = LatticeOperator(E, E, np.linalg.solve(np.eye(n) + K, Lmat))
    return PreconditionerResult(L_n, K_n, operator_norm_sigma(L_n, p), nK, terms, G_E, mins)


def c_gamma(gamma, multiplicity=2):
    """sum over Z^2 of e^{-gamma |x|_1}, times the branch multiplicity."""
    q = math.exp(-gamma)
    return multiplicity * ((1 + q) / (1 - q)) ** 2


def _row_norm(G, i, p):
    d = G.distances()[i]
    return float((np.abs(G.mat[i]) * p.op_weight(d)).sum())


def smoothing_inequalities_check(G, A, B, sigma, gamma, ell, s_weight=2.0):
    """Evaluate both smoothing inequalities with measured constants."""
    p = NormParams(sigma, s_weight)
    q = NormParams(max(sigma - gamma, 0.0), s_weight)
    lhs1 = operator_norm_sigma(G, q)
    W = np.abs(G.mat) * p.op_weight(G.distances())
    # ||P_x G||_sigma for a single row: its weighted row sum dominates its column part
    row_sup = float(W.sum(axis=1).max()) if W.size else 0.0
    cg = c_gamma(gamma)
    from .fourier_lattice import site_distance
    dAB = min((site_distance(x, y) for x in A for y in B), default=math.inf)
    blk = restrict_block(G, A, B)
    lhs2 = operator_norm_sigma(blk, q)
    rhs2 = math.exp(-gamma * ell) * operator_norm_sigma(G, p)
    return {
        "c_gamma": cg,
        "ineq1": {"lhs": lhs1, "rhs": cg * row_sup, "holds": lhs1 <= cg * row_sup * (1 + 1e-12)},
        "ineq2": {"lhs": lhs2, "rhs": rhs2, "dist": dAB,
                  "holds": (dAB < ell) or lhs2 <= rhs2 * (1 + 1e-12) + 1e-300},
    }


def decay_envelope_ratio(T, r, C, p=None):
    """max |T(x,y)| / (8 C r e^{-sigma|x-y|} <x-y>^{-s}); (h1) holds when <= 1."""
    p = NormParams() if p is None else p
    if r == 0:
        return 0.0 if not np.any(T.mat) else math.inf
    ratio = np.abs(T.mat) * p.op_weight(T.distances()) / (8 * C * r)
    return float(ratio.max()) if ratio.size else 0.0
