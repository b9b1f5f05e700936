import functools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from filaments import bifurcation as bf
from filaments import nash_moser as nm
from filaments.fourier_lattice import evaluate, sigma_norm
from filaments.linear_spectrum import bifurcation_frequency, kernel_vector

SQRT2 = math.sqrt(2)


@functools.lru_cache(maxsize=None)
def point(omega, r):
    return bf.solve_branch(omega, [r], nm.SolverSchedule())[0]


def test_closed_form_examples():
    assert bf.omega2_closed_form(1.0) == pytest.approx(5 / (3 * math.sqrt(3)), abs=1e-15)
    assert bf.omega2_closed_form(0.1) < 0 < bf.omega2_closed_form(0.2)
    assert abs(bf.omega2_closed_form(1e-8)) < 1e-15


def test_exceptional_omega0():
    w0 = bf.exceptional_omega0()
    assert 0.1 < w0 < 0.2
    assert abs(4 * w0**3 + 29 * w0**2 + 33 * w0 - 6) <= 1e-12
    roots = np.roots([4, 29, 33, -6])
    pos = [z.real for z in roots if abs(z.imag) < 1e-12 and z.real > 0]
    assert pos == [pytest.approx(w0, abs=1e-12)]
    assert bf.positive_root_count() == 1


@pytest.mark.parametrize("w", [0.5, 1.0, SQRT2, 2.0])
def test_series_matches_closed_form(w):
    pc = bf.perturbation_series(w)
    assert abs(pc.Omega2 - bf.omega2_closed_form(w)) <= 1e-10
    assert pc.Omega2_model == pytest.approx(bf.omega2_model(w), abs=1e-12)
    assert pc.identities["quad"] == 0.0
    assert pc.Omega1 == 0.0
    assert pc.identities["order2_defect"] <= 1e-12


def test_model_curvature_values():
    # independent evaluation of -w^2 (w + 14) / (6 (w + 1)(w + 2) sqrt(2w + 1))
    assert bf.omega2_model(1.0) == pytest.approx(-15 / (36 * math.sqrt(3)), abs=1e-15)
    assert bf.omega2_model(1.0) == pytest.approx(-0.240563, abs=1e-6)
    assert bf.omega2_model(SQRT2) == pytest.approx(-0.318584, abs=1e-6)


def test_identities_at_one():
    ids = bf.perturbation_series(1.0).identities
    assert ids["dt_pair"] == pytest.approx(-math.sqrt(3) / 2, abs=1e-12)
    assert ids["cube"] == pytest.approx(9 / 16, abs=1e-12)
    assert ids["form"] == pytest.approx(39 / 288, abs=1e-12)
    assert ids["first_term"] == pytest.approx(7 / 48, abs=1e-12)
    assert ids["P"] == pytest.approx(-1 / 96, abs=1e-12)


@given(st.floats(0.05, 5.0))
def test_identities_general(w):
    pc = bf.perturbation_series(w)
    ids = pc.identities
    assert ids["dt_pair"] == pytest.approx(-math.sqrt(1 + 2 * w) / (1 + w), abs=1e-12)
    assert ids["cube"] == pytest.approx(9 / 4 * (pc.a**2 - pc.b**2) ** 2, abs=1e-12)
    form = (8 * w**3 + 31 * w**2 + 12 * w - 12) / (24 * (w + 1) ** 2 * (w + 2))
    assert ids["form"] == pytest.approx(form, abs=1e-12)


def test_literal_conjugation_does_not_solve_order_two():
    # u2 = conj(-w L^-1 u1^2) read literally leaves an O(1) defect
    assert bf.perturbation_series(1.0).identities["literal_u2_defect"] > 1e-2


def test_resonance_clash():
    with pytest.raises(ValueError):
        bf.perturbation_series(1.0, L=4)


def test_trivial_point():
    p = bf.solve_branch(1.0, [0.0])[0]
    assert p.Omega == bifurcation_frequency(1.0)
    assert not p.w.a.any() and not p.w.b.any()


def test_fit_curvature_synthetic():
    O0 = 1.7
    pts = [bf.BranchPoint(r, O0 + 0.5 * r * r, None, 0.0) for r in (0.0, 0.01, 0.02, 0.03, 0.04)]
    assert bf.fit_curvature(pts, O0) == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(ValueError):
        bf.fit_curvature(pts[:3], O0)


def test_solved_point_follows_model():
    r = 0.02
    p = point(SQRT2, r)
    O0 = bifurcation_frequency(SQRT2)
    assert not p.excised and p.residual <= 1e-10
    assert abs(p.Omega - O0 - bf.omega2_model(SQRT2) * r * r) <= 10 * r**3
    # the unit kernel vector is (1, Omega0) / sqrt(1 + Omega0^2), so the
    # cos s (cos t - i Omega0 sin t) coefficient is 2 a r (= r only at omega = 1)
    a, _ = kernel_vector(SQRT2)
    assert a == pytest.approx(1 / math.sqrt(1 + O0**2), abs=1e-15)
    assert abs(bf.profile_coefficient(p.field(SQRT2), SQRT2) - 2 * a * r) <= r * r


def test_solved_point_symmetry():
    u = point(SQRT2, 0.02).field(SQRT2)
    t = np.linspace(0, 2 * np.pi, 9)[:, None]
    s = np.linspace(0, 2 * np.pi, 7)[None, :]
    v = evaluate(u, t, s)
    assert np.abs(evaluate(u, t + np.pi, s + np.pi) - v).max() <= 1e-12


def test_local_uniqueness():
    r = 0.02
    p = point(SQRT2, r)
    sch = nm.SolverSchedule()
    O, w, _ = bf.solve_point(r, SQRT2, sch, p.Omega + 1e-6, p.w * 1.01)
    assert abs(O - p.Omega) <= 1e-9
    assert sigma_norm(w - p.w) <= 1e-9


def test_degenerate_branch_near_omega0():
    # the closed form vanishes there, the solved model does not
    w0 = bf.exceptional_omega0()
    assert abs(bf.omega2_closed_form(w0)) < 1e-14
    assert bf.omega2_model(w0) < 0
