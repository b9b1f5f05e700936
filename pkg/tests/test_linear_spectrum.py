import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from filaments.fourier_lattice import LatticeSite, build_lattice
from filaments.linear_spectrum import (
    KERNEL_SITE,
    DiophantineParams,
    EigenBasis,
    ThresholdTooLarge,
    bifurcation_frequency,
    block_determinant,
    block_matrix,
    classify_and_cluster,
    cluster_radius,
    diophantine_margin,
    eigenpair,
    eigenvalue,
    kernel_sites,
    resonance_frequency,
    singular_sites_fast,
    spectrum,
)

SQRT2 = math.sqrt(2)
GOLDEN = (1 + math.sqrt(5)) / 2
freqs = st.floats(0.1, 5.0)


def test_block_matrix_examples():
    M = block_matrix(1, 1, math.sqrt(3), 1.0)
    assert np.allclose(M, [[3, -math.sqrt(3)], [-math.sqrt(3), 1]])
    assert abs(np.linalg.det(M)) < 1e-14
    assert np.array_equal(block_matrix(0, 4, 1.3, 0.7), np.diag([16 + 1.4, 16]))
    assert np.allclose(block_matrix(2, 0, math.sqrt(3), 1.0),
                       [[2, -2 * math.sqrt(3)], [-2 * math.sqrt(3), 0]])


def test_eigenvalue_examples():
    assert eigenvalue(0, 0, 1, 1.7, 0.3) == pytest.approx(0.6)
    for w in (0.3, 1.0, SQRT2):
        assert abs(eigenvalue(1, 1, -1, bifurcation_frequency(w), w)) < 1e-15
    assert eigenvalue(1, 1, 1, math.sqrt(3), 1.0) == pytest.approx(4.0)


@given(st.integers(0, 255), st.integers(0, 255), st.sampled_from([1, -1]), freqs, freqs)
def test_eigen_residual_and_norm(j, k, l, Om, w):
    if j == 0 and l == -1:
        return
    ep = eigenpair(LatticeSite(j, k, l), Om, w)
    scale = max(1.0, abs(ep.lam), j * Om)
    assert ep.residual() <= 1e-12 * scale
    assert np.linalg.norm(ep.vector) == pytest.approx(1.0, abs=1e-15)
    if l == 1:
        assert ep.lam >= k * k + w - 1e-12


@given(st.integers(1, 60), st.integers(0, 60), freqs)
def test_eigenvalue_product_is_determinant(j, k, w):
    O0 = bifurcation_frequency(w)
    prod = eigenvalue(j, k, 1, O0, w) * eigenvalue(j, k, -1, O0, w)
    assert prod == pytest.approx(block_determinant(j, k, w), abs=1e-10 * max(1, (k * k + w) ** 2))


@given(st.integers(1, 40), st.integers(0, 40), freqs, freqs)
def test_minus_branch_monotone_in_Omega(j, k, Om, w):
    h = 1e-6
    fd = (eigenvalue(j, k, -1, Om + h, w) - eigenvalue(j, k, -1, Om - h, w)) / (2 * h)
    exact = -j * j * Om / math.hypot(j * Om, w)
    assert exact < 0
    assert fd == pytest.approx(exact, abs=1e-6 * max(1, abs(exact)))


def test_resonance_frequency():
    for w in (0.2, 1.0, SQRT2):
        assert resonance_frequency(1, 1, w) == pytest.approx(bifurcation_frequency(w))
    assert resonance_frequency(3, 2, 1.0) == pytest.approx(math.sqrt(24) / 3)
    assert resonance_frequency(5, 0, 1.0) == 0
    with pytest.raises(ValueError):
        resonance_frequency(0, 1, 1.0)


def test_block_determinant():
    assert block_determinant(1, 1, 0.37) == 0
    for w in (0.1, 1.0, 3.0):
        Q = math.sqrt(w * w + 8 * w + 4)
        assert block_determinant(2, 2, w) == 12
        assert (w + Q + 4) * (w - Q + 4) == pytest.approx(12)
    assert block_determinant(3, 2, SQRT2) == pytest.approx(-10 * SQRT2 + 7)


@pytest.mark.parametrize("w", [SQRT2, GOLDEN])
def test_kernel_is_one_dimensional(w):
    O0 = bifurcation_frequency(w)
    assert kernel_sites(O0, w, 64, 1e-9) == [KERNEL_SITE]
    assert kernel_sites(O0, w, 2, 1e-9) == []


def test_kernel_at_other_resonance():
    assert kernel_sites(resonance_frequency(2, 2, SQRT2), SQRT2, 16, 1e-9) == [
        LatticeSite(2, 2, -1)]


def test_classification_matches_brute_force():
    O0 = bifurcation_frequency(SQRT2)
    sc = classify_and_cluster(O0, SQRT2, 64, 0.05)
    sites = build_lattice(64)
    lam = spectrum(sites, O0, SQRT2)
    brute = [x for x, v in zip(sites, lam) if abs(v) <= 0.05]
    assert sc.singular == brute
    assert all(x.l == -1 for x in sc.singular)
    assert len(sc.regular) + len(sc.singular) == len(sites)
    assert sc.separated()


def test_fast_scan_agrees():
    O0 = bifurcation_frequency(1.0)
    sc = classify_and_cluster(O0, 1.0, 128, 0.05)
    assert singular_sites_fast(O0, 1.0, 128, 0.05) == sc.singular


def test_separation_constant_reported():
    O0 = bifurcation_frequency(1.0)
    sc = classify_and_cluster(O0, 1.0, 256, 0.05)
    x = sc.singular
    assert len(x) >= 2
    C = sc.separation_constant
    assert C > 0
    assert all(abs(a.j - b.j) >= C * (a.k + b.k) - 1e-12 for a in x for b in x if a != b)


def test_threshold_too_large():
    with pytest.raises(ThresholdTooLarge):
        classify_and_cluster(bifurcation_frequency(1.0), 1.0, 16, 3.5)


def test_cluster_radius_rule():
    assert [cluster_radius(L) for L in (8, 16, 32, 256)] == [3, 4, 6, 16]


def test_diophantine_margins():
    m, q = diophantine_margin(SQRT2)
    assert q == 2 and m == pytest.approx(2 * (3 - 2 * SQRT2))
    assert diophantine_margin(0.5)[0] == 0.0
    m, q = diophantine_margin(GOLDEN, DiophantineParams(q_max=1000))
    assert q == 1 and m == pytest.approx(2 - GOLDEN, abs=1e-15)
    # beyond q = 1 the Fibonacci denominators approach 1/sqrt5 from both sides
    qs = np.arange(2, 1001)
    tail = np.abs(qs * GOLDEN - np.round(qs * GOLDEN)) * qs
    assert tail.min() >= (1 / math.sqrt(5)) * (1 - 0.03)
    with pytest.raises(ValueError):
        DiophantineParams(q_max=1)


def test_eigenbasis_roundtrip():
    sites = build_lattice(6)
    eb = EigenBasis(sites, 1.3, 0.7)
    y = np.random.default_rng(0).normal(size=len(sites))
    assert np.allclose(eb.coords(eb.field(y)), y, atol=1e-14)
    D = eb.diagonal_operator(1.3)
    assert np.allclose(np.diag(D), spectrum(sites, 1.3, 0.7))
