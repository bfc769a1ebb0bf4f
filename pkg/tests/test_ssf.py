import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.linalg import expm

from conftest import random_hermitian, random_unitary, rel_err
from spectralshift.funcspace import Exponential, Gaussian, Polynomial, Rational
from spectralshift.multimeasure import EnvelopeError
from spectralshift.spectral import decompose
from spectralshift.splines import pp_cumulative
from spectralshift.ssf import (
    krein_xi,
    random_pair,
    spectral_hull,
    ssf_densities,
    ssf_density,
    taylor_remainder,
    trace_formula_check,
)


def pair(seed, n):
    return random_pair(np.random.default_rng(seed), n)


def hull_grid(res, m=1000):
    c, d = res.hull
    return np.linspace(c, d, m)


def off_breaks(g, *densities, gap=1e-8):
    """Drop grid points within round-off of a jump; pointwise checks are ill-posed there."""
    keep = np.ones(g.shape, dtype=bool)
    for P in densities:
        keep &= np.min(np.abs(g[:, None] - P.breakpoints[None, :]), axis=1) > gap
    return g[keep]


# ---------------------------------------------------------------- Taylor remainders

def test_remainder_zero_perturbation():
    H0, _ = pair(0, 3)
    R = taylor_remainder(Gaussian(0, 1), H0, np.zeros((3, 3)), 2)
    assert np.allclose(R, 0, atol=1e-14)


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_remainder_low_degree_polynomial_vanishes(p):
    H0, V = pair(p, 4)
    R = taylor_remainder(Polynomial(tuple(range(1, p + 1))), H0, V, p)
    assert np.max(np.abs(R)) <= 1e-10


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_remainder_of_monomial_is_power(p):
    H0, V = pair(10 + p, 4)
    R = taylor_remainder(Polynomial((0,) * p + (1,)), H0, V, p)
    assert np.allclose(R, np.linalg.matrix_power(V, p), atol=1e-10)


def test_remainder_exponential_against_expm():
    H0, V = pair(5, 3)
    s, p = 1.5, 3
    # Taylor coefficients of x -> exp(is(H0 + xV)) from a block-bidiagonal exponential
    n = 3
    M = np.zeros(((p + 1) * n,) * 2, dtype=complex)
    for j in range(p + 1):
        M[j * n:(j + 1) * n, j * n:(j + 1) * n] = 1j * s * H0
        if j < p:
            M[j * n:(j + 1) * n, (j + 1) * n:(j + 2) * n] = 1j * s * V
    E = expm(M)
    jets = sum(E[:n, j * n:(j + 1) * n] for j in range(p))
    expected = expm(1j * s * (H0 + V)) - jets
    assert np.allclose(taylor_remainder(Exponential(s), H0, V, p), expected, atol=1e-12)


def test_remainder_order_check():
    with pytest.raises(ValueError):
        taylor_remainder(Gaussian(0, 1), [[0.0]], [[1.0]], 0)


# ---------------------------------------------------------------- xi

def test_xi_examples():
    assert np.all(krein_xi(np.eye(2), np.zeros((2, 2)))(np.linspace(-3, 3, 13)) == 0)
    xi = krein_xi([[0.0]], [[2.0]])
    assert xi(-0.1) == 0 and xi(0) == 1 and xi(1.99) == 1 and xi(2) == 0
    assert krein_xi([[0.0]], [[-2.0]])(-1.0) == -1


@pytest.mark.parametrize("seed", range(5))
def test_xi_integrates_to_trace(seed):
    H0, V = pair(seed, 2 + seed)
    xi = krein_xi(H0, V)
    assert pp_cumulative(xi).right_value == pytest.approx(np.trace(V).real, abs=1e-9)


# ---------------------------------------------------------------- densities

@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("a,v", [(0.3, 0.7), (-1.0, 2.5), (0.5, -0.8)])
def test_scalar_closed_form(p, a, v):
    for variant in ("nup1", "nup2"):
        res = ssf_density([[a]], [[v]], p, variant)
        lo, hi = sorted((a, a + v))
        t = np.linspace(lo, hi, 41)[1:-1]
        expected = math.copysign(1.0, v) * (a + v - t) ** (p - 1) / math.factorial(p - 1)
        assert np.max(np.abs(res.density(t) - expected)) <= 1e-12
        assert res.density(lo - 0.1) == 0 and res.density(hi + 0.1) == 0
        assert res.mass == pytest.approx(v**p / math.factorial(p), abs=1e-14)


def test_compute_example_matches_half_square():
    res = ssf_density([[0.0]], [[1.0]], 3)
    t = np.array([0.1, 0.5, 0.9])
    assert np.allclose(res.density(t), (1 - t) ** 2 / 2)
    assert res.mass == pytest.approx(1 / 6)


@pytest.mark.parametrize("seed", range(6))
def test_mass_support_reality(seed):
    n = 2 + seed % 4
    H0, V = pair(40 + seed, n)
    for variant in ("nup1", "nup2"):
        for res in ssf_densities(H0, V, 4, variant):
            p = res.order
            assert abs(res.mass - np.trace(np.linalg.matrix_power(V, p)) / math.factorial(p)) <= 1e-9
            c, d = res.hull
            w = d - c
            outside = np.concatenate([np.linspace(c - 3 * w, c - 1e-9, 50), np.linspace(d, d + 3 * w, 50)])
            assert np.max(np.abs(res.density(outside))) <= 1e-12
            assert np.max(np.abs(res.density(hull_grid(res)).imag)) <= 1e-9
            assert res.tail_residual <= 1e-10


@pytest.mark.parametrize("seed", range(6))
def test_variants_agree(seed):
    H0, V = pair(60 + seed, 2 + seed % 4)
    a, b = ssf_densities(H0, V, 4, "nup1"), ssf_densities(H0, V, 4, "nup2")
    for ra, rb in zip(a[1:], b[1:]):
        g = hull_grid(ra)
        assert np.max(np.abs(ra.density(g) - rb.density(g))) <= 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_koplienko_closed_form(seed):
    """eta_2(t) = Tr[E_H0((-inf, t]) V] - int_{-inf}^t xi, computed straight from projections."""
    H0, V = pair(80 + seed, 3 + seed % 2)
    eta2 = ssf_density(H0, V, 2).density
    D = decompose(H0)
    xi_cum = pp_cumulative(krein_xi(H0, V))
    g = hull_grid(ssf_density(H0, V, 1), 257)
    expected = np.array([
        sum(np.trace(P @ V) for lam, P in zip(D.eigenvalues, D.projections) if lam <= t) for t in g
    ]) - xi_cum(g)
    assert np.max(np.abs(eta2(g) - expected)) <= 1e-12


def test_zero_perturbation_gives_zero_density():
    H0, _ = pair(3, 4)
    for res in ssf_densities(H0, np.zeros((4, 4)), 4):
        assert np.all(res.density(np.linspace(-5, 5, 101)) == 0)
        assert res.mass == 0


def test_shift_covariance():
    H0, V = pair(7, 3)
    c = 0.75
    for r0, r1 in zip(ssf_densities(H0, V, 4), ssf_densities(H0 + c * np.eye(3), V, 4)):
        g = off_breaks(hull_grid(r0, 300), r0.density)
        assert np.max(np.abs(r1.density(g + c) - r0.density(g))) <= 1e-9


def test_unitary_invariance():
    rng = np.random.default_rng(8)
    H0, V = pair(8, 4)
    U = random_unitary(rng, 4)
    conj = lambda A: U @ A @ U.conj().T
    for r0, r1 in zip(ssf_densities(H0, V, 4), ssf_densities(conj(H0), conj(V), 4)):
        g = off_breaks(hull_grid(r0, 300), r0.density, r1.density)
        assert np.max(np.abs(r1.density(g) - r0.density(g))) <= 1e-9


def test_degenerate_spectrum():
    rng = np.random.default_rng(9)
    H0 = np.diag([0.0, 0.0, 1.0, 1.0])
    V = random_hermitian(rng, 4)
    V *= 0.5 / np.linalg.norm(V)
    for p in range(1, 5):
        f = Gaussian(0.5, 1.0)
        assert trace_formula_check(H0, V, p, f)["rel_err"] <= 1e-9


def test_hull():
    assert spectral_hull([[0.0]], [[2.0]]) == (0.0, 2.0)
    assert ssf_density([[1.0]], [[-0.5]], 2).hull == (0.5, 1.0)


def test_bad_variant_and_envelope():
    H0, V = pair(1, 2)
    with pytest.raises(ValueError):
        ssf_density(H0, V, 2, "nup3")
    with pytest.raises(ValueError):
        ssf_density(H0, V, 0)
    H0 = np.diag(np.arange(40.0))
    V = np.full((40, 40), 1e-3)
    with pytest.raises(EnvelopeError):
        ssf_density(H0, V, 6)


# ---------------------------------------------------------------- trace formula

def test_trace_formula_monomial():
    H0, V = pair(11, 3)
    for p in range(1, 5):
        r = trace_formula_check(H0, V, p, Polynomial((0,) * p + (1,)))
        trVp = np.trace(np.linalg.matrix_power(V, p))
        assert r["trace_side"] == pytest.approx(trVp, abs=1e-10)
        assert r["integral_side"] == pytest.approx(trVp, abs=1e-10)


@pytest.mark.parametrize("p", [1, 2])
def test_krein_and_koplienko_formulas(p):
    H0, V = pair(12 + p, 4)
    f = Rational((1j,))
    dens = krein_xi(H0, V) if p == 1 else ssf_density(H0, V, 2).density
    lhs = np.trace(taylor_remainder(f, H0, V, p))
    c, d = spectral_hull(H0, V)
    pts = list(dens.breakpoints)
    re = integrate.quad(lambda t: (f.eval_derivative(t, p) * dens(t)).real, c, d, points=pts, limit=200)[0]
    im = integrate.quad(lambda t: (f.eval_derivative(t, p) * dens(t)).imag, c, d, points=pts, limit=200)[0]
    assert rel_err(lhs, re + 1j * im) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 5), p=st.integers(1, 4),
       which=st.sampled_from(["poly", "exp", "gauss", "rat"]))
def test_trace_formula_property(seed, n, p, which):
    H0, V = pair(seed, n)
    f = {
        "poly": Polynomial(tuple(np.random.default_rng(seed).uniform(-1, 1, p + 4))),
        "exp": Exponential(-2.0 if seed % 2 else 1.0),
        "gauss": Gaussian(0.0, 1.0),
        "rat": Rational((2j if seed % 2 else -1j,)),
    }[which]
    r = trace_formula_check(H0, V, p, f, "nup2" if seed % 3 == 0 else "nup1")
    assert r["rel_err"] <= (1e-8 if which in ("poly", "rat") else 1e-6)
