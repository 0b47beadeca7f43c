import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy import stats as sps

from coulombgas import ginibre as gin
from coulombgas.errors import ConditioningWarning, DomainError
from coulombgas.stats import chi2_critical, chi_square_gof, radial_histogram
from coulombgas.verify import radial_edges


def direct_kernel(n, z1, z2):
    w = n * z1 * np.conj(z2)
    s = sum(w**l / math.factorial(l) for l in range(n))
    return math.exp(-n * (abs(z1) ** 2 + abs(z2) ** 2) / 2) * s


small = st.complex_numbers(max_magnitude=1.5, allow_nan=False, allow_infinity=False)


# ------------------------------------------------------ truncated exponential

def test_trunc_exp_examples():
    for n in (1, 3, 10):
        assert gin.trunc_exp(n, 0) == 1
    assert gin.trunc_exp(1, 5 + 2j) == 1
    assert gin.trunc_exp(2, 3) == 4
    with pytest.raises(DomainError):
        gin.trunc_exp(0, 1.0)


@given(st.integers(1, 30), st.complex_numbers(max_magnitude=20, allow_nan=False,
                                              allow_infinity=False))
def test_remainder_completes_the_exponential(n, w):
    total = gin.trunc_exp(n, w) + gin.trunc_exp_remainder(n, w)
    ref = np.exp(w)
    scale = sum(abs(w) ** l / math.factorial(l) for l in range(n + 60))
    assert abs(total - ref) <= 1e-13 * scale


# -------------------------------------------------------------------- kernel

@given(st.integers(2, 12), small, small)
def test_kernel_matches_direct_sum(n, z1, z2):
    k = gin.kernel(n, z1, z2)
    assert abs(k - direct_kernel(n, z1, z2)) <= 1e-12 * max(1.0, abs(k))
    assert gin.kernel(n, z2, z1) == pytest.approx(np.conj(k), abs=1e-14)


def test_scaled_kernel_examples():
    assert gin.scaled_kernel(2, 0, 0) == 1.0
    z = 0.6 - 0.3j
    for n in (4, 16, 64):
        lam = n * abs(z) ** 2
        poisson_cdf = sps.poisson(lam).cdf(n - 1)
        assert gin.scaled_kernel(n, z, z) == pytest.approx(poisson_cdf, rel=1e-12)
        # z1 conj(z2) purely imaginary: bounded by the diagonal values
        u = 0.5j * z / abs(z)
        assert gin.scaled_kernel(n, z, u) <= math.sqrt(
            gin.scaled_kernel(n, z, z) * gin.scaled_kernel(n, u, u)) + 1e-15


def test_scaled_kernel_finite_in_envelope():
    for n in (2, 64, 256):
        for z1, z2 in [(10, 10), (10j, -10), (7 + 7j, 0.1)]:
            v = gin.scaled_kernel(n, z1, z2)
            assert np.isfinite(v) and v >= 0


def test_real_pair_input_accepted():
    assert gin.marginal1_density(8, np.array([0.3, 0.4])) == pytest.approx(
        gin.marginal1_density(8, 0.3 + 0.4j), rel=1e-15)


# ----------------------------------------------------------------- phi^{1,N}

def test_phi1_examples():
    for n in (1, 2, 8, 64):
        assert gin.marginal1_density(n, 0) == pytest.approx(1 / math.pi, rel=1e-15)
    assert gin.marginal1_density(1, 0.7) == pytest.approx(math.exp(-0.49) / math.pi, rel=1e-14)
    assert gin.marginal1_density(4096, 0.5) == pytest.approx(1 / math.pi, rel=1e-12)
    assert gin.marginal1_density(4096, 1.0) == pytest.approx(1 / (2 * math.pi), rel=0.02)


@pytest.mark.parametrize("n", [2, 8, 64])
def test_phi1_normalised_and_moment(n):
    f = lambda r: 2 * math.pi * r * gin.marginal1_density(n, r)
    mass = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, 8, limit=200)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)
    g = lambda r: r * r * f(r)
    m2 = integrate.quad(g, 0, 1, limit=200)[0] + integrate.quad(g, 1, 8, limit=200)[0]
    assert m2 == pytest.approx(gin.marginal1_second_moment(n), abs=1e-8)


def test_second_moment_values():
    assert gin.marginal1_second_moment(1) == 1.0
    assert gin.marginal1_second_moment(10**9) == pytest.approx(0.5)


def test_radial_cdf_against_quadrature():
    n = 8
    for r in (0.2, 0.9, 1.0, 1.4):
        q = integrate.quad(lambda s: 2 * math.pi * s * gin.marginal1_density(n, s), 0, r)[0]
        assert gin.radial_cdf(n, r) == pytest.approx(q, abs=1e-10)


@given(st.integers(1, 80), st.complex_numbers(max_magnitude=4, allow_nan=False,
                                              allow_infinity=False))
def test_phi1_nonnegative(n, z):
    assert gin.marginal1_density(n, z) >= 0


# ----------------------------------------------------------------- phi^{2,N}

@given(st.integers(2, 40), small)
def test_phi2_vanishes_on_diagonal(n, z):
    assert abs(gin.marginal2_density(n, z, z)) <= 1e-12
    assert gin.delta2(n, z, z) == pytest.approx(-gin.marginal1_density(n, z) ** 2, abs=1e-12)


@given(st.integers(2, 40), small, small)
def test_phi2_nonnegative_and_delta_bounds(n, z1, z2):
    assert gin.marginal2_density(n, z1, z2) >= -1e-12
    prod = gin.marginal1_density(n, z1) * gin.marginal1_density(n, z2)
    d = gin.delta2(n, z1, z2)
    assert -prod - 1e-12 <= d <= prod / (n - 1) + 1e-12


def test_delta_bounds_on_grid():
    axis = np.linspace(-1.5, 1.5, 40)
    z = (axis[:, None] + 1j * axis[None, :]).ravel()
    for n in (2, 8, 32):
        p1 = gin.marginal1_density(n, z)
        for a in z[::37]:
            d = gin.delta2(n, a, z)
            prod = gin.marginal1_density(n, a) * p1
            assert np.all(d >= -prod - 1e-12) and np.all(d <= prod / (n - 1) + 1e-12)


def test_phi2_far_apart_and_outside():
    n = 256
    assert gin.marginal2_density(n, 0.4, -0.4j) == pytest.approx(1 / math.pi**2, rel=5e-3)
    vals = [abs(gin.delta2(n, 0.3 + 0.1j, 1.5)) for n in (8, 16, 32, 64)]
    assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-10


def test_phi2_integrates_to_one():
    # rotation invariance: integrate over r1, r2 (Gauss-Legendre) and the
    # relative angle (trapezoid, spectrally accurate for periodic integrands)
    n = 4
    x, w = np.polynomial.legendre.leggauss(80)
    r, wr = 2.0 * (x + 1), 2.0 * w
    t = 2 * np.pi * np.arange(64) / 64
    r1, r2, tt = np.meshgrid(r, r, t, indexing="ij")
    vals = gin.marginal2_density(n, r1 + 0j, r2 * np.exp(1j * tt))
    weights = (wr[:, None, None] * wr[None, :, None]) * (2 * np.pi / 64) * 2 * np.pi * r1 * r2
    assert np.sum(vals * weights) == pytest.approx(1.0, abs=1e-4)


# ----------------------------------------------------------------- phi^{k,N}

@given(st.integers(2, 20), small, small)
def test_phik_reduces_to_closed_forms(n, z1, z2):
    assert gin.marginal_k_density(n, [z1]) == pytest.approx(
        gin.marginal1_density(n, z1), abs=1e-12)
    assert gin.marginal_k_density(n, [z1, z2], report=False) == pytest.approx(
        max(gin.marginal2_density(n, z1, z2), 0.0), abs=1e-10)


def test_phik_exchangeable_and_repeated(rng):
    n = 10
    zs = rng.normal(size=4) + 1j * rng.normal(size=4)
    zs *= 0.6
    base = gin.marginal_k_density(n, zs)
    for perm in itertools.permutations(range(4)):
        assert gin.marginal_k_density(n, zs[list(perm)]) == pytest.approx(base, abs=1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = gin.marginal_k_density(n, [zs[0], zs[1], zs[0]])
    assert abs(rep) <= 1e-12


def test_phik_full_n_matches_vandermonde(rng):
    # k = N: the joint density is prop. to prod|z_i - z_j|^2 exp(-N sum|z|^2)
    n = 4
    zs = 0.5 * (rng.normal(size=n) + 1j * rng.normal(size=n))
    vdm = np.prod([abs(zs[i] - zs[j]) ** 2 for i in range(n) for j in range(i + 1, n)])
    ref = vdm * math.exp(-n * np.sum(np.abs(zs) ** 2)) * n ** (n * (n + 1) / 2)
    ref /= math.pi**n * np.prod([math.factorial(k) for k in range(1, n + 1)])
    assert gin.marginal_k_density(n, zs) == pytest.approx(ref, rel=1e-10)


def test_phik_errors_and_warning(monkeypatch):
    with pytest.raises(DomainError):
        gin.marginal_k_density(2, [0.1, 0.2, 0.3])
    with pytest.raises(DomainError):
        gin.marginal_k_density(2, [])
    # a determinant that comes out clearly negative is reported, then clamped
    monkeypatch.setattr(gin.np.linalg, "det", lambda m: -1e-3 + 0j)
    with pytest.warns(ConditioningWarning):
        assert gin.marginal_k_density(4, [0.1, 0.2]) == 0.0


def test_evaluator_bundle():
    ev = gin.MarginalEvaluator(8)
    assert ev.phi1(0) == gin.marginal1_density(8, 0)
    assert ev.delta(0.1, 0.2) == gin.delta2(8, 0.1, 0.2)
    with pytest.raises(DomainError):
        gin.MarginalEvaluator(1)
    with pytest.raises(DomainError):
        gin.marginal2_density(1, 0.1, 0.2)


# ------------------------------------------------------------------ tail bound

def test_tail_bound_examples():
    assert gin.trunc_exp_tail_bound(8, 0) == 0.0
    ns = (8, 16, 32, 64)
    # r_N carries (e|z|)^N, so it decays in N only for |z| < 1/e
    for r in (0.1, 0.2, 0.3):
        logs = [math.log(gin.trunc_exp_tail_bound(n, r)) for n in ns]
        assert all(a > b for a, b in zip(logs, logs[1:]))
    logs = [math.log(gin.trunc_exp_tail_bound(n, 0.6)) for n in ns]
    assert all(a < b for a, b in zip(logs, logs[1:]))
    # relative to the exponential it approximates, the bound decays on all of |z| < 1
    for r in (0.3, 0.6, 0.9):
        rel = [math.log(gin.trunc_exp_tail_bound(n, r)) - n * r for n in ns]
        assert all(a > b for a, b in zip(rel, rel[1:]))


def test_tail_bound_formula():
    n, z = 12, 0.4 + 0.3j
    r = abs(z)
    ref = math.exp(n) / math.sqrt(2 * math.pi * n) * r**n * (n + 1) / (n * (1 - r) + 1)
    assert gin.trunc_exp_tail_bound(n, z) == pytest.approx(ref, rel=1e-12)
    z = 1.6j
    ref = math.exp(n) / math.sqrt(2 * math.pi * n) * 1.6**n * n / (n * 0.6 + 1)
    assert gin.trunc_exp_tail_bound(n, z) == pytest.approx(ref, rel=1e-12)


@given(st.integers(1, 64), st.floats(0, 2), st.floats(0, 2 * math.pi))
def test_tail_bound_holds(n, r, t):
    if 0.95 < r < 1.05:
        return
    z = r * complex(math.cos(t), math.sin(t))
    if r <= 1:
        lhs = abs(gin.trunc_exp_remainder(n, n * z))
    else:
        lhs = abs(gin.trunc_exp(n, n * z))
    assert lhs <= gin.trunc_exp_tail_bound(n, z) * (1 + 1e-12)


# -------------------------------------------------------------------- sampler

@pytest.mark.parametrize("n", [1, 2, 8, 64])
def test_sampler_second_moment(n, rng):
    m = 100_000
    r2 = np.sum(gin.sample_marginal1(n, rng, m) ** 2, axis=-1)
    se = r2.std(ddof=1) / math.sqrt(m)
    assert abs(r2.mean() - gin.marginal1_second_moment(n)) <= 3 * se


def test_sampler_radial_chi_square(rng):
    n, m = 64, 100_000
    edges = radial_edges(n)
    hist = radial_histogram(gin.sample_marginal1(n, rng, m), edges)
    probs = np.diff(np.append(gin.radial_cdf(n, edges[:-1]), 1.0))
    assert chi_square_gof(hist, probs) <= chi2_critical(49, 0.01)


def test_sampler_shape_and_tail(rng):
    assert gin.sample_marginal1(5, rng).shape == (2,)
    pts = gin.sample_marginal1(16, rng, 50_000)
    r = np.hypot(pts[:, 0], pts[:, 1])
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    assert sps.kstest(ang, sps.uniform(-math.pi, 2 * math.pi).cdf).pvalue > 1e-3
    for big in (1.5, 2.0):
        assert np.mean(r >= big) <= 4 * math.exp(-big * big / 2)


# --------------------------------------------------------------- Rayleigh

def test_rayleigh_re_z(rng):
    for n in (4, 64):
        q = gin.poincare_rayleigh(n, lambda p: p[..., 0],
                                  lambda p: np.stack([np.ones(len(p)), np.zeros(len(p))], -1),
                                  100_000, rng)
        assert abs(q.ratio - (n + 1) / (4 * n)) <= 3 * q.se
        assert q.dirichlet == 1.0


def test_rayleigh_modulus_squared_exact_value(rng):
    # Var|z|^2 / E|2z|^2 = (N+5)/(24N) under the one-point law
    for n in (4, 16, 64):
        q = gin.poincare_rayleigh(n, lambda p: np.sum(p * p, -1), lambda p: 2 * p, 100_000, rng)
        assert abs(q.ratio - (n + 5) / (24 * n)) <= 4 * q.se


def test_rayleigh_rejections(rng):
    with pytest.raises(DomainError):
        gin.poincare_rayleigh(4, lambda p: np.ones(len(p)), lambda p: np.zeros_like(p),
                              10_000, rng)
    with pytest.raises(DomainError):
        gin.poincare_rayleigh(4, lambda p: p[..., 0], lambda p: p, 10_000, rng)
    with pytest.raises(DomainError):
        gin.poincare_rayleigh(4, lambda p: p[..., 0], lambda p: p, 100, rng)
