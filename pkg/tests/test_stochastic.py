import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from mhsampler.stochastic import (
    Beta,
    InvalidParameterError,
    LogNormal,
    Normal,
    Uniform,
    log_pdf_beta,
    log_pdf_normal,
    log_pmf_geometric,
    log_pmf_poisson,
    logsumexp,
    make_rng,
    sample,
    spawn_rngs,
)


def test_normal_values():
    assert log_pdf_normal(0, 0, 1) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)
    assert log_pdf_normal(0, 0, 1) == pytest.approx(-0.9189385, abs=1e-7)
    assert log_pdf_normal(1, 1, 5) == pytest.approx(-0.9189385332046727 - math.log(5), abs=1e-14)
    assert log_pdf_normal(2, 0, 1) == pytest.approx(-2.9189385332046727, abs=1e-14)


@given(st.floats(-50, 50), st.floats(-10, 10), st.floats(0.01, 100))
def test_normal_matches_scipy(x, mu, sigma):
    assert log_pdf_normal(x, mu, sigma) == pytest.approx(stats.norm.logpdf(x, mu, sigma), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_normal_rejects_bad_sigma(sigma):
    with pytest.raises(InvalidParameterError):
        log_pdf_normal(0.0, 0.0, sigma)


def test_poisson_values():
    assert log_pmf_poisson(0, 1) == pytest.approx(-1.0)
    assert log_pmf_poisson(1, 1) == pytest.approx(-1.0)
    assert log_pmf_poisson(5, 2) == pytest.approx(5 * math.log(2) - 2 - math.log(120), abs=1e-13)
    with pytest.raises(InvalidParameterError):
        log_pmf_poisson(-1, 1.0)
    with pytest.raises(InvalidParameterError):
        log_pmf_poisson(1, 0.0)


@given(st.integers(0, 200), st.floats(0.01, 50))
def test_poisson_matches_scipy(k, lam):
    assert log_pmf_poisson(k, lam) == pytest.approx(stats.poisson.logpmf(k, lam), rel=1e-10, abs=1e-10)


def test_geometric_values():
    assert log_pmf_geometric(0, 0.5) == pytest.approx(math.log(0.5))
    assert log_pmf_geometric(3, 0.25) == pytest.approx(math.log(0.25) + 3 * math.log(0.75))
    assert log_pmf_geometric(0, 1.0) == 0.0
    assert log_pmf_geometric(2, 1.0) == -math.inf
    for p in (0.0, 1.5, -0.1):
        with pytest.raises(InvalidParameterError):
            log_pmf_geometric(1, p)


@given(st.integers(0, 100), st.floats(0.01, 20))
def test_geometric_matches_mixture_form(k, lam):
    # lambda^k (1 + lambda)^(-k-1)
    expected = k * math.log(lam) - (k + 1) * math.log1p(lam)
    assert log_pmf_geometric(k, 1 / (1 + lam)) == pytest.approx(expected, rel=1e-10, abs=1e-10)
    # scipy's geom starts at 1
    assert log_pmf_geometric(k, 1 / (1 + lam)) == pytest.approx(stats.geom.logpmf(k + 1, 1 / (1 + lam)),
                                                                   rel=1e-9, abs=1e-9)


def test_beta_values():
    assert log_pdf_beta(0.5, 1, 1) == pytest.approx(0.0, abs=1e-15)
    assert log_pdf_beta(0.5, 0.5, 0.5) == pytest.approx(math.log(2 / math.pi), abs=1e-14)
    assert log_pdf_beta(0.25, 2, 2) == pytest.approx(math.log(6) + math.log(0.25) + math.log(0.75), abs=1e-14)


@pytest.mark.parametrize("x", [0.0, 1.0, -0.2, 1.3])
def test_beta_boundary(x):
    assert log_pdf_beta(x, 0.5, 0.5) == -math.inf
    with pytest.raises(InvalidParameterError):
        log_pdf_beta(x, 0.5, 0.5, strict=True)


@given(st.floats(1e-6, 1 - 1e-6), st.floats(0.1, 20), st.floats(0.1, 20))
def test_beta_matches_scipy(x, a, b):
    assert log_pdf_beta(x, a, b) == pytest.approx(stats.beta.logpdf(x, a, b), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("dist,lo,hi", [
    (Normal(0.3, 1.7), -math.inf, math.inf),
    (LogNormal(0.2, 0.6), 0, math.inf),
    (Beta(2.5, 3.0), 0, 1),
    (Beta(1.0, 1.0), 0, 1),
    (Uniform(-1.0, 2.0), -1, 2),
])
def test_densities_integrate_to_one(dist, lo, hi):
    total, _ = integrate.quad(lambda x: math.exp(dist.log_pdf(x)), lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
    assert abs(total - 1) < 1e-6


def test_beta_singular_integrates_to_one():
    total, _ = integrate.quad(lambda x: math.exp(log_pdf_beta(x, 0.5, 0.5)), 0, 1, limit=200)
    assert abs(total - 1) < 1e-6


@pytest.mark.parametrize("lam", [0.1, 1.0, 4.0])
def test_mass_functions_sum_to_one(lam):
    pois = sum(math.exp(log_pmf_poisson(k, lam)) for k in range(200))
    p = 1 / (1 + lam)
    geom = sum(math.exp(log_pmf_geometric(k, p)) for k in range(2000))
    assert abs(pois - 1) < 1e-10
    assert abs(geom - 1) < 1e-10


def test_lognormal_parameters_on_log_scale():
    d = LogNormal(0.4, 0.3)
    assert d.log_pdf(2.0) == pytest.approx(stats.lognorm.logpdf(2.0, 0.3, scale=math.exp(0.4)), abs=1e-12)
    assert d.log_pdf(0.0) == -math.inf


def test_same_seed_same_draws():
    a = make_rng(123).standard_normal(50)
    b = make_rng(123).standard_normal(50)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, make_rng(124).standard_normal(50))


def test_substreams_reproducible_and_distinct():
    s1 = [r.random(5) for r in spawn_rngs(7, 3)]
    s2 = [r.random(5) for r in spawn_rngs(7, 3)]
    for x, y in zip(s1, s2):
        assert np.array_equal(x, y)
    assert not np.array_equal(s1[0], s1[1])
    # independent enough for testing: low sample correlation between two long substreams
    r = spawn_rngs(7, 2)
    u, v = r[0].random(10**4), r[1].random(10**4)
    assert abs(np.corrcoef(u, v)[0, 1]) < 0.04


def test_bad_seed():
    with pytest.raises(InvalidParameterError):
        make_rng(-1)


@settings(max_examples=50)
@given(st.floats(-100, 100), st.floats(0.01, 10), st.integers(0, 2**32))
def test_uniform_draw_in_support(x, alpha, seed):
    y = sample(Uniform(x - alpha, x + alpha), make_rng(seed))
    assert x - alpha <= y < x + alpha


@settings(max_examples=50)
@given(st.floats(0.001, 0.999), st.floats(0.01, 100), st.integers(0, 2**32))
def test_mixture_beta_draw_in_support(alpha, eps, seed):
    y = sample(Beta(1 + eps * alpha, 1 + eps * (1 - alpha)), make_rng(seed))
    assert 0 < y < 1


def test_normal_draw_mean():
    rng = make_rng(2024)
    draws = np.array([sample(Normal(0, 1), rng) for _ in range(10**5)])
    assert abs(draws.mean()) < 0.02


def test_descriptor_validation():
    for bad in (lambda: Uniform(1, 1), lambda: Normal(0, 0), lambda: LogNormal(0, -1), lambda: Beta(0, 1)):
        with pytest.raises(InvalidParameterError):
            bad()


def test_logsumexp():
    assert logsumexp([-math.inf, -math.inf]) == -math.inf
    assert logsumexp([]) == -math.inf
    assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2))
    assert logsumexp([0.0, -math.inf]) == 0.0
    # (-inf) + finite stays -inf; exp(-inf) is 0
    assert -math.inf + 5.0 == -math.inf and math.exp(-math.inf) == 0.0
