import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from mhsampler.stochastic import InvalidParameterError, log_pmf_geometric, log_pmf_poisson
from mhsampler.targets import (
    MIXTURE_DATA_SIZE,
    MixtureData,
    TargetModel,
    discrete_target,
    gaussian_target,
    generate_mixture_dataset,
    load_lgss_observations,
    load_mixture_data,
    mixture_log_likelihood,
    mixture_log_posterior,
    mixture_target,
    normalize_by_quadrature,
    read_values,
    simpson,
    toy_sin_log_target,
    toy_sin_target,
)


def central_difference(f, x, h=1e-5):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# --- toy target ---

def test_toy_zeros():
    assert toy_sin_log_target(0.0) == -math.inf
    assert toy_sin_log_target(math.pi / 2) == -math.inf
    assert toy_sin_log_target(math.pi) == -math.inf
    assert toy_sin_target().log_density(np.array([0.0])) == -math.inf


def test_toy_value_at_quarter_pi():
    x = math.pi / 4
    expected = math.log(0.5 * 1.0 * stats.norm.pdf(x))
    assert toy_sin_log_target(x) == pytest.approx(expected, abs=1e-13)
    # 0.5 * phi(pi/4) = 0.1465321 by direct evaluation
    assert math.exp(toy_sin_log_target(x)) == pytest.approx(0.1465321, abs=1e-7)


@given(st.floats(-20, 20))
def test_toy_symmetric(x):
    assert toy_sin_log_target(x) == toy_sin_log_target(-x)


def test_toy_vectorized_matches_scalar():
    xs = np.linspace(-6, 6, 1001)
    v = toy_sin_log_target(xs)
    s = np.array([toy_sin_log_target(float(x)) for x in xs])
    assert np.array_equal(v, s)


def test_toy_direct_formula():
    xs = np.array([-2.3, -0.7, 0.1, 1.2, 3.14, 4.5])
    direct = np.log(np.sin(xs) ** 2 * np.sin(2 * xs) ** 2 * stats.norm.pdf(xs))
    assert np.allclose(toy_sin_log_target(xs), direct, atol=1e-12)


# --- gaussian target ---

def test_gaussian_target():
    t = gaussian_target(2)
    assert t.log_density(np.zeros(2)) == 0.0
    assert np.array_equal(t.gradient(np.array([2.0, 0.0])), np.array([-2.0, 0.0]))
    with pytest.raises(InvalidParameterError):
        gaussian_target(0)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_gradient_matches_finite_differences(d):
    t = gaussian_target(d)
    rng = np.random.default_rng(d)
    for _ in range(20):
        x = rng.normal(size=d) * 2
        fd = central_difference(t.log_density, x)
        g = t.gradient(x)
        assert np.allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_shifted_target_adds_constant():
    t = gaussian_target(2).shifted(3.5)
    assert t.log_density(np.zeros(2)) == 3.5
    assert t.gradient is not None


# --- discrete target ---

def test_discrete_target():
    t = discrete_target([1, 2, 0, 4])
    assert t.log_density(np.array([1.0])) == pytest.approx(math.log(2))
    assert t.log_density(np.array([2.0])) == -math.inf
    assert t.log_density(np.array([4.0])) == -math.inf
    assert t.log_density(np.array([-1.0])) == -math.inf
    assert t.log_density(np.array([0.5])) == -math.inf
    t2 = discrete_target(np.arange(1, 7).reshape(2, 3))
    assert t2.dimension == 2
    assert t2.log_density(np.array([1.0, 2.0])) == pytest.approx(math.log(6))
    with pytest.raises(InvalidParameterError):
        discrete_target([0, 0])


# --- mixture ---

def test_shipped_dataset():
    data = load_mixture_data()
    assert data.n == MIXTURE_DATA_SIZE == 123
    assert all(v >= 0 for v in data.observations)
    assert data == generate_mixture_dataset()
    assert 0.8 < np.mean(data.observations) < 1.2


def test_mixture_data_validation():
    with pytest.raises(InvalidParameterError):
        MixtureData(())
    with pytest.raises(InvalidParameterError):
        MixtureData((1, -2))


def test_read_values_reports_line(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("# header\n1\n2\nthree\n")
    with pytest.raises(InvalidParameterError, match=":4:"):
        read_values(p, integer=True)
    p.write_text("0.5\n\n-1.25  # comment\n")
    assert read_values(p) == [0.5, -1.25]


def test_lgss_observations_shipped():
    ys = load_lgss_observations()
    assert len(ys) == 20


def test_mixture_likelihood_collapses():
    data = load_mixture_data()
    lam = 1.3
    pois = sum(log_pmf_poisson(x, lam) for x in data.observations)
    geom = sum(log_pmf_geometric(x, 1 / (1 + lam)) for x in data.observations)
    assert mixture_log_likelihood(data, lam, 1.0) == pytest.approx(pois, rel=1e-12)
    assert mixture_log_likelihood(data, lam, 0.0) == pytest.approx(geom, rel=1e-12)


def test_mixture_one_observation():
    data = MixtureData((0,))
    expected = math.log(0.5 * math.exp(-1) + 0.5 * 0.5)
    assert mixture_log_likelihood(data, 1.0, 0.5) == pytest.approx(expected, abs=1e-14)
    assert mixture_log_posterior(data, 1.0, 0.5) == pytest.approx(expected + math.log(2 / math.pi), abs=1e-14)


def test_mixture_against_direct_sum():
    data = MixtureData((0, 1, 3, 7, 2))
    lam, a = 2.2, 0.3
    direct = sum(math.log(a * stats.poisson.pmf(x, lam) + (1 - a) * stats.geom.pmf(x + 1, 1 / (1 + lam)))
                 for x in data.observations)
    assert mixture_log_likelihood(data, lam, a) == pytest.approx(direct, rel=1e-12)


def test_prior_separates_from_data():
    d1, d2 = MixtureData((0, 1, 2)), load_mixture_data()
    for lam, a in [(0.5, 0.2), (1.7, 0.9)]:
        p1 = mixture_log_posterior(d1, lam, a) - mixture_log_likelihood(d1, lam, a)
        p2 = mixture_log_posterior(d2, lam, a) - mixture_log_likelihood(d2, lam, a)
        assert p1 == pytest.approx(p2, abs=1e-10)


def test_lambda_rescaling():
    data = load_mixture_data()
    lam, a, c = 0.9, 0.4, 1.5
    dpost = mixture_log_posterior(data, c * lam, a) - mixture_log_posterior(data, lam, a)
    dlik = mixture_log_likelihood(data, c * lam, a) - mixture_log_likelihood(data, lam, a)
    assert dpost == pytest.approx(dlik - math.log(c), abs=1e-9)


def test_mixture_support():
    data = load_mixture_data()
    assert mixture_log_posterior(data, 1.0, 0.0) == -math.inf
    assert mixture_log_posterior(data, 1.0, 1.0) == -math.inf
    assert mixture_log_posterior(data, -1.0, 0.5) == -math.inf
    with pytest.raises(InvalidParameterError):
        mixture_log_likelihood(data, 0.0, 0.5)
    t = mixture_target(data)
    assert t.coord_names == ("lambda", "alpha")
    assert t.log_density(np.array([1.0, 0.5])) == mixture_log_posterior(data, 1.0, 0.5)


@given(st.floats(0.05, 5), st.floats(0.01, 0.99))
def test_mixture_continuity(lam, a):
    data = load_mixture_data()
    base = mixture_log_likelihood(data, lam, a)
    assert abs(mixture_log_likelihood(data, lam + 1e-8, a) - base) < 1e-4
    assert abs(mixture_log_likelihood(data, lam, a + 1e-8) - base) < 1e-4


@pytest.mark.parametrize("lam", [0.2, 1.0, 3.0])
def test_components_share_mean(lam):
    ks = np.arange(0, 600)
    pois = sum(k * math.exp(log_pmf_poisson(int(k), lam)) for k in ks[:200])
    geom = sum(k * math.exp(log_pmf_geometric(int(k), 1 / (1 + lam))) for k in ks)
    assert pois == pytest.approx(lam, abs=1e-8)
    assert geom == pytest.approx(lam, abs=1e-8)


# --- quadrature ---

def test_quadrature_normal():
    z = normalize_by_quadrature(lambda x: -0.5 * x * x - 0.5 * math.log(2 * math.pi), -8, 8)
    assert abs(z - 1) < 1e-6


def test_quadrature_constant():
    assert normalize_by_quadrature(lambda x: np.zeros_like(x), 0, 1, 101) == pytest.approx(1.0, abs=1e-12)


def test_quadrature_toy():
    z1 = normalize_by_quadrature(toy_sin_log_target, -5, 5, 4001)
    z2 = normalize_by_quadrature(toy_sin_log_target, -5, 5, 8001)
    ref, _ = integrate.quad(lambda x: math.exp(toy_sin_log_target(x)), -5, 5, limit=500)
    assert z1 > 0
    assert abs(z1 - z2) / z2 < 1e-4
    assert z1 == pytest.approx(ref, rel=1e-6)
    # TargetModel input gives the same number
    assert normalize_by_quadrature(toy_sin_target(), -5, 5, 4001) == pytest.approx(z1, rel=1e-12)


def test_quadrature_validation():
    with pytest.raises(InvalidParameterError):
        normalize_by_quadrature(toy_sin_log_target, 1, 0)
    with pytest.raises(InvalidParameterError):
        normalize_by_quadrature(toy_sin_log_target, 0, 1, 50)
    with pytest.raises(InvalidParameterError):
        normalize_by_quadrature(gaussian_target(2))
    with pytest.raises(InvalidParameterError):
        simpson(np.ones(4), 0, 1)


def test_target_model_default_names():
    t = TargetModel(3, lambda x: 0.0)
    assert t.coord_names == ("x0", "x1", "x2")
    assert not t.has_gradient
