import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from backend.errors import DomainError
from backend.gaussian import (
    SQRT_2PI,
    gaussian_density_d,
    gaussian_profile,
    gaussian_profile_curve,
    make_rng,
    sample_gaussian,
    spawn_rngs,
    spawn_seeds,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)
from backend.records import Provenance


def test_pdf_and_cdf_at_zero():
    assert std_normal_pdf(0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), abs=1e-16)
    assert std_normal_cdf(0.0) == 0.5


def test_quantile_known_value():
    assert std_normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert std_normal_quantile(0.5) == 0.0


@given(st.floats(min_value=1e-12, max_value=1.0 - 1e-12))
def test_quantile_inverts_cdf(p):
    assert abs(std_normal_cdf(std_normal_quantile(p)) - p) <= 1e-15 + 1e-12 * p


def test_quantile_vectorized_keeps_shape():
    p = np.array([[0.1, 0.5], [0.9, 0.25]])
    q = std_normal_quantile(p)
    assert q.shape == p.shape
    assert q[0, 1] == 0.0
    assert q[0, 0] == pytest.approx(-q[1, 0], abs=1e-14)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_quantile_rejects_closed_endpoints(p):
    with pytest.raises(DomainError):
        std_normal_quantile(p)


def test_profile_is_tight_at_half():
    assert abs(SQRT_2PI * gaussian_profile(0.5) - 1.0) <= 1e-12


def test_profile_endpoints_and_domain():
    assert gaussian_profile(0.0) == 0.0
    assert gaussian_profile(1.0) == 0.0
    with pytest.raises(DomainError):
        gaussian_profile(1.2)


def test_profile_is_symmetric_on_dyadic_grid():
    lam = np.arange(1, 1024) / 1024.0
    assert np.array_equal(gaussian_profile(lam), gaussian_profile(1.0 - lam))


def test_profile_curve_is_exact_and_infinite_dimensional():
    curve = gaussian_profile_curve(np.linspace(0.0, 1.0, 11))
    assert curve.provenance is Provenance.EXACT
    assert curve.dimension == math.inf
    assert curve.dimension_label == "inf"
    assert curve.is_concave()


def test_density_d_is_a_product():
    assert gaussian_density_d([0.0, 0.0]) == pytest.approx(1.0 / (2.0 * math.pi))
    batch = gaussian_density_d(np.zeros((5, 3)))
    assert batch.shape == (5,)
    with pytest.raises(DomainError):
        gaussian_density_d(np.zeros(0))


def test_generators_are_reproducible():
    a = make_rng(7).standard_normal(4)
    b = make_rng(7).standard_normal(4)
    assert np.array_equal(a, b)
    first, second = spawn_rngs(7, 2)
    assert not np.array_equal(first.standard_normal(4), second.standard_normal(4))


def test_spawn_seeds_are_stable_ints():
    seeds = spawn_seeds(3, 5)
    assert seeds == spawn_seeds(3, 5)
    assert len(set(seeds)) == 5
    assert all(isinstance(s, int) for s in seeds)


def test_sample_gaussian_shape():
    assert sample_gaussian(3, 10, 0).shape == (10, 3)
    with pytest.raises(DomainError):
        sample_gaussian(3, 0, 0)


def test_sample_gaussian_moments():
    n = 100_000
    x = sample_gaussian(2, n, 7)
    assert np.all(np.abs(x.mean(axis=0)) < 5.0 / math.sqrt(n))
    cov = np.cov(x, rowvar=False)
    assert np.all(np.abs(np.diag(cov) - 1.0) < 5.0 * math.sqrt(2.0 / n))
    assert abs(cov[0, 1]) < 5.0 / math.sqrt(n)


def test_cdf_derivative_is_pdf():
    t = np.linspace(-4.0, 4.0, 81)
    h = 1e-5
    slope = (np.asarray(std_normal_cdf(t + h)) - np.asarray(std_normal_cdf(t - h))) / (2.0 * h)
    assert np.allclose(slope, std_normal_pdf(t), atol=1e-8)


def test_profile_solves_its_ode():
    lam = np.linspace(0.05, 0.95, 19)
    h = 1e-3
    value = np.asarray(gaussian_profile(lam))
    second = (np.asarray(gaussian_profile(lam + h)) - 2.0 * value + np.asarray(gaussian_profile(lam - h))) / (h * h)
    assert np.all(np.abs(value * second + 1.0) < 1e-3)
