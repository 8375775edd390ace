#!/usr/bin/env python3
"""
Tests for the gamma-fraction priors, their sampling and the calibration parameter priors
"""

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate, stats

from biodose.errors import PriorError
from biodose.models.schemas import ParamPrior, ParamPriorKind, ThetaPrior, ThetaPriorKind
from biodose.priors import (
    density,
    density_array,
    gamma_from_moments,
    mode,
    p_max,
    rho_from_theta,
    sample,
    sample_many,
    sample_param,
    theta_from_rho,
)

BETA = ThetaPrior(kind=ThetaPriorKind.BETA)
UNIFORM = ThetaPrior(kind=ThetaPriorKind.UNIFORM)

PRIORS = [
    BETA,
    UNIFORM,
    ThetaPrior(kind=ThetaPriorKind.UNIFORM, theta_min=0.2, theta_max=0.7),
    ThetaPrior(kind=ThetaPriorKind.GAUSSIAN_THETA, theta_hat=0.92, sigma_theta=0.02),
    ThetaPrior(kind=ThetaPriorKind.GAUSSIAN_THETA, theta_hat=0.95, sigma_theta=0.3),
    ThetaPrior(kind=ThetaPriorKind.GAUSSIAN_RHO, theta_hat=0.92, sigma_rho=0.05),
    ThetaPrior(kind=ThetaPriorKind.GAUSSIAN_RHO, rho_hat=0.5, sigma_rho=1.0),
]


def test_theta_rho_conversions():
    assert theta_from_rho(0.0) == 1.0
    assert theta_from_rho(1.0) == 0.5
    assert theta_from_rho(3.0) == 0.25
    assert rho_from_theta(0.25) == pytest.approx(3.0)
    rho = np.linspace(0.0, 50.0, 101)
    assert np.all(np.diff(theta_from_rho(rho)) < 0)
    with pytest.raises(PriorError):
        theta_from_rho(-0.1)
    with pytest.raises(PriorError):
        rho_from_theta(0.0)


def test_density_examples():
    assert density(BETA, 0.5) == pytest.approx(1.5)
    for theta in (0.01, 0.3, 0.99):
        assert density(UNIFORM, theta) == pytest.approx(1.0)
    for theta in (0.0, 1.0, 1.2):
        with pytest.raises(PriorError):
            density(BETA, theta)


@pytest.mark.parametrize("prior", PRIORS, ids=lambda p: p.kind.value)
def test_densities_integrate_to_one(prior):
    breakpoints = [mode(prior), prior.theta_min, prior.theta_max]
    breakpoints = sorted({b for b in breakpoints if 0.0 < b < 1.0})
    total, _ = integrate.quad(lambda t: density(prior, t), 0.0, 1.0, points=breakpoints or None, limit=400, epsabs=1e-10)
    assert total == pytest.approx(1.0, abs=1e-6)
    assert np.all(density_array(prior, np.linspace(0.0, 1.0, 1001)) >= 0)


def test_rho_prior_peaks_near_expected_fraction():
    prior = ThetaPrior(kind=ThetaPriorKind.GAUSSIAN_RHO, rho_hat=0.25, sigma_rho=0.01)
    grid = np.linspace(1e-4, 1.0 - 1e-4, 200001)
    peak = grid[np.argmax(density_array(prior, grid))]
    assert peak == pytest.approx(1.0 / 1.25, abs=2e-3)
    assert mode(prior) == pytest.approx(peak, abs=1e-4)
    assert p_max(prior) == pytest.approx(density(prior, mode(prior)), rel=1e-12)


def test_rho_prior_accepts_theta_alias():
    prior = ThetaPrior(kind=ThetaPriorKind.GAUSSIAN_RHO, theta_hat=0.92, sigma_rho=0.05)
    assert prior.rho_hat == pytest.approx(1.0 / 0.92 - 1.0)
    from_json = ThetaPrior.model_validate({"kind": "gauss_rho", "theta_hat": 0.92, "sigma": 0.05})
    assert from_json.sigma_rho == 0.05


def test_prior_validation():
    with pytest.raises(ValidationError):
        ThetaPrior(kind=ThetaPriorKind.GAUSSIAN_THETA, theta_hat=0.5)
    with pytest.raises(ValidationError):
        ThetaPrior(kind=ThetaPriorKind.UNIFORM, theta_min=0.8, theta_max=0.2)
    with pytest.raises(ValidationError):
        ParamPrior(kind=ParamPriorKind.GAMMA, k=-1.0, z=2.0)
    with pytest.raises(ValidationError):
        ParamPrior(kind=ParamPriorKind.GAUSSIAN, mean=0.1, sd=0.0)


def test_beta_samples_follow_the_density():
    draws = sample_many(BETA, np.random.default_rng(1), 100_000)
    assert draws.mean() == pytest.approx(0.5, abs=0.01)
    statistic = stats.kstest(draws, lambda t: 3 * t**2 - 2 * t**3).statistic
    assert statistic < 0.01


def test_gaussian_theta_sample_mean():
    prior = ThetaPrior(kind=ThetaPriorKind.GAUSSIAN_THETA, theta_hat=0.92, sigma_theta=0.02)
    draws = sample_many(prior, np.random.default_rng(2), 100_000)
    assert draws.mean() == pytest.approx(0.92, abs=0.005)
    assert np.all((draws > 0) & (draws < 1))


def test_rho_prior_samples_match_quadrature_cdf():
    prior = ThetaPrior(kind=ThetaPriorKind.GAUSSIAN_RHO, rho_hat=0.5, sigma_rho=1.0)
    draws = sample_many(prior, np.random.default_rng(3), 100_000)
    grid = np.linspace(0.0, 1.0, 20001)
    cdf = integrate.cumulative_trapezoid(density_array(prior, grid), grid, initial=0.0)
    statistic = stats.kstest(draws, lambda t: np.interp(t, grid, cdf)).statistic
    assert statistic < 0.01


def test_point_mass_and_collapsed_uniform():
    collapsed = ThetaPrior(kind=ThetaPriorKind.UNIFORM, theta_min=0.3, theta_max=0.3)
    assert collapsed.is_point_mass
    assert np.all(sample_many(collapsed, np.random.default_rng(0), 50) == 0.3)
    point = ThetaPrior.point_mass(0.7)
    assert sample(point, np.random.default_rng(0)) == 0.7
    with pytest.raises(PriorError):
        density_array(point, np.array([0.5]))


def test_sampling_is_reproducible():
    prior = PRIORS[5]
    first = sample_many(prior, np.random.default_rng(99), 1000)
    second = sample_many(prior, np.random.default_rng(99), 1000)
    assert np.array_equal(first, second)
    one = [sample(BETA, rng) for rng in [np.random.default_rng(4)] for _ in range(5)]
    two = [sample(BETA, rng) for rng in [np.random.default_rng(4)] for _ in range(5)]
    assert one == two


def test_gamma_parameter_prior_moments():
    prior = gamma_from_moments(0.8, 0.1)
    assert prior.k / prior.z == pytest.approx(0.8)
    assert np.sqrt(prior.k) / prior.z == pytest.approx(0.1)
    draws = sample_param(prior, np.random.default_rng(6), 100_000)
    assert draws.mean() == pytest.approx(0.8, rel=0.01)
    assert draws.std() == pytest.approx(0.1, rel=0.02)
    assert np.all(draws > 0)
    with pytest.raises(PriorError):
        gamma_from_moments(-1.0, 0.1)


def test_other_parameter_priors():
    gaussian = ParamPrior(kind=ParamPriorKind.GAUSSIAN, mean=0.02, sd=0.001)
    assert sample_param(gaussian, np.random.default_rng(7), 50_000).mean() == pytest.approx(0.02, rel=0.01)
    point = ParamPrior.point_mass(0.0164)
    assert np.all(sample_param(point, np.random.default_rng(7), 10) == 0.0164)
    assert point.expected == 0.0164
