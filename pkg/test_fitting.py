#!/usr/bin/env python3
"""
Tests for the fitting engines, the robust weights and the parameter uncertainties
"""

import math

import numpy as np
import pytest

from biodose.curves import derivative_wrt_param, evaluate_many
from biodose.errors import CurveError, DataError, InputError, RankDeficiencyError
from biodose.fitting import (
    fit_curve,
    fit_least_squares,
    fit_mixture,
    fit_poisson_mle,
    fit_robust_bayesian,
    log_posterior,
    mixture_point_probability,
    point_probability,
    residuals,
    uncertainties_cramer_rao,
    uncertainties_hessian,
    weight_g,
    weight_g_mixture,
    xi_robust,
)
from biodose.models.schemas import CurveKind, CurveModel, DataPoint, FitEngine, FitOptions

TIGHT = FitOptions(tol=1e-12, max_iter=5000)


def line_points(doses, slope=0.5, y0=0.0005, sigma0=0.01):
    return [DataPoint(dn=d, dg=0.0, e=y0 + slope * d, sigma0=sigma0) for d in doses]


def outlier_points():
    """20 points on Y = 0.0005 + 0.5 D with the last three pushed up by 10 sigma0"""
    points = []
    for k in range(1, 21):
        dose = 0.25 * k
        e = 0.0005 + 0.5 * dose + (1.0 if k > 17 else 0.0)
        points.append(DataPoint(dn=dose, dg=0.0, e=e, sigma0=0.1))
    return points


def random_mixed_points(seed):
    rng = np.random.default_rng(seed)
    points = []
    for _ in range(12):
        dn, dg = rng.uniform(0.0, 3.0, 2)
        e = 0.0005 + 0.3 * dn + 0.02 * dg + 0.05 * dg**2 + rng.normal(0.0, 0.02)
        points.append(DataPoint(dn=dn, dg=dg, e=max(e, 0.0), sigma0=0.02))
    return points


def test_least_squares_recovers_exact_line():
    result = fit_least_squares(line_points([1.0, 2.0, 3.0, 4.0, 5.0]), CurveKind.LINEAR_NEUTRON)
    assert result.model.params[0] == pytest.approx(0.5, abs=1e-10)
    assert result.model.y0 == pytest.approx(0.0005, abs=1e-10)
    assert len(result.sigmas) == 2
    assert result.converged


def test_least_squares_two_points_interpolates():
    result = fit_least_squares(line_points([1.0, 3.0], slope=0.2), CurveKind.LINEAR_NEUTRON)
    assert result.chi2 == pytest.approx(0.0, abs=1e-18)


def test_least_squares_degenerate_design_is_rank_deficient():
    points = [DataPoint(dn=2.0, dg=0.0, e=e, sigma0=0.01) for e in (0.9, 1.0, 1.1)]
    with pytest.raises(RankDeficiencyError):
        fit_least_squares(points, CurveKind.LINEAR_NEUTRON)


def test_robust_fit_resists_outliers():
    data = outlier_points()
    least_squares = fit_least_squares(data, CurveKind.LINEAR_NEUTRON)
    robust = fit_robust_bayesian(data, CurveKind.LINEAR_NEUTRON)
    assert abs(least_squares.model.params[0] - 0.5) / 0.5 > 0.20
    assert abs(robust.model.params[0] - 0.5) / 0.5 < 0.05
    assert robust.converged
    # outliers end up with the smallest weights
    assert max(robust.weights[-3:]) < min(robust.weights[:-3])


def test_robust_fit_on_noiseless_data_is_exact():
    result = fit_robust_bayesian(line_points([0.5, 1.0, 2.0, 4.0]), CurveKind.LINEAR_NEUTRON)
    assert result.model.params[0] == pytest.approx(0.5, abs=1e-6)
    assert result.model.y0 == pytest.approx(0.0005, abs=1e-6)


def test_robust_single_point_single_parameter():
    template = CurveModel(kind=CurveKind.LINEAR_NEUTRON, params=(1.0,), y0=0.0005)
    point = [DataPoint(dn=2.0, dg=0.0, e=0.8, sigma0=0.05)]
    result = fit_robust_bayesian(point, template, FitOptions(y0_free=False))
    assert result.model.params[0] * 2.0 + 0.0005 == pytest.approx(0.8, abs=1e-12)


def test_combined_mixed_determinant_and_generic_paths_agree():
    data = random_mixed_points(3)
    cramer = fit_robust_bayesian(data, CurveKind.COMBINED_MIXED, FitOptions(solver="cramer", tol=1e-12))
    generic = fit_robust_bayesian(data, CurveKind.COMBINED_MIXED, FitOptions(solver="generic", tol=1e-12))
    for a, b in zip((cramer.model.y0, *cramer.model.params), (generic.model.y0, *generic.model.params)):
        assert a == pytest.approx(b, rel=1e-10, abs=1e-13)


def test_robust_fit_is_permutation_invariant():
    data = random_mixed_points(11)
    forward = fit_robust_bayesian(data, CurveKind.COMBINED_MIXED, TIGHT)
    backward = fit_robust_bayesian(list(reversed(data)), CurveKind.COMBINED_MIXED, TIGHT)
    for a, b in zip(forward.model.params, backward.model.params):
        assert a == pytest.approx(b, abs=1e-12)


def test_converged_robust_fit_satisfies_its_stationarity_equations():
    data = outlier_points()
    result = fit_robust_bayesian(data, CurveKind.LINEAR_NEUTRON, TIGHT)
    assert result.converged
    residual = residuals(data, result.model)
    g = np.asarray(result.weights)
    for index in range(2):
        gradient = np.array([derivative_wrt_param(result.model, p.dn, index) for p in data])
        stationarity = np.sum(g * residual * gradient)
        scale = np.sum(np.abs(g * np.array([p.e for p in data]) * gradient))
        assert abs(stationarity) <= 1e-8 * scale


def test_fit_with_a_vanishing_parameter_converges():
    doses = 0.25 * np.arange(1, 21)
    e = 0.05 + 0.06 * doses**2 + np.where(np.arange(20) % 7 == 3, 0.5, 0.0)
    data = [DataPoint(dn=0.0, dg=d, e=v, sigma0=0.01) for d, v in zip(doses, e)]
    result = fit_robust_bayesian(data, CurveKind.LINEAR_QUADRATIC_GAMMA)
    assert result.converged
    assert result.iterations < FitOptions().max_iter
    assert abs(result.model.params[0]) < 5e-3
    assert result.model.params[1] == pytest.approx(0.06, rel=0.02)


def test_mixture_endpoints_reduce_to_other_engines():
    for seed in range(5):
        data = random_mixed_points(100 + seed)
        least_squares = fit_least_squares(data, CurveKind.COMBINED_MIXED, TIGHT)
        robust = fit_robust_bayesian(data, CurveKind.COMBINED_MIXED, TIGHT)
        at_zero = fit_mixture(data, CurveKind.COMBINED_MIXED, 0.0, TIGHT)
        at_one = fit_mixture(data, CurveKind.COMBINED_MIXED, 1.0, TIGHT)
        for a, b in zip(at_zero.model.params, least_squares.model.params):
            assert a == pytest.approx(b, rel=1e-8, abs=1e-10)
        for a, b in zip(at_one.model.params, robust.model.params):
            assert a == pytest.approx(b, rel=1e-8, abs=1e-10)


def test_mixture_default_phi_sits_between_endpoints():
    data = outlier_points()
    slope = lambda phi: fit_mixture(data, CurveKind.LINEAR_NEUTRON, phi).model.params[0]
    assert abs(slope(0.05) - 0.5) / 0.5 < 0.05
    assert abs(slope(0.05) - 0.5) < abs(slope(0.0) - 0.5)
    assert fit_mixture(data, CurveKind.LINEAR_NEUTRON).phi == 0.05


def test_mixture_is_continuous_in_phi():
    data = random_mixed_points(7)
    fits = [fit_mixture(data, CurveKind.COMBINED_MIXED, phi, TIGHT) for phi in np.linspace(0.0, 1.0, 11)]
    values = np.array([(f.model.y0, *f.model.params) for f in fits])
    assert all(f.converged for f in fits)
    span = np.max(np.abs(values[-1] - values[0]))
    jumps = np.max(np.abs(np.diff(values, axis=0)), axis=1)
    assert np.all(jumps <= span)


def test_mixture_rejects_phi_outside_unit_interval():
    with pytest.raises(InputError):
        fit_mixture(outlier_points(), CurveKind.LINEAR_NEUTRON, 1.5)


def test_poisson_closed_form():
    one = [DataPoint.from_counts(dn=1.0, dg=0.0, cells=100, aberrations=5)]
    assert fit_poisson_mle(one).model.params[0] == pytest.approx(0.05, abs=1e-12)

    two = [
        DataPoint.from_counts(dn=2.0, dg=0.0, cells=50, aberrations=4),
        DataPoint.from_counts(dn=1.0, dg=0.0, cells=100, aberrations=2),
    ]
    assert fit_poisson_mle(two).model.params[0] == pytest.approx(0.03, abs=1e-12)

    empty = [DataPoint.from_counts(dn=d, dg=0.0, cells=200, aberrations=0) for d in (0.5, 1.0)]
    assert fit_poisson_mle(empty).model.params[0] == 0.0


def test_poisson_matches_random_closed_form_and_grid_search():
    rng = np.random.default_rng(2024)
    for trial in range(100):
        n = rng.integers(1, 6)
        dose = rng.uniform(0.2, 4.0, n)
        cells = rng.integers(50, 500, n)
        counts = rng.poisson(0.3 * dose * cells)
        data = [DataPoint.from_counts(dn=d, dg=0.0, cells=int(w), aberrations=int(u)) for d, w, u in zip(dose, cells, counts)]
        alpha = fit_poisson_mle(data).model.params[0]
        assert alpha == pytest.approx(counts.sum() / np.sum(cells * dose), rel=1e-10, abs=1e-15)
        if trial < 5 and counts.sum() > 0:
            grid = np.linspace(alpha * 0.5, alpha * 1.5, 200001)
            loglik = counts.sum() * np.log(grid) - grid * np.sum(cells * dose)
            assert grid[np.argmax(loglik)] == pytest.approx(alpha, rel=1e-5)


def test_poisson_contract_violations():
    with pytest.raises(CurveError):
        fit_poisson_mle([DataPoint.from_counts(dn=1.0, dg=0.0, cells=10, aberrations=1)], CurveKind.COMBINED_MIXED)
    with pytest.raises(DataError):
        fit_poisson_mle([DataPoint(dn=1.0, dg=0.0, e=0.1, sigma0=0.01)])


def test_weight_g_values():
    assert weight_g(0.0, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert weight_g(1e-6, 1.0) == pytest.approx(0.5, rel=1e-12)
    assert weight_g(1.0, 1.0) == pytest.approx(2.0 - 1.0 / (math.exp(0.5) - 1.0), rel=1e-13)
    assert weight_g(1.0, 1.0) == pytest.approx(0.4585059, abs=1e-7)
    assert weight_g(-2.3, 0.7) == weight_g(2.3, 0.7)


def test_weight_g_branches_agree_and_tail():
    sigma0 = 0.3
    t_switch = 1e-2
    r = math.sqrt(2.0 * t_switch) * sigma0
    below = weight_g(r * (1 - 1e-9), sigma0, small_t=t_switch)
    above = weight_g(r * (1 + 1e-9), sigma0, small_t=t_switch)
    assert below == pytest.approx(above, rel=1e-10)
    for big in (10.0, 100.0):
        assert weight_g(big, 0.1) * big**2 == pytest.approx(2.0, rel=1e-6)
    values = weight_g(np.linspace(-5, 5, 101), 0.5)
    assert np.all(values > 0)


def test_point_probability_values():
    assert point_probability(1.0, 1.0) == pytest.approx((1.0 - math.exp(-0.5)) / math.sqrt(2.0 * math.pi), rel=1e-13)
    assert point_probability(1.0, 1.0) == pytest.approx(0.1569716, abs=1e-7)
    assert point_probability(1e-6, 2.0) == pytest.approx(1.0 / (2 * 2.0 * math.sqrt(2 * math.pi)), rel=1e-10)
    values = point_probability(np.linspace(0.0, 4.0, 81), 0.8)
    assert np.all(values > 0)
    assert np.all(np.diff(values) < 0)


def test_xi_is_minus_twice_weight_slope():
    sigma0 = 0.4
    for r in (0.05, 0.3, 1.2):
        h = 1e-6
        slope = (weight_g(math.sqrt(r**2 + h), sigma0) - weight_g(math.sqrt(r**2 - h), sigma0)) / (2 * h)
        assert xi_robust(r, sigma0) == pytest.approx(-2.0 * slope, rel=1e-5)


def test_mixture_weights_endpoints():
    r = np.array([0.0, 0.2, 1.0, 3.0])
    assert np.allclose(weight_g_mixture(r, 0.5, 0.0), 1.0 / 0.25)
    assert np.allclose(weight_g_mixture(r, 0.5, 1.0), weight_g(r, 0.5))
    assert np.all(np.asarray(mixture_point_probability(r, 0.5, 0.05)) > 0)


def test_hessian_dominates_cramer_rao():
    for data, kind in ((outlier_points(), CurveKind.LINEAR_NEUTRON), (random_mixed_points(9), CurveKind.COMBINED_MIXED)):
        result = fit_robust_bayesian(data, kind)
        hessian = uncertainties_hessian(data, result)
        bound = uncertainties_cramer_rao(data, result)
        assert len(hessian) == len(result.model.params) + 1
        for h, c in zip(hessian, bound):
            assert c <= h * (1 + 1e-4)


def test_least_squares_sigmas_attain_the_bound():
    data = line_points([1.0, 2.0, 3.0, 4.0, 5.0], sigma0=0.05)
    result = fit_least_squares(data, CurveKind.LINEAR_NEUTRON)
    design = np.vstack([np.ones(5), np.arange(1.0, 6.0)]).T / 0.05
    expected = np.sqrt(np.diag(np.linalg.inv(design.T @ design)))
    assert uncertainties_hessian(data, result) == pytest.approx(tuple(expected), rel=1e-4)
    assert uncertainties_cramer_rao(data, result)[1] <= expected[1] * (1 + 1e-9)


def test_log_posterior_of_least_squares_is_gaussian():
    data = line_points([1.0, 2.0], sigma0=0.1)
    model = CurveModel(kind=CurveKind.LINEAR_NEUTRON, params=(0.6,), y0=0.0005)
    r = np.array([0.1, 0.2])
    expected = np.sum(-(r**2) / (2 * 0.01) - np.log(0.1 * math.sqrt(2 * math.pi)))
    assert log_posterior(data, model, FitEngine.LEAST_SQUARES) == pytest.approx(expected, rel=1e-12)


def test_y0_fixed_mode_and_negative_background_refit():
    data = line_points([1.0, 2.0, 3.0], slope=0.4, y0=0.0)
    data = [p.model_copy(update={"e": p.e - 0.01}) for p in data[:1]] + data[1:]
    result = fit_robust_bayesian(data, CurveKind.LINEAR_NEUTRON)
    assert result.model.y0 >= 0.0

    template = CurveModel(kind=CurveKind.LINEAR_NEUTRON, params=(1.0,), y0=0.002)
    fixed = fit_least_squares(line_points([1.0, 2.0, 3.0]), template, FitOptions(y0_free=False))
    assert fixed.model.y0 == 0.002
    assert fixed.sigmas[0] == 0.0
    assert not fixed.y0_free


def test_fit_curve_dispatches_and_fits_nonlinear_kinds():
    doses = np.linspace(0.5, 10.0, 12)
    truth = CurveModel(kind=CurveKind.SATURATED_LINEAR, params=(0.25,), y0=0.0005)
    values = evaluate_many(truth, doses)
    data = [DataPoint(dn=0.0, dg=d, e=v, sigma0=0.01) for d, v in zip(doses, values)]
    result = fit_curve(data, CurveKind.SATURATED_LINEAR, FitEngine.ROBUST)
    assert result.engine == FitEngine.ROBUST
    assert result.model.params[0] == pytest.approx(0.25, rel=1e-5)


def test_empty_data_is_rejected():
    with pytest.raises(DataError):
        fit_least_squares([], CurveKind.LINEAR_NEUTRON)
