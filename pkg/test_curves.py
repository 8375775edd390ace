#!/usr/bin/env python3
"""
Tests for calibration curve evaluation, derivatives and the generalized form's special cases
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from biodose.curves import (
    derivative_wrt_dose,
    derivative_wrt_param,
    evaluate,
    evaluate_many,
    full_params,
    param_names,
    sup_value,
    with_full_params,
)
from biodose.errors import CurveError
from biodose.models.schemas import CurveKind, CurveModel

MIXED_CURVE = CurveModel(kind=CurveKind.COMBINED_MIXED, params=(0.832, 0.0164, 0.0492), y0=0.0005)

SAMPLE_MODELS = [
    CurveModel(kind=CurveKind.LINEAR_NEUTRON, params=(0.5,)),
    CurveModel(kind=CurveKind.LINEAR_QUADRATIC_GAMMA, params=(0.0164, 0.0492)),
    CurveModel(kind=CurveKind.SATURATED_LINEAR, params=(0.3,), ymax=0.9),
    CurveModel(kind=CurveKind.SATURATED_SIGMOID, params=(0.1, 0.05), ymax=0.9),
    CurveModel(kind=CurveKind.AVRAMI_SIGMOID, params=(0.1, 2.0)),
    CurveModel(kind=CurveKind.CRITICAL_LINEAR, params=(0.4,)),
    CurveModel(kind=CurveKind.CRITICAL_QUADRATIC, params=(0.2, 0.05)),
    CurveModel(kind=CurveKind.POLYNOMIAL, params=(0.02, 0.05, 0.001)),
]


def test_combined_mixed_values():
    assert evaluate(MIXED_CURVE, (0.0, 0.0)) == 0.0005
    assert evaluate(MIXED_CURVE, (1.0, 1.0)) == pytest.approx(0.8981, abs=1e-12)


@pytest.mark.parametrize("model", SAMPLE_MODELS, ids=lambda m: m.kind.value)
def test_zero_dose_returns_background(model):
    assert evaluate(model, 0.0) == model.y0


def test_multi_radiation_and_generalized_zero_dose():
    multi = CurveModel(kind=CurveKind.MULTI_RADIATION_POLYNOMIAL, degrees=(1, 2, 1), params=(0.3, 0.02, 0.05, 0.1))
    assert multi.radiation_count == 3
    assert evaluate(multi, (0.0, 0.0, 0.0)) == multi.y0

    generalized = CurveModel(
        kind=CurveKind.GENERALIZED, degrees=(0,), exp_terms=1, params=(1.0, -1.0, 0.7), y0=0.001
    )
    assert evaluate(generalized, 0.0) == 0.001


def test_saturated_linear_approaches_ceiling():
    model = CurveModel(kind=CurveKind.SATURATED_LINEAR, params=(0.2,), ymax=1.0)
    assert abs(evaluate(model, 1e6) - model.ymax) < 1e-6
    assert sup_value(model) == pytest.approx(1.0)


def test_saturated_kinds_are_monotone():
    dose = np.linspace(0.0, 40.0, 400)
    for kind, params in (
        (CurveKind.SATURATED_LINEAR, (0.3,)),
        (CurveKind.SATURATED_SIGMOID, (0.1, 0.05)),
        (CurveKind.AVRAMI_SIGMOID, (0.05, 1.5)),
    ):
        values = evaluate_many(CurveModel(kind=kind, params=params), dose)
        assert np.all(np.diff(values) >= 0)
        assert values.max() <= 1.0 + 1e-15


def test_critical_kinds_rise_then_fall_back():
    dose = np.linspace(0.0, 200.0, 4001)
    for kind, params in ((CurveKind.CRITICAL_LINEAR, (0.4,)), (CurveKind.CRITICAL_QUADRATIC, (0.2, 0.05))):
        model = CurveModel(kind=kind, params=params)
        values = evaluate_many(model, dose)
        peak = int(np.argmax(values))
        assert 0 < peak < len(dose) - 1
        assert np.all(np.diff(values[: peak + 1]) >= 0)
        assert np.all(np.diff(values[peak:]) <= 0)
        assert values[-1] == pytest.approx(model.y0, abs=1e-12)


def test_dose_derivatives():
    assert derivative_wrt_dose(CurveModel(kind=CurveKind.LINEAR_NEUTRON, params=(0.5,)), 3.7) == pytest.approx(0.5)
    assert derivative_wrt_dose(MIXED_CURVE, (0.0, 2.0), component=1) == pytest.approx(0.2132, rel=1e-12)
    lq = CurveModel(kind=CurveKind.LINEAR_QUADRATIC_GAMMA, params=(0.0164, 0.0492))
    assert derivative_wrt_dose(lq, 0.0) == pytest.approx(0.0164)


def test_param_derivatives():
    assert derivative_wrt_param(MIXED_CURVE, (2.0, 5.0), 1) == pytest.approx(2.0)
    assert derivative_wrt_param(MIXED_CURVE, (0.0, 3.0), 3) == pytest.approx(9.0)
    assert derivative_wrt_param(MIXED_CURVE, (1.0, 1.0), 0) == pytest.approx(1.0)

    avrami = CurveModel(kind=CurveKind.AVRAMI_SIGMOID, params=(0.1, 2.0), y0=0.0, ymax=1.0)
    assert derivative_wrt_param(avrami, 1.0, 1) == pytest.approx(math.exp(-0.1), rel=1e-12)

    with pytest.raises(CurveError):
        derivative_wrt_param(MIXED_CURVE, (1.0, 1.0), 4)


@pytest.mark.parametrize("model", SAMPLE_MODELS, ids=lambda m: m.kind.value)
def test_analytic_derivatives_match_finite_differences(model):
    rng = np.random.default_rng(7)
    for dose in rng.uniform(0.5, 6.0, 5):
        h = 1e-6 * max(1.0, dose)
        numeric = (evaluate(model, dose + h) - evaluate(model, dose - h)) / (2 * h)
        assert derivative_wrt_dose(model, dose) == pytest.approx(numeric, rel=1e-5, abs=1e-9)

        values = full_params(model)
        for index in range(len(values)):
            step = 1e-6 * max(1.0, abs(values[index]))
            upper, lower = values.copy(), values.copy()
            upper[index] += step
            lower[index] -= step
            numeric = (
                evaluate(with_full_params(model, upper, validate=False), dose)
                - evaluate(with_full_params(model, lower, validate=False), dose)
            ) / (2 * step)
            assert derivative_wrt_param(model, dose, index) == pytest.approx(numeric, rel=1e-5, abs=1e-9)


def test_generalized_reduces_to_polynomial():
    dose = np.linspace(0.0, 5.0, 51)
    polynomial = CurveModel(kind=CurveKind.POLYNOMIAL, params=(0.02, 0.05), y0=0.0005)
    span = 1.0 - 0.0005
    generalized = CurveModel(
        kind=CurveKind.GENERALIZED,
        degrees=(2,),
        exp_terms=0,
        params=(0.0, 0.0, 0.0, 0.02 / span, 0.0, 0.05 / span),
        y0=0.0005,
    )
    assert np.allclose(evaluate_many(generalized, dose), evaluate_many(polynomial, dose), rtol=0, atol=1e-12)


def test_generalized_reduces_to_saturated_and_critical():
    dose = np.linspace(0.0, 20.0, 81)
    saturated = CurveModel(kind=CurveKind.SATURATED_LINEAR, params=(0.3,))
    as_generalized = CurveModel(kind=CurveKind.GENERALIZED, degrees=(0,), exp_terms=1, params=(1.0, -1.0, 0.3))
    assert np.allclose(evaluate_many(as_generalized, dose), evaluate_many(saturated, dose), rtol=0, atol=1e-12)

    critical = CurveModel(kind=CurveKind.CRITICAL_LINEAR, params=(0.4,))
    as_generalized = CurveModel(
        kind=CurveKind.GENERALIZED, degrees=(1,), exp_terms=1, params=(0.0, 0.0, 0.0, 0.0, 0.4, 0.4)
    )
    assert np.allclose(evaluate_many(as_generalized, dose), evaluate_many(critical, dose), rtol=0, atol=1e-12)


def test_generalized_zero_dose_constraint_is_enforced():
    with pytest.raises(ValidationError):
        CurveModel(kind=CurveKind.GENERALIZED, degrees=(0,), exp_terms=1, params=(1.0, -0.5, 0.3))


def test_constructor_rejects_wrong_arity_and_bad_ceiling():
    with pytest.raises(ValidationError):
        CurveModel(kind=CurveKind.COMBINED_MIXED, params=(0.1, 0.2))
    with pytest.raises(ValidationError):
        CurveModel(kind=CurveKind.SATURATED_LINEAR, params=(0.1,), y0=0.5, ymax=0.4)
    with pytest.raises(ValidationError):
        CurveModel(kind=CurveKind.LINEAR_NEUTRON, params=(0.1,), y0=-0.001)


def test_evaluate_rejects_bad_doses():
    with pytest.raises(CurveError):
        evaluate(MIXED_CURVE, 1.0)
    with pytest.raises(CurveError):
        evaluate(CurveModel(kind=CurveKind.LINEAR_NEUTRON, params=(0.5,)), -1.0)


def test_param_names_and_json_round_trip():
    assert param_names(MIXED_CURVE) == ["y0", "alpha", "beta", "gamma"]
    model = CurveModel(kind=CurveKind.AVRAMI_SIGMOID, params=(0.1234567890123, 1.7), y0=0.00051, ymax=0.95)
    assert CurveModel.model_validate_json(model.model_dump_json()) == model
