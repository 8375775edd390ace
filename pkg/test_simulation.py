#!/usr/bin/env python3
"""
Tests for the cell irradiation simulator and the damage statistics
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from biodose.config import settings
from biodose.errors import SimulationError
from biodose.models.schemas import CurveKind, CurveModel, DoseMap, DoseMapKind, SimConfig, ThetaPrior, ThetaPriorKind
from biodose.services import DoseEstimator, MonteCarloSimulator, apply_dose_map, damage_statistics


@pytest.fixture
def simulator():
    return MonteCarloSimulator(workers=1)


def config(**overrides):
    values = {"cells": 1000, "target_yf": 1.2, "repetitions": 50, "theta": 0.5, "seed": 42}
    values.update(overrides)
    return SimConfig(**values)


def test_dose_maps():
    assert apply_dose_map(DoseMap(), [0, 100]) == pytest.approx([0.0, 1.2])
    polynomial = DoseMap(kind=DoseMapKind.POLYNOMIAL, coefficients=(0.01, 0.001))
    assert apply_dose_map(polynomial, [10]) == pytest.approx([0.1 + 0.1])
    saturated = DoseMap(kind=DoseMapKind.SATURATED, const=0.012, d_sat=2.0)
    assert apply_dose_map(saturated, [1])[0] == pytest.approx(0.012, rel=1e-2)
    assert apply_dose_map(saturated, [10**6])[0] == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        DoseMap(kind=DoseMapKind.SATURATED)


def test_pure_gamma_and_pure_neutron(simulator):
    gamma_only = simulator.simulate(config(theta=1.0))
    assert gamma_only.mean_dn == 0.0
    assert all(u == 0 for u in gamma_only.per_repetition_un)
    neutron_only = simulator.simulate(config(theta=0.0))
    assert neutron_only.mean_dg == 0.0


def test_half_split_recovers_the_classical_doses():
    result = MonteCarloSimulator().simulate(config(repetitions=500))
    ratio = result.mean_dg / (result.mean_dg + result.mean_dn)
    assert ratio == pytest.approx(0.5, abs=0.05)
    curve = CurveModel(kind=CurveKind.COMBINED_MIXED, params=(0.832, 0.0164, 0.0492), y0=0.0005)
    reference = DoseEstimator().classical_split(curve, 1.2, 0.5)
    assert result.mean_dg == pytest.approx(reference.d_gamma, rel=0.05)
    assert result.mean_dn == pytest.approx(reference.d_neutron, rel=0.05)


def test_stopping_rule_is_the_first_crossing(simulator):
    cfg = config(repetitions=20)
    result = simulator.simulate(cfg)
    for un, ug in zip(result.per_repetition_un, result.per_repetition_ug):
        reached = simulator._frequency(cfg, np.array([un]), np.array([ug]))[0]
        assert reached >= cfg.target_yf
        previous = []
        if un:
            previous.append(simulator._frequency(cfg, np.array([un - 1]), np.array([ug]))[0])
        if ug:
            previous.append(simulator._frequency(cfg, np.array([un]), np.array([ug - 1]))[0])
        assert min(previous) < cfg.target_yf


def test_results_do_not_depend_on_thread_count():
    cfg = config(repetitions=40)
    single = MonteCarloSimulator(workers=1, chunk=64).simulate(cfg)
    threaded = MonteCarloSimulator(workers=4, chunk=64).simulate(cfg)
    assert single == threaded


def test_seed_defaults_to_settings(simulator):
    result = simulator.simulate(config(seed=None, repetitions=2))
    assert result.seed == settings.default_seed


def test_standard_error_scales_with_repetitions(simulator):
    few = simulator.simulate(config(repetitions=100))
    many = simulator.simulate(config(repetitions=400))
    assert few.sem_dn / many.sem_dn == pytest.approx(2.0, abs=0.3)
    assert few.sem_dg / many.sem_dg == pytest.approx(2.0, abs=0.3)
    assert few.sem_dn == pytest.approx(few.sd_dn / 10.0)


def test_higher_target_never_draws_less_damage(simulator):
    low = simulator.simulate(config(target_yf=0.8, repetitions=30))
    high = simulator.simulate(config(target_yf=1.6, repetitions=30))
    for low_n, low_g, high_n, high_g in zip(
        low.per_repetition_un, low.per_repetition_ug, high.per_repetition_un, high.per_repetition_ug
    ):
        assert high_n + high_g >= low_n + low_g


def test_realized_gamma_fraction_concentrates(simulator):
    theta = 0.3
    result = simulator.simulate(config(theta=theta, repetitions=200))
    within = 0
    for un, ug in zip(result.per_repetition_un, result.per_repetition_ug):
        total = un + ug
        within += abs(ug / total - theta) < 3 * math.sqrt(theta * (1 - theta) / total)
    assert within >= 0.97 * result.repetitions


def test_theta_prior_is_redrawn_per_damage(simulator):
    result = simulator.simulate(config(theta=ThetaPrior(kind=ThetaPriorKind.BETA), repetitions=100))
    fraction = sum(result.per_repetition_ug) / (sum(result.per_repetition_ug) + sum(result.per_repetition_un))
    assert fraction == pytest.approx(0.5, abs=0.03)


def test_damage_table_and_histogram(simulator):
    result = simulator.simulate(config(repetitions=3))
    table = np.asarray(result.damage_table)
    assert table.shape == (1000, 2)
    assert table[:, 0].sum() == result.per_repetition_un[-1]
    assert table[:, 1].sum() == result.per_repetition_ug[-1]
    histogram = np.asarray(result.damage_histogram)
    assert histogram.sum() == 1000
    assert np.dot(np.arange(len(histogram)), histogram) == table.sum()


def test_dispersion_is_poisson_like(simulator):
    result = simulator.simulate(config(cells=5000, target_yf=4683.0, repetitions=1))
    stats = damage_statistics(result)
    assert stats.total_damage > 40_000
    assert stats.dispersion_defined
    assert 0.9 <= stats.dispersion <= 1.1


def test_single_cell_dispersion_is_undefined(simulator):
    stats = damage_statistics(simulator.simulate(config(cells=1, repetitions=2)))
    assert stats.cells == 1
    assert stats.dispersion is None
    assert not stats.dispersion_defined


def test_unreachable_targets_are_reported():
    saturated = DoseMap(kind=DoseMapKind.SATURATED, const=0.012, d_sat=1.0)
    with pytest.raises(SimulationError):
        MonteCarloSimulator().simulate(config(dose_map=saturated))

    feeble = DoseMap(const=1e-9)
    with pytest.raises(SimulationError):
        MonteCarloSimulator(chunk=1024, damage_ceiling=10_000).simulate(config(dose_map=feeble, repetitions=1))


def test_config_validation():
    with pytest.raises(ValidationError):
        config(target_yf=0.0001)
    with pytest.raises(ValidationError):
        config(theta=1.5)
    with pytest.raises(ValidationError):
        config(repetitions=0)
