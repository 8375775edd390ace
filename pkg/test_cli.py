#!/usr/bin/env python3
"""
End-to-end tests of the biodose command line
"""

import json

import numpy as np
import pandas as pd
import pytest

from biodose.main import main


def write_calibration(path, slope=0.3, quadratic=0.0):
    doses = np.linspace(0.25, 4.0, 10)
    frame = pd.DataFrame(
        {
            "dn": 0.0,
            "dg": doses,
            "e": 0.05 + slope * doses + quadratic * doses**2,
            "sigma0": 0.01,
        }
    )
    frame.to_csv(path, index=False)
    return path


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return path


@pytest.fixture
def mixed_curve(tmp_path):
    return write_json(
        tmp_path / "curve.json",
        {"kind": "combined_mixed", "params": [0.354, 0.0119, 0.0557], "y0": 0.0005},
    )


def test_fit_writes_results_and_residuals(tmp_path):
    data = write_calibration(tmp_path / "calibration.csv")
    out = tmp_path / "out"
    code = main(["fit", "--data", str(data), "--kind", "linear_neutron", "--engine", "ls", "--out", str(out)])
    assert code == 0
    document = json.loads((out / "fit.json").read_text())
    assert document["manifest"]["subcommand"] == "fit"
    assert document["fit"]["model"]["params"][0] == pytest.approx(0.3, rel=1e-6)
    assert document["fit"]["model"]["y0"] == pytest.approx(0.05, rel=1e-6)
    residuals = pd.read_csv(out / "residuals.csv")
    assert list(residuals.columns) == ["dn", "dg", "e", "yfit", "weight"]
    assert len(residuals) == 10


def test_poisson_engine_needs_linear_kind(tmp_path):
    data = write_calibration(tmp_path / "calibration.csv")
    code = main(["fit", "--data", str(data), "--kind", "linear_quadratic_gamma", "--engine", "poisson", "--out", str(tmp_path)])
    assert code == 1
    assert not (tmp_path / "fit.json").exists()


def test_bad_calibration_csv_is_a_validation_error(tmp_path):
    data = tmp_path / "broken.csv"
    data.write_text("dn,dg,e,sigma0\n0,1,abc,0.01\n")
    assert main(["fit", "--data", str(data), "--kind", "linear_neutron", "--out", str(tmp_path)]) == 1


def test_unconverged_fit_exits_with_two(tmp_path):
    doses = 0.25 * np.arange(1, 21)
    frame = pd.DataFrame(
        {"dn": doses, "dg": 0.0, "e": 0.0005 + 0.5 * doses + np.where(doses > 4.25, 1.0, 0.0), "sigma0": 0.1}
    )
    data = tmp_path / "outliers.csv"
    frame.to_csv(data, index=False)
    out = tmp_path / "out"
    code = main(
        ["fit", "--data", str(data), "--kind", "linear_neutron", "--engine", "robust", "--max-iter", "1", "--out", str(out)]
    )
    assert code == 2
    document = json.loads((out / "fit.json").read_text())
    assert document["fit"]["converged"] is False
    assert document["sigmas_hessian"] is None


def test_select_ranks_candidates(tmp_path):
    data = write_calibration(tmp_path / "calibration.csv", slope=0.02, quadratic=0.06)
    out = tmp_path / "out"
    code = main(["select", "--data", str(data), "--kinds", "linear_neutron,linear_quadratic_gamma", "--out", str(out)])
    assert code == 0
    document = json.loads((out / "selection.json").read_text())
    assert len(document["ranking"]) == 2
    assert len(document["preference_matrix"]) == 2
    assert document["preference_matrix"][0][1] >= 1.0


def test_select_without_candidates_is_a_usage_error(tmp_path):
    data = write_calibration(tmp_path / "calibration.csv")
    assert main(["select", "--data", str(data), "--out", str(tmp_path)]) == 1


def test_classical_dose(tmp_path, mixed_curve):
    out = tmp_path / "out"
    code = main(
        ["dose", "--curve", str(mixed_curve), "--case", "w=1000,u=33",
         "--method", "classical", "--theta", "0.5", "--out", str(out)]
    )
    assert code == 0
    document = json.loads((out / "dose.json").read_text())
    assert document["y_f"] == pytest.approx(0.033)
    assert document["d_gamma"] == pytest.approx(document["d_neutron"], rel=1e-12)
    assert document["sigma_d_gamma"] > 0


def test_simplified_dose_writes_posteriors(tmp_path, mixed_curve):
    prior = write_json(tmp_path / "prior.json", {"kind": "gauss_rho", "theta_hat": 0.92, "sigma_rho": 0.05})
    out = tmp_path / "out"
    code = main(
        ["dose", "--curve", str(mixed_curve), "--case", "w=1000,u=33",
         "--prior", str(prior), "--grid", "5,201", "--out", str(out)]
    )
    assert code == 0
    document = json.loads((out / "dose.json").read_text())
    assert document["method"] == "simplified"
    quantities = {p["quantity"] for p in document["posteriors"]}
    for quantity in quantities:
        frame = pd.read_csv(out / f"posterior_{quantity}.csv")
        assert list(frame.columns) == ["dose", "density", "normalized_density"]
        assert len(frame) == 201
        assert np.all(frame["density"] >= 0)


def test_grid_sets_reach_and_resolution(tmp_path, mixed_curve):
    prior = write_json(tmp_path / "prior.json", {"kind": "beta"})
    out = tmp_path / "out"
    code = main(
        ["dose", "--curve", str(mixed_curve), "--case", "w=1000,u=33", "--method", "quasi",
         "--prior", str(prior), "--grid", "3.5,101", "--out", str(out)]
    )
    assert code == 0
    assert len(list(out.glob("posterior_*.csv"))) == 2
    for path in out.glob("posterior_*.csv"):
        frame = pd.read_csv(path)
        assert len(frame) == 101
        assert frame["dose"].iloc[-1] == pytest.approx(3.5)


def test_split_casework_flags_still_work(tmp_path, mixed_curve):
    out = tmp_path / "out"
    code = main(
        ["dose", "--curve", str(mixed_curve), "--cells", "1000", "--aberrations", "33",
         "--method", "classical", "--theta", "0.5", "--out", str(out)]
    )
    assert code == 0
    assert json.loads((out / "dose.json").read_text())["y_f"] == pytest.approx(0.033)


@pytest.mark.parametrize(
    "extra",
    [
        ["--case", "w=1000"],
        ["--case", "w=1000,u=abc"],
        ["--case", "1000,33"],
        ["--case", "w=1000,u=33", "--cells", "1000"],
        ["--case", "w=1000,u=33", "--grid", "5"],
        ["--case", "w=1000,u=33", "--grid", "five,201"],
        [],
    ],
    ids=["missing_u", "non_integer", "no_keys", "case_and_cells", "grid_one_value", "grid_not_numeric", "no_case"],
)
def test_malformed_casework_or_grid_is_a_usage_error(tmp_path, mixed_curve, extra):
    code = main(["dose", "--curve", str(mixed_curve), "--method", "classical", "--theta", "0.5", "--out", str(tmp_path), *extra])
    assert code == 1
    assert not (tmp_path / "dose.json").exists()


def test_theta_and_prior_are_exclusive(tmp_path, mixed_curve):
    prior = write_json(tmp_path / "prior.json", {"kind": "beta"})
    code = main(
        ["dose", "--curve", str(mixed_curve), "--case", "w=1000,u=33",
         "--theta", "0.5", "--prior", str(prior), "--out", str(tmp_path)]
    )
    assert code == 1


def test_numerical_failure_exits_with_two(tmp_path, mixed_curve):
    sigmas = write_json(tmp_path / "sigmas.json", {"theta": 0.01})
    code = main(
        ["dose", "--curve", str(mixed_curve), "--case", "w=1000,u=33",
         "--method", "classical", "--theta", "1.0", "--sigmas", str(sigmas), "--out", str(tmp_path)]
    )
    assert code == 2


def test_simulate_is_reproducible(tmp_path):
    config = write_json(tmp_path / "sim.json", {"cells": 200, "target_yf": 1.2, "repetitions": 5, "theta": 0.5})
    first, second = tmp_path / "first", tmp_path / "second"
    cells = tmp_path / "cells.csv"
    assert main(["simulate", "--config", str(config), "--seed", "7", "--out", str(first), "--cells-csv", str(cells)]) == 0
    assert main(["simulate", "--config", str(config), "--seed", "7", "--out", str(second)]) == 0
    a = json.loads((first / "simulation.json").read_text())
    b = json.loads((second / "simulation.json").read_text())
    assert a["result"] == b["result"]
    assert a["manifest"]["seed"] == 7
    table = pd.read_csv(cells)
    assert list(table.columns) == ["cell", "u_n", "u_g"]
    assert len(table) == 200


def test_invalid_simulation_config(tmp_path):
    config = write_json(tmp_path / "sim.json", {"cells": 200, "target_yf": 1.2, "repetitions": 0, "theta": 0.5})
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path)]) == 1


def test_reference_fixtures(tmp_path):
    assert main(["--reference-fixtures", "--out", str(tmp_path)]) == 0
    classical = json.loads((tmp_path / "classical.json").read_text())
    assert classical["theta_0.5"]["d_gamma"] == pytest.approx(classical["theta_0.5"]["d_neutron"], rel=1e-12)
    assert len(classical["sweep"]) == 11
    assert (tmp_path / "simplified.json").exists()
    assert list(tmp_path.glob("quasi_*.csv"))
    assert list(tmp_path.glob("simplified_*.csv"))
