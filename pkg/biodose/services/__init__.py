"""
Settings-driven estimators: mixed-field dose estimation and the cell irradiation simulator
"""

from .dose_service import DoseEstimator, default_sigma_yf, get_dose_estimator, posterior_sigma
from .simulation_service import MonteCarloSimulator, apply_dose_map, damage_statistics, get_simulator

__all__ = [
    "DoseEstimator",
    "MonteCarloSimulator",
    "apply_dose_map",
    "damage_statistics",
    "default_sigma_yf",
    "get_dose_estimator",
    "get_simulator",
    "posterior_sigma",
]
