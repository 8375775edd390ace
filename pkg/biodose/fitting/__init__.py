"""
Calibration curve fitting: least squares, Poisson MLE, robust Bayesian and mixture engines
"""

from .engines import fit_curve, fit_least_squares, fit_mixture, fit_poisson_mle, fit_robust_bayesian
from .layout import FitData, ParamLayout, resolve_template
from .likelihood import log_posterior, residuals
from .uncertainties import uncertainties_cramer_rao, uncertainties_hessian
from .weights import (
    mixture_point_probability,
    point_probability,
    weight_g,
    weight_g_mixture,
    xi_mixture,
    xi_robust,
)

__all__ = [
    "FitData",
    "ParamLayout",
    "fit_curve",
    "fit_least_squares",
    "fit_mixture",
    "fit_poisson_mle",
    "fit_robust_bayesian",
    "log_posterior",
    "mixture_point_probability",
    "point_probability",
    "resolve_template",
    "residuals",
    "uncertainties_cramer_rao",
    "uncertainties_hessian",
    "weight_g",
    "weight_g_mixture",
    "xi_mixture",
    "xi_robust",
]
