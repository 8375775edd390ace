"""
Log-posteriors S and per-point weights of the four fitting engines
"""

from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from ..curves import get_curve_form
from ..errors import DataError
from ..models.schemas import CurveModel, DataPoint, FitEngine
from ..utils.numerics import compensated_sum
from .layout import FitData
from .weights import (
    SQRT_2PI,
    mixture_point_probability,
    point_probability,
    weight_g,
    weight_g_mixture,
    xi_mixture,
    xi_robust,
)


def model_residuals(fd: FitData, model: CurveModel) -> np.ndarray:
    return get_curve_form(model.kind).value(model, fd.doses) - fd.e


def residuals(data: Sequence[DataPoint], model: CurveModel) -> np.ndarray:
    """R_i = Y(D_i) - E_i"""
    return model_residuals(FitData(data, model), model)


def engine_weights(engine: FitEngine, residual: np.ndarray, sigma0: np.ndarray, phi: Optional[float] = None) -> np.ndarray:
    if engine == FitEngine.ROBUST:
        return np.asarray(weight_g(residual, sigma0))
    if engine == FitEngine.MIXTURE:
        return np.asarray(weight_g_mixture(residual, sigma0, phi))
    return 1.0 / sigma0**2


def engine_xi(engine: FitEngine, residual: np.ndarray, sigma0: np.ndarray, phi: Optional[float] = None) -> np.ndarray:
    if engine == FitEngine.ROBUST:
        return np.asarray(xi_robust(residual, sigma0))
    if engine == FitEngine.MIXTURE:
        return np.asarray(xi_mixture(residual, sigma0, phi))
    return np.zeros_like(residual)


def model_log_posterior(fd: FitData, model: CurveModel, engine: FitEngine, phi: Optional[float] = None) -> float:
    y = get_curve_form(model.kind).value(model, fd.doses)
    r = y - fd.e
    sigma0 = fd.sigma0
    if engine == FitEngine.POISSON:
        counts = fd.counts()
        if counts is None:
            raise DataError("Poisson log-likelihood needs cells and aberrations for every point", "fitting")
        u, w = counts
        mean = w * y
        terms = xlogy(u, mean) - mean - gammaln(u + 1.0)
    elif engine == FitEngine.ROBUST:
        terms = np.log(point_probability(r, sigma0))
    elif engine == FitEngine.MIXTURE:
        terms = np.log(mixture_point_probability(r, sigma0, phi))
    else:
        terms = -np.log(sigma0 * SQRT_2PI) - r**2 / (2.0 * sigma0**2)
    return compensated_sum(terms)


def log_posterior(
    data: Sequence[DataPoint], model: CurveModel, engine: FitEngine = FitEngine.ROBUST, phi: Optional[float] = None
) -> float:
    """
    Log-posterior S of a curve under one engine's likelihood

    Args:
        data: Calibration points
        model: Curve to score
        engine: ls (Gaussian), poisson (counts), robust (marginalized sigma) or mixture
        phi: Outlier probability, mixture engine only

    Returns:
        float: S = sum_i ln P_i
    """
    return model_log_posterior(FitData(data, model), model, FitEngine(engine), phi)
