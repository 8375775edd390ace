"""
Point weights and point probabilities of the robust and mixture likelihoods.

Everything is written in t = R^2 / (2 sigma0^2). Below t = settings.small_residual_t the closed
forms cancel catastrophically and truncated power series take over.
"""

from typing import Optional, Union
import math

import numpy as np

from ..config import settings

ArrayLike = Union[float, np.ndarray]

SQRT_2PI = math.sqrt(2.0 * math.pi)

# h(t) = 1/t - 1/(e^t - 1) = 1/2 - sum_k B_2k t^(2k-1) / (2k)!
_H_SERIES = (0.5, -1.0 / 12.0, 0.0, 1.0 / 720.0, 0.0, -1.0 / 30240.0, 0.0, 1.0 / 1209600.0, 0.0, -1.0 / 47900160.0)
_SERIES_TERMS = 12


def _scalar_or_array(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


def _threshold(small_t: Optional[float]) -> float:
    return settings.small_residual_t if small_t is None else small_t


def _t(residual: ArrayLike, sigma0: ArrayLike) -> np.ndarray:
    residual = np.asarray(residual, dtype=float)
    sigma0 = np.asarray(sigma0, dtype=float)
    return residual**2 / (2.0 * sigma0**2)


def _h(t: np.ndarray, small_t: float) -> np.ndarray:
    small = np.abs(t) < small_t
    safe = np.where(small, 1.0, t)
    with np.errstate(over="ignore"):
        closed = 1.0 / safe - 1.0 / np.expm1(safe)
    return np.where(small, np.polynomial.polynomial.polyval(t, _H_SERIES), closed)


def _h_slope(t: np.ndarray, small_t: float) -> np.ndarray:
    small = np.abs(t) < small_t
    safe = np.where(small, 1.0, t)
    with np.errstate(over="ignore"):
        closed = -1.0 / safe**2 + 1.0 / (4.0 * np.sinh(safe / 2.0) ** 2)
    series = np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(_H_SERIES))
    return np.where(small, series, closed)


def _decay_mean(t: np.ndarray, small_t: float) -> np.ndarray:
    """(1 - e^-t) / (2t)"""
    small = np.abs(t) < small_t
    safe = np.where(small, 1.0, t)
    closed = -np.expm1(-safe) / (2.0 * safe)
    coefficients = [(-1) ** p / (2.0 * math.factorial(p + 1)) for p in range(_SERIES_TERMS)]
    return np.where(small, np.polynomial.polynomial.polyval(t, coefficients), closed)


def _decay_slope(t: np.ndarray, small_t: float) -> np.ndarray:
    """(1 - e^-t) / (2t^2) - e^-t / (2t), the negated derivative of (1 - e^-t) / (2t)"""
    small = np.abs(t) < small_t
    safe = np.where(small, 1.0, t)
    closed = (-np.expm1(-safe) - safe * np.exp(-safe)) / (2.0 * safe**2)
    coefficients = [(-1) ** p * (p + 1) / (2.0 * math.factorial(p + 2)) for p in range(_SERIES_TERMS)]
    return np.where(small, np.polynomial.polynomial.polyval(t, coefficients), closed)


def weight_g(residual: ArrayLike, sigma0: ArrayLike, small_t: Optional[float] = None) -> ArrayLike:
    """
    Robust Bayesian weight g = (1/R^2) [2 - (R^2/sigma0^2) / (exp(R^2 / (2 sigma0^2)) - 1)]

    Args:
        residual: R = Y - E
        sigma0: Vertical uncertainty, > 0
        small_t: Series switching point in t; defaults to settings.small_residual_t

    Returns:
        Weight, 1/(2 sigma0^2) at R = 0 and 2/R^2 for large |R|
    """
    sigma0 = np.asarray(sigma0, dtype=float)
    return _scalar_or_array(_h(_t(residual, sigma0), _threshold(small_t)) / sigma0**2)


def xi_robust(residual: ArrayLike, sigma0: ArrayLike, small_t: Optional[float] = None) -> ArrayLike:
    """xi = -2 dg/d(R^2); 1/(12 sigma0^4) at R = 0"""
    sigma0 = np.asarray(sigma0, dtype=float)
    return _scalar_or_array(-_h_slope(_t(residual, sigma0), _threshold(small_t)) / sigma0**4)


def point_probability(residual: ArrayLike, sigma0: ArrayLike, small_t: Optional[float] = None) -> ArrayLike:
    """P = (1 / (sigma0 sqrt(2 pi))) (sigma0^2 / R^2) (1 - exp(-R^2 / (2 sigma0^2)))"""
    sigma0 = np.asarray(sigma0, dtype=float)
    density = _decay_mean(_t(residual, sigma0), _threshold(small_t)) / (sigma0 * SQRT_2PI)
    return _scalar_or_array(density)


def _mixture_factor(t: np.ndarray, phi: float, small_t: float) -> np.ndarray:
    return phi * _decay_mean(t, small_t) + (1.0 - phi) * np.exp(-t)


def _mixture_weight_scaled(t: np.ndarray, phi: float, small_t: float) -> np.ndarray:
    """sigma0^2 g*"""
    numerator = phi * _decay_slope(t, small_t) + (1.0 - phi) * np.exp(-t)
    return numerator / _mixture_factor(t, phi, small_t)


def weight_g_mixture(residual: ArrayLike, sigma0: ArrayLike, phi: float, small_t: Optional[float] = None) -> ArrayLike:
    """
    Good-and-bad-data weight g*; 1/sigma0^2 at phi = 0 and g at phi = 1

    Args:
        residual: R = Y - E
        sigma0: Vertical uncertainty, > 0
        phi: Outlier probability in [0, 1]
        small_t: Series switching point in t
    """
    sigma0 = np.asarray(sigma0, dtype=float)
    t = _t(residual, sigma0)
    if phi == 0.0:
        return _scalar_or_array(np.ones_like(t) / sigma0**2)
    if phi == 1.0:
        return weight_g(residual, sigma0, small_t)
    return _scalar_or_array(_mixture_weight_scaled(t, phi, _threshold(small_t)) / sigma0**2)


def xi_mixture(residual: ArrayLike, sigma0: ArrayLike, phi: float, small_t: Optional[float] = None) -> ArrayLike:
    """-2 dg*/d(R^2) by central differences in t"""
    sigma0 = np.asarray(sigma0, dtype=float)
    t = _t(residual, sigma0)
    if phi == 0.0:
        return _scalar_or_array(np.zeros_like(t))
    if phi == 1.0:
        return xi_robust(residual, sigma0, small_t)
    threshold = _threshold(small_t)
    step = 1e-5 * np.maximum(t, 1.0)
    slope = (
        _mixture_weight_scaled(t + step, phi, threshold) - _mixture_weight_scaled(t - step, phi, threshold)
    ) / (2.0 * step)
    return _scalar_or_array(-slope / sigma0**4)


def mixture_point_probability(residual: ArrayLike, sigma0: ArrayLike, phi: float, small_t: Optional[float] = None) -> ArrayLike:
    sigma0 = np.asarray(sigma0, dtype=float)
    factor = _mixture_factor(_t(residual, sigma0), phi, _threshold(small_t))
    return _scalar_or_array(factor / (sigma0 * SQRT_2PI))
