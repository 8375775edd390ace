"""
The gamma-dose fraction theta = D_g / (D_g + D_n) = 1 / (rho + 1), its priors and the parameter
priors of the full Bayesian method.

Every theta density is normalized on (0, 1): Gaussian priors are truncated, the rho-transformed
Gaussian is divided by Phi(rho_hat / sigma_rho) and the uninformative Beta kernel carries its factor 6.
"""

from functools import lru_cache
from typing import Union
import logging
import math

import numpy as np
from scipy.stats import norm

from .errors import PriorError
from .models.schemas import ParamPrior, ParamPriorKind, ThetaPrior, ThetaPriorKind

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SAMPLE_BATCH = 4096


def theta_from_rho(rho: ArrayLike) -> ArrayLike:
    """theta = 1 / (rho + 1) for rho >= 0"""
    values = np.asarray(rho, dtype=float)
    if np.any(values < 0) or np.any(np.isnan(values)):
        raise PriorError(f"rho must be >= 0, got {rho}", "priors")
    theta = 1.0 / (values + 1.0)
    return float(theta) if theta.ndim == 0 else theta


def rho_from_theta(theta: ArrayLike) -> ArrayLike:
    """rho = 1/theta - 1 for theta in (0, 1]"""
    values = np.asarray(theta, dtype=float)
    if np.any(values <= 0) or np.any(values > 1):
        raise PriorError(f"theta must lie in (0, 1], got {theta}", "priors")
    rho = 1.0 / values - 1.0
    return float(rho) if rho.ndim == 0 else rho


def _kernel(prior: ThetaPrior, theta: np.ndarray) -> np.ndarray:
    kind = prior.kind
    if kind == ThetaPriorKind.GAUSSIAN_THETA:
        return norm.pdf(theta, loc=prior.theta_hat, scale=prior.sigma_theta)
    if kind == ThetaPriorKind.GAUSSIAN_RHO:
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            rho = 1.0 / theta - 1.0
            values = norm.pdf(rho, loc=prior.rho_hat, scale=prior.sigma_rho) / theta**2
        return np.where(theta > 0, np.nan_to_num(values, nan=0.0, posinf=0.0), 0.0)
    if kind == ThetaPriorKind.BETA:
        return 6.0 * theta * (1.0 - theta)
    # uniform
    inside = (theta >= prior.theta_min) & (theta <= prior.theta_max)
    return inside / (prior.theta_max - prior.theta_min)


@lru_cache(maxsize=256)
def normalization(prior: ThetaPrior) -> float:
    """Integral of the kernel over (0, 1)"""
    if prior.is_point_mass:
        return 1.0
    if prior.kind == ThetaPriorKind.GAUSSIAN_THETA:
        return float(
            norm.cdf((1.0 - prior.theta_hat) / prior.sigma_theta) - norm.cdf(-prior.theta_hat / prior.sigma_theta)
        )
    if prior.kind == ThetaPriorKind.GAUSSIAN_RHO:
        return float(norm.cdf(prior.rho_hat / prior.sigma_rho))
    return 1.0


def _check_mass(prior: ThetaPrior) -> float:
    mass = normalization(prior)
    if not mass > 0:
        raise PriorError(f"{prior.kind.value} prior has no mass on (0, 1)", "priors")
    return mass


def density_array(prior: ThetaPrior, theta: np.ndarray) -> np.ndarray:
    """Normalized density on an array of theta, zero outside (0, 1)"""
    if prior.is_point_mass:
        raise PriorError("a point-mass prior has no density; use its value", "priors")
    theta = np.asarray(theta, dtype=float)
    inside = (theta > 0) & (theta < 1)
    values = _kernel(prior, np.where(inside, theta, 0.5)) / _check_mass(prior)
    return np.where(inside, values, 0.0)


def density(prior: ThetaPrior, theta: float) -> float:
    """
    Normalized prior density p(theta)

    Args:
        prior: Theta prior (not a point mass)
        theta: Gamma-dose fraction, 0 < theta < 1

    Returns:
        float: p(theta)
    """
    if not 0.0 < theta < 1.0:
        raise PriorError(f"theta must lie in (0, 1), got {theta}", "priors")
    return float(density_array(prior, np.array([theta]))[0])


def mode(prior: ThetaPrior) -> float:
    """theta at which the density peaks"""
    kind = prior.kind
    if prior.is_point_mass:
        return prior.point_value
    if kind == ThetaPriorKind.GAUSSIAN_THETA:
        return min(max(prior.theta_hat, 0.0), 1.0)
    if kind == ThetaPriorKind.GAUSSIAN_RHO:
        # stationary point of (1 + rho)^2 exp(-(rho - rho_hat)^2 / (2 sigma^2)), clamped to rho >= 0
        r, s = prior.rho_hat, prior.sigma_rho
        rho = 0.5 * (r - 1.0 + math.sqrt((1.0 + r) ** 2 + 8.0 * s**2))
        return 1.0 / (1.0 + max(rho, 0.0))
    if kind == ThetaPriorKind.BETA:
        return 0.5
    return 0.5 * (prior.theta_min + prior.theta_max)


def p_max(prior: ThetaPrior) -> float:
    """Largest density value, the envelope of rejection sampling"""
    if prior.is_point_mass:
        return math.inf
    if prior.kind == ThetaPriorKind.UNIFORM:
        return 1.0 / (prior.theta_max - prior.theta_min)
    peak = mode(prior)
    return float(_kernel(prior, np.array([peak]))[0]) / _check_mass(prior)


def sample(prior: ThetaPrior, rng: np.random.Generator) -> float:
    """
    Draw one theta: uniform theta candidates accepted when a uniform height in [0, p_max]
    falls under the density

    Args:
        prior: Theta prior; a point mass always returns its value
        rng: Caller-owned random stream

    Returns:
        float: theta in [0, 1]
    """
    if prior.is_point_mass:
        return prior.point_value
    if prior.kind == ThetaPriorKind.UNIFORM:
        return float(rng.uniform(prior.theta_min, prior.theta_max))
    envelope = p_max(prior)
    while True:
        theta = rng.uniform(0.0, 1.0)
        if rng.uniform(0.0, envelope) <= density_array(prior, np.array([theta]))[0]:
            return float(theta)


def sample_many(prior: ThetaPrior, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized rejection sampling of `size` thetas"""
    if prior.is_point_mass:
        return np.full(size, prior.point_value)
    if prior.kind == ThetaPriorKind.UNIFORM:
        return rng.uniform(prior.theta_min, prior.theta_max, size)
    envelope = p_max(prior)
    accepted = []
    count = 0
    while count < size:
        batch = max(SAMPLE_BATCH, 2 * (size - count))
        theta = rng.uniform(0.0, 1.0, batch)
        heights = rng.uniform(0.0, envelope, batch)
        keep = theta[heights <= density_array(prior, theta)]
        accepted.append(keep)
        count += len(keep)
    return np.concatenate(accepted)[:size]


def gamma_from_moments(mean: float, sd: float) -> ParamPrior:
    """Gamma(k, z) prior with the given mean and standard deviation (z is the rate)"""
    if not (mean > 0 and sd > 0):
        raise PriorError("a Gamma prior needs mean > 0 and sd > 0", "priors")
    return ParamPrior(kind=ParamPriorKind.GAMMA, k=(mean / sd) ** 2, z=mean / sd**2)


def sample_param(prior: ParamPrior, rng: np.random.Generator, size: int) -> np.ndarray:
    if prior.kind == ParamPriorKind.GAMMA:
        return rng.gamma(prior.k, 1.0 / prior.z, size)
    if prior.kind == ParamPriorKind.GAUSSIAN:
        return rng.normal(prior.mean, prior.sd, size)
    return np.full(size, prior.value)
