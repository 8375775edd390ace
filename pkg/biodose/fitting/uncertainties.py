from typing import Optional, Sequence, Tuple
import logging
import math

import numpy as np

from ..errors import ConvergenceError, CurvatureError, NumericalError
from ..models.schemas import CurveModel, DataPoint, FitEngine, FitResult
from ..utils.numerics import compensated_sum, covariance_from_hessian, finite_difference_hessian
from .layout import FitData, ParamLayout
from .likelihood import engine_weights, engine_xi, model_log_posterior, model_residuals

logger = logging.getLogger(__name__)

RELATIVE_STEP = 1e-3


def _information_weights(fd: FitData, model: CurveModel, engine: FitEngine, phi: Optional[float]) -> np.ndarray:
    r = model_residuals(fd, model)
    if engine == FitEngine.POISSON:
        _, w = fd.counts()
        y = r + fd.e
        return w / np.maximum(y, 1.0 / w)
    return engine_weights(engine, r, fd.sigma0, phi)


def hessian_sigmas(
    fd: FitData, layout: ParamLayout, model: CurveModel, engine: FitEngine, phi: Optional[float] = None
) -> np.ndarray:
    """
    sqrt(diag(-H^-1)) with H the central-difference Hessian of S over the free parameters

    Returns:
        np.ndarray: Full-length sigmas (Y0 first), zero for parameters the fit held fixed
    """
    if layout.n_free == 0:
        return layout.expand([])
    x0 = layout.pack(model)
    jacobian = layout.jacobian(model, fd.doses)
    information = np.array(
        [compensated_sum(_information_weights(fd, model, engine, phi) * row**2) for row in jacobian]
    )
    steps = np.where(
        information > 0,
        RELATIVE_STEP / np.sqrt(np.where(information > 0, information, 1.0)),
        1e-6 * np.maximum(1.0, np.abs(x0)),
    )

    def objective(x: np.ndarray) -> float:
        return model_log_posterior(fd, layout.unpack(x), engine, phi)

    hessian = finite_difference_hessian(objective, x0, steps)
    covariance = covariance_from_hessian(hessian, "uncertainties_hessian")
    variances = np.diag(covariance)
    if np.any(variances <= 0):
        raise CurvatureError("log-posterior is not at a maximum: -H^-1 has non-positive diagonal", "uncertainties_hessian")
    return layout.expand(np.sqrt(variances))


def cramer_rao_sigmas(
    fd: FitData, layout: ParamLayout, model: CurveModel, engine: FitEngine, phi: Optional[float] = None
) -> np.ndarray:
    """Lower bounds 1/sqrt(omega_n), omega_n = sum_i [g_i - xi_i R_i^2] (dY_i/dlambda_n)^2"""
    if layout.n_free == 0:
        return layout.expand([])
    if engine == FitEngine.POISSON:
        u, _ = fd.counts()
        alpha = model.params[0]
        total = compensated_sum(u)
        if not (alpha > 0 and total > 0):
            raise CurvatureError("Poisson curvature vanishes at alpha = 0", "uncertainties_cramer_rao")
        return layout.expand([alpha / math.sqrt(total)])
    r = model_residuals(fd, model)
    curvature = engine_weights(engine, r, fd.sigma0, phi) - engine_xi(engine, r, fd.sigma0, phi) * r**2
    jacobian = layout.jacobian(model, fd.doses)
    omega = np.array([compensated_sum(curvature * row**2) for row in jacobian])
    if np.any(omega <= 0):
        bad = [name for name, value in zip(layout.names, omega) if value <= 0]
        raise CurvatureError(f"invalid curvature omega <= 0 for {', '.join(bad)}", "uncertainties_cramer_rao")
    return layout.expand(1.0 / np.sqrt(omega))


def estimate_sigmas(
    fd: FitData, layout: ParamLayout, model: CurveModel, engine: FitEngine, phi: Optional[float] = None
) -> Tuple[np.ndarray, str]:
    """Hessian sigmas, falling back to the Cramer-Rao bound and finally to infinity"""
    try:
        return hessian_sigmas(fd, layout, model, engine, phi), "hessian"
    except NumericalError as e:
        logger.warning(f"Hessian uncertainties unavailable ({e.message}); using the Cramer-Rao bound")
    try:
        return cramer_rao_sigmas(fd, layout, model, engine, phi), "cramer_rao"
    except NumericalError as e:
        logger.warning(f"Cramer-Rao bound unavailable ({e.message}); reporting infinite uncertainties")
    return layout.expand(np.full(layout.n_free, math.inf)), "none"


def _prepare(data: Sequence[DataPoint], result: FitResult) -> Tuple[FitData, ParamLayout]:
    if not result.converged:
        raise ConvergenceError("uncertainties need a converged fit", "fitting")
    return FitData(data, result.model), ParamLayout(result.model, result.y0_free)


def uncertainties_hessian(data: Sequence[DataPoint], result: FitResult) -> Tuple[float, ...]:
    """
    Per-parameter sigma from the inverse Hessian of the fit's log-posterior

    Args:
        data: The calibration points the fit used
        result: Converged fit

    Returns:
        Tuple[float, ...]: Sigmas in full-vector order (Y0 first)
    """
    fd, layout = _prepare(data, result)
    return tuple(hessian_sigmas(fd, layout, result.model, result.engine, result.phi))


def uncertainties_cramer_rao(data: Sequence[DataPoint], result: FitResult) -> Tuple[float, ...]:
    fd, layout = _prepare(data, result)
    return tuple(cramer_rao_sigmas(fd, layout, result.model, result.engine, result.phi))
