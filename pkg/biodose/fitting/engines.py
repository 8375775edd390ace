from dataclasses import dataclass
from typing import Optional, Sequence, Union
import logging
import math

import numpy as np
from scipy.optimize import least_squares

from ..config import settings
from ..curves import with_full_params
from ..errors import ConvergenceError, CurveError, DataError, InputError, RankDeficiencyError
from ..models.schemas import CurveKind, CurveModel, DataPoint, FitEngine, FitOptions, FitResult
from ..utils.numerics import compensated_sum, solve_normal_system, weighted_normal_system
from .layout import FitData, ParamLayout, resolve_template
from .likelihood import engine_weights, model_log_posterior, model_residuals
from .uncertainties import estimate_sigmas

logger = logging.getLogger(__name__)

KindLike = Union[CurveKind, str, CurveModel]


@dataclass
class _Outcome:
    layout: ParamLayout
    fd: FitData
    x: np.ndarray
    iterations: int
    converged: bool
    weights: np.ndarray

    @property
    def model(self) -> CurveModel:
        return self.layout.unpack(self.x)


def _resolve_options(options: Optional[FitOptions]) -> FitOptions:
    if options is not None:
        return options
    return FitOptions(tol=settings.fit_tol, max_iter=settings.fit_max_iter)


def _solver_for(template: CurveModel, solver: str) -> str:
    if solver == "auto":
        return "cramer" if template.kind == CurveKind.COMBINED_MIXED else "generic"
    return solver


def _solve_frozen(layout: ParamLayout, fd: FitData, weights: np.ndarray, x0: np.ndarray, solver: str):
    """
    Minimize sum_i w_i (Y_i - E_i)^2 with the weights held fixed

    Returns:
        Tuple of (free parameters, function evaluations, success flag)
    """
    if layout.n_free == 0:
        return x0, 0, True
    if layout.form.linear_in_params:
        origin = layout.unpack(np.zeros(layout.n_free))
        offset = layout.form.value(origin, fd.doses)
        design = layout.jacobian(origin, fd.doses)
        matrix, rhs = weighted_normal_system(design, weights, fd.e - offset)
        return solve_normal_system(matrix, rhs, solver, "fitting"), 1, True

    root = np.sqrt(weights)

    def weighted_residuals(x: np.ndarray) -> np.ndarray:
        model = layout.unpack(x)
        return root * (layout.form.value(model, fd.doses) - fd.e)

    def weighted_jacobian(x: np.ndarray) -> np.ndarray:
        return (root * layout.jacobian(layout.unpack(x), fd.doses)).T

    try:
        result = least_squares(
            weighted_residuals,
            x0,
            jac=weighted_jacobian,
            method="trf",
            x_scale="jac",
            ftol=1e-14,
            xtol=1e-14,
            gtol=1e-14,
            max_nfev=max(200, 100 * layout.n_free),
        )
    except ValueError as e:
        raise ConvergenceError(f"nonlinear solve failed: {e}", "fitting", e)
    return result.x, int(result.nfev), bool(result.success)


def _starting_point(layout: ParamLayout, fd: FitData, seeded: bool) -> np.ndarray:
    template = layout.template
    if seeded or layout.form.linear_in_params:
        return layout.pack(template)
    initial = layout.form.initial_params(template, fd.doses, fd.e)
    return layout.pack(with_full_params(template, (template.y0, *initial), validate=False))


def _converged(x_old: np.ndarray, x_new: np.ndarray, tol: float) -> bool:
    # parameters near zero are measured against the largest one
    scale = np.maximum(np.abs(x_new), max(1e-3 * float(np.max(np.abs(x_new), initial=0.0)), 1e-12))
    return bool(np.all(np.abs(x_new - x_old) <= tol * scale))


def _solve_least_squares(
    fd: FitData, layout: ParamLayout, seeded: bool, options: FitOptions, sigma_x: Optional[np.ndarray]
) -> _Outcome:
    solver = "generic" if options.solver == "auto" else options.solver
    x = _starting_point(layout, fd, seeded)
    weights = 1.0 / fd.sigma0**2
    x, evaluations, converged = _solve_frozen(layout, fd, weights, x, solver)
    if sigma_x is None:
        return _Outcome(layout, fd, x, evaluations, converged, weights)

    # effective variance sigma_y^2 + (dY/dD)^2 sigma_x^2 depends on the slope at the current iterate
    for iteration in range(1, options.max_iter + 1):
        model = layout.unpack(x)
        slopes = layout.form.dose_gradient(model, fd.doses)
        weights = 1.0 / (fd.sigma0**2 + (slopes**2).sum(axis=0) * sigma_x**2)
        x_new, _, converged = _solve_frozen(layout, fd, weights, x, solver)
        done = _converged(x, x_new, options.tol)
        x = x_new
        if done:
            return _Outcome(layout, fd, x, iteration, converged, weights)
    logger.warning(f"Effective-variance least squares did not converge in {options.max_iter} iterations")
    return _Outcome(layout, fd, x, options.max_iter, False, weights)


def _solve_reweighted(
    fd: FitData, layout: ParamLayout, seeded: bool, options: FitOptions, engine: FitEngine, phi: Optional[float]
) -> _Outcome:
    """Fixed point: freeze g_i(lambda), solve the weighted equations, repeat"""
    start = _solve_least_squares(fd, layout, seeded, options, None)
    solver = _solver_for(layout.template, options.solver)
    x = start.x
    for iteration in range(1, options.max_iter + 1):
        weights = engine_weights(engine, model_residuals(fd, layout.unpack(x)), fd.sigma0, phi)
        x_new, _, _ = _solve_frozen(layout, fd, weights, x, solver)
        done = _converged(x, x_new, options.tol)
        logger.debug(f"{engine.value} iteration {iteration}: max |dx| = {np.max(np.abs(x_new - x), initial=0.0):.3e}")
        x = x_new
        if done:
            final = engine_weights(engine, model_residuals(fd, layout.unpack(x)), fd.sigma0, phi)
            return _Outcome(layout, fd, x, iteration, True, final)
    logger.warning(f"{engine.value} fit did not converge in {options.max_iter} iterations; returning the last iterate")
    final = engine_weights(engine, model_residuals(fd, layout.unpack(x)), fd.sigma0, phi)
    return _Outcome(layout, fd, x, options.max_iter, False, final)


def _solve(
    engine: FitEngine,
    data: Sequence[DataPoint],
    template: CurveModel,
    seeded: bool,
    options: FitOptions,
    phi: Optional[float],
    sigma_x: Optional[np.ndarray],
) -> _Outcome:
    layout = ParamLayout(template, options.y0_free)
    fd = FitData(data, template)
    if len(fd) < layout.n_free:
        raise DataError(f"{layout.n_free} free parameters need at least {layout.n_free} points, got {len(fd)}", "fitting")
    if engine == FitEngine.LEAST_SQUARES:
        return _solve_least_squares(fd, layout, seeded, options, sigma_x)
    return _solve_reweighted(fd, layout, seeded, options, engine, phi)


def _fit(
    engine: FitEngine,
    data: Sequence[DataPoint],
    kind: KindLike,
    options: Optional[FitOptions],
    phi: Optional[float] = None,
    sigma_x: Optional[Sequence[float]] = None,
) -> FitResult:
    options = _resolve_options(options)
    template = resolve_template(kind)
    seeded = isinstance(kind, CurveModel)
    if sigma_x is not None:
        sigma_x = np.asarray(sigma_x, dtype=float)
        if sigma_x.shape != (len(data),) or np.any(sigma_x < 0):
            raise DataError("sigma_x needs one non-negative value per point", "fitting")
    logger.info(f"Fitting {template.kind.value} to {len(data)} points with the {engine.value} engine")

    outcome = _solve(engine, data, template, seeded, options, phi, sigma_x)
    if options.y0_free and outcome.model.y0 < 0:
        logger.warning(f"Fitted background Y0={outcome.model.y0:.3e} < 0; refitting with Y0 fixed at 0")
        template = with_full_params(template, (0.0, *template.params))
        options = options.model_copy(update={"y0_free": False})
        outcome = _solve(engine, data, template, seeded, options, phi, sigma_x)
    return _finish(outcome, engine, phi)


def _finish(outcome: _Outcome, engine: FitEngine, phi: Optional[float]) -> FitResult:
    layout, fd = outcome.layout, outcome.fd
    model = layout.unpack(outcome.x, validate=True)
    sigmas, method = estimate_sigmas(fd, layout, model, engine, phi)
    r = model_residuals(fd, model)
    result = FitResult(
        model=model,
        sigmas=tuple(float(s) for s in sigmas),
        log_posterior=model_log_posterior(fd, model, engine, phi),
        weights=tuple(float(w) for w in outcome.weights),
        engine=engine,
        iterations=outcome.iterations,
        converged=outcome.converged,
        y0_free=layout.y0_free,
        phi=phi,
        chi2=compensated_sum((r / fd.sigma0) ** 2),
        sigma_method=method,
    )
    logger.info(
        f"{engine.value} fit of {model.kind.value}: params={model.params}, y0={model.y0:.6g}, "
        f"S={result.log_posterior:.6g}, iterations={result.iterations}, converged={result.converged}"
    )
    return result


def fit_least_squares(
    data: Sequence[DataPoint],
    kind: KindLike,
    options: Optional[FitOptions] = None,
    sigma_x: Optional[Sequence[float]] = None,
) -> FitResult:
    """
    Gaussian least-squares fit (chi^2 minimizer)

    Args:
        data: Calibration points
        kind: Curve kind, or a CurveModel template (structure, fixed Y0, start values)
        options: Tolerances and the Y0-free switch
        sigma_x: Optional horizontal uncertainties; switches to the effective variance
            sigma0^2 + (dY/dD)^2 sigma_x^2

    Returns:
        FitResult: Exact weighted linear solution for kinds linear in their parameters
    """
    return _fit(FitEngine.LEAST_SQUARES, data, kind, options, sigma_x=sigma_x)


def fit_robust_bayesian(data: Sequence[DataPoint], kind: KindLike, options: Optional[FitOptions] = None) -> FitResult:
    """
    Robust Bayesian fit with weights g_i, started from the least-squares solution

    CombinedMixed solves each frozen-weight system by determinant ratios unless
    options.solver is "generic".
    """
    return _fit(FitEngine.ROBUST, data, kind, options)


def fit_mixture(
    data: Sequence[DataPoint], kind: KindLike, phi: Optional[float] = None, options: Optional[FitOptions] = None
) -> FitResult:
    """Good-and-bad-data fit; phi = 0 is least squares, phi = 1 the robust fit"""
    phi = settings.mixture_phi if phi is None else phi
    if not 0.0 <= phi <= 1.0:
        raise InputError(f"outlier probability phi must lie in [0, 1], got {phi}", "fitting")
    return _fit(FitEngine.MIXTURE, data, kind, options, phi=phi)


def fit_poisson_mle(data: Sequence[DataPoint], kind: KindLike = CurveKind.LINEAR_NEUTRON) -> FitResult:
    """
    Poisson maximum likelihood for Y = alpha D without background

    alpha = sum u_i / sum w_i D_i, sigma = sqrt(sum u_i) / sum w_i D_i (1 / sum w_i D_i when no
    aberrations were seen). FitResult.weights holds the cell counts w_i.
    """
    template = resolve_template(kind)
    if template.kind != CurveKind.LINEAR_NEUTRON:
        raise CurveError("the Poisson engine fits linear_neutron only", "fit_poisson_mle")
    fd = FitData(data, template)
    counts = fd.counts()
    if counts is None:
        raise DataError("the Poisson engine needs cells and aberrations for every point", "fit_poisson_mle")
    u, w = counts
    dose = fd.doses[0]
    for row, value in enumerate(dose, start=1):
        if not value > 0:
            raise DataError(f"dose must be > 0 for the Poisson engine (point {row})", "fit_poisson_mle", row=row, column="dose")
    exposure = compensated_sum(w * dose)
    if exposure == 0:
        raise RankDeficiencyError("sum of w_i D_i vanishes", "fit_poisson_mle")
    total = compensated_sum(u)
    alpha = total / exposure
    sigma = math.sqrt(total) / exposure if total > 0 else 1.0 / exposure
    model = CurveModel(kind=CurveKind.LINEAR_NEUTRON, params=(alpha,), y0=0.0)
    logger.info(f"Poisson fit: alpha={alpha:.6g} +/- {sigma:.3g} from {int(total)} aberrations in {int(compensated_sum(w))} cells")
    return FitResult(
        model=model,
        sigmas=(0.0, sigma),
        log_posterior=model_log_posterior(fd, model, FitEngine.POISSON),
        weights=tuple(float(c) for c in w),
        engine=FitEngine.POISSON,
        iterations=0,
        converged=True,
        y0_free=False,
        sigma_method="curvature",
    )


def fit_curve(
    data: Sequence[DataPoint],
    kind: KindLike,
    engine: Union[FitEngine, str] = FitEngine.ROBUST,
    phi: Optional[float] = None,
    options: Optional[FitOptions] = None,
) -> FitResult:
    engine = FitEngine(engine)
    if engine == FitEngine.LEAST_SQUARES:
        return fit_least_squares(data, kind, options)
    if engine == FitEngine.POISSON:
        return fit_poisson_mle(data, kind)
    if engine == FitEngine.MIXTURE:
        return fit_mixture(data, kind, phi, options)
    return fit_robust_bayesian(data, kind, options)
