"""
Bayesian model selection: reliability P(M|D) up to a common constant, Ockham factors and
pairwise preference ratios W_M between fitted calibration curves.

    P(M|D) ~ sum_i (1/R_i^2) [1 - exp(-R_i^2 / (2 sigma0_i^2))] * prod_lambda sigma_lambda sqrt(2 pi) / (lambda_max - lambda_min)

The sum over points is kept exactly as the robust likelihood marginal gives it.
"""

from typing import List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from .config import settings
from .errors import ConvergenceError, DataError, InfeasibleError, InputError
from .fitting import FitData, ParamLayout, fit_curve, fit_least_squares, fit_robust_bayesian, point_probability
from .fitting.engines import KindLike
from .fitting.weights import SQRT_2PI
from .models.schemas import DataPoint, FitEngine, FitOptions, FitResult, ModelEvidence
from .utils.numerics import compensated_sum

logger = logging.getLogger(__name__)

Range = Tuple[float, float]

BISECTION_STEPS = 60
MAX_DOUBLINGS = 60


def bracket_terms(residual: np.ndarray, sigma0: np.ndarray) -> np.ndarray:
    """(1/R^2) [1 - exp(-R^2 / (2 sigma0^2))], equal to 1/(2 sigma0^2) at R = 0"""
    return np.asarray(point_probability(residual, sigma0)) * SQRT_2PI / sigma0


def _free_values(fit: FitResult) -> Tuple[ParamLayout, np.ndarray, np.ndarray]:
    layout = ParamLayout(fit.model, fit.y0_free)
    values = layout.pack(fit.model)
    sigmas = np.asarray(fit.sigmas)[layout.free]
    return layout, values, sigmas


def default_ranges(data: Sequence[DataPoint], fit: FitResult, k: Optional[float] = None) -> List[Range]:
    """
    Non-arbitrary ranges lambda +/- k sigma_chi, sigma_chi from the least-squares fit of the same curve

    Args:
        data: Calibration points
        fit: Fit whose free parameters need ranges
        k: Degree of belief; settings.selection_k when omitted

    Returns:
        List[Range]: One (lambda_min, lambda_max) per free parameter
    """
    k = settings.selection_k if k is None else k
    layout, values, _ = _free_values(fit)
    if layout.n_free == 0:
        return []
    options = FitOptions(tol=settings.fit_tol, max_iter=settings.fit_max_iter, y0_free=fit.y0_free)
    reference = fit_least_squares(data, fit.model, options)
    sigma_chi = np.asarray(reference.sigmas)[ParamLayout(reference.model, reference.y0_free).free]
    if len(sigma_chi) != len(values) or not np.all(np.isfinite(sigma_chi)):
        raise InfeasibleError("least-squares deviations needed for the k-sigma ranges are unavailable", "selection")
    return [(float(v - k * s), float(v + k * s)) for v, s in zip(values, sigma_chi)]


def _count_outside(fd: FitData, layout: ParamLayout, x: np.ndarray) -> int:
    model = layout.unpack(x)
    residual = layout.form.value(model, fd.doses) - fd.e
    return int(np.count_nonzero(np.abs(residual) > fd.sigma0))


def _widest_offset(tolerated, start: float) -> float:
    """Largest offset d >= 0 with tolerated(d), by doubling then bisection"""
    low, high = 0.0, start
    for _ in range(MAX_DOUBLINGS):
        if not tolerated(high):
            break
        low, high = high, 2.0 * high
    else:
        return low
    for _ in range(BISECTION_STEPS):
        middle = 0.5 * (low + high)
        if tolerated(middle):
            low = middle
        else:
            high = middle
    return low


def arbitrary_ranges(
    data: Sequence[DataPoint], kind: KindLike, fit: Optional[FitResult] = None, max_outside: Optional[int] = None
) -> List[Range]:
    """
    Per free parameter, the widest span around the fitted value whose endpoint curves leave at most
    max_outside points (3 by default, never fewer than at the fit itself) farther than sigma0 away

    Args:
        data: Calibration points, at least 4
        kind: Curve kind or template
        fit: Fit to expand around; the robust fit of kind when omitted
        max_outside: Allowed number of points outside the band

    Returns:
        List[Range]: One (lambda_min, lambda_max) per free parameter
    """
    if len(data) <= 3:
        raise DataError(f"arbitrary ranges are under-determined for N={len(data)} <= 3 points", "selection")
    max_outside = settings.selection_max_outside if max_outside is None else max_outside
    fit = fit if fit is not None else fit_robust_bayesian(data, kind)
    layout, values, sigmas = _free_values(fit)
    fd = FitData(data, fit.model)
    allowed = max(max_outside, _count_outside(fd, layout, values))

    ranges = []
    for index, value in enumerate(values):
        scale = max(1.0, abs(value))
        start = sigmas[index] if np.isfinite(sigmas[index]) and sigmas[index] > 0 else 1e-3 * scale

        def tolerated(offset: float, sign: float) -> bool:
            x = values.copy()
            x[index] = value + sign * offset
            return _count_outside(fd, layout, x) <= allowed

        lower = _widest_offset(lambda d: tolerated(d, -1.0), start)
        upper = _widest_offset(lambda d: tolerated(d, 1.0), start)
        floor = 1e-12 * scale
        ranges.append((value - max(lower, floor), value + max(upper, floor)))
        logger.debug(f"Arbitrary range for {layout.names[index]}: {ranges[-1]}")
    return ranges


def evidence(
    data: Sequence[DataPoint],
    fit: FitResult,
    ranges: Optional[Sequence[Range]] = None,
    k: Optional[float] = None,
) -> ModelEvidence:
    """
    Reliability of a fitted model with its Ockham factor

    Args:
        data: Calibration points the fit used
        fit: Converged fit; its sigmas are the sigma_lambda of the Ockham factor
        ranges: Per free parameter (lambda_min, lambda_max); the k-sigma rule when omitted
        k: Degree of belief of the k-sigma rule

    Returns:
        ModelEvidence
    """
    if not fit.converged:
        raise ConvergenceError("evidence needs a converged fit", "selection")
    layout, values, sigmas = _free_values(fit)
    rule = "given"
    if ranges is None:
        ranges = default_ranges(data, fit, k)
        rule = f"k{settings.selection_k if k is None else k:g}"
    ranges = [(float(lo), float(hi)) for lo, hi in ranges]
    if len(ranges) != layout.n_free:
        raise InputError(f"expected {layout.n_free} ranges ({', '.join(layout.names)}), got {len(ranges)}", "selection")
    for name, value, (lo, hi) in zip(layout.names, values, ranges):
        if not hi > lo:
            raise InputError(f"range for {name} has zero width", "selection")
        if not lo < value < hi:
            raise InputError(f"fitted {name}={value:.6g} lies outside its range ({lo:.6g}, {hi:.6g})", "selection")

    fd = FitData(data, fit.model)
    residual = layout.form.value(fit.model, fd.doses) - fd.e
    bracket_sum = compensated_sum(bracket_terms(residual, fd.sigma0))
    factors = [s * SQRT_2PI / (hi - lo) for s, (lo, hi) in zip(sigmas, ranges)]
    ockham = math.prod(factors)
    log_reliability = math.log(bracket_sum) + compensated_sum(np.log(factors)) if factors else math.log(bracket_sum)
    logger.info(
        f"Evidence for {fit.model.kind.value}: bracket={bracket_sum:.6g}, ockham={ockham:.6g}, log P={log_reliability:.6g}"
    )
    return ModelEvidence(
        model=fit.model,
        reliability=bracket_sum * ockham,
        log_reliability=log_reliability,
        ockham=ockham,
        bracket_sum=bracket_sum,
        lambda_ranges=tuple(ranges),
        param_names=tuple(layout.names),
        param_sigmas=tuple(float(s) for s in sigmas),
        n_params=layout.n_free,
        range_rule=rule,
    )


def compare(a: ModelEvidence, b: ModelEvidence) -> float:
    """Preference ratio W_M = P(A|D) / P(B|D); above 1 model A wins"""
    if b.reliability == 0:
        raise InfeasibleError("cannot compare against a model with zero reliability", "selection")
    return math.exp(a.log_reliability - b.log_reliability)


def rank_models(
    data: Sequence[DataPoint],
    kinds: Sequence[KindLike],
    engine: FitEngine = FitEngine.ROBUST,
    rule: str = "k2",
    k: Optional[float] = None,
) -> Tuple[List[ModelEvidence], List[List[float]]]:
    """
    Fit every candidate, score it and sort by reliability

    Args:
        data: Calibration points
        kinds: Candidate curve kinds or templates
        engine: Fitting engine supplying sigma_lambda
        rule: "k2" for the k-sigma ranges, "arbitrary" for the outside-points rule
        k: Degree of belief of the k-sigma rule

    Returns:
        Evidences sorted by descending reliability and the matrix W[i][j] = compare(i, j)
    """
    if rule not in ("k2", "arbitrary"):
        raise InputError(f"unknown range rule {rule!r}; use k2 or arbitrary", "selection")
    scored = []
    for kind in kinds:
        fit = fit_curve(data, kind, engine)
        ranges = arbitrary_ranges(data, kind, fit) if rule == "arbitrary" else None
        scored.append(evidence(data, fit, ranges, k))
    scored.sort(key=lambda item: item.log_reliability, reverse=True)
    matrix = [[compare(a, b) for b in scored] for a in scored]
    logger.info("Model ranking: " + ", ".join(f"{e.kind} ({e.log_reliability:.4g})" for e in scored))
    return scored, matrix
