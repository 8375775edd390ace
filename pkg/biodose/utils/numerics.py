from typing import Callable, Iterable, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import RankDeficiencyError, SingularHessianError

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e13


def compensated_sum(values: Iterable[float]) -> float:
    """Order-independent sum (correctly rounded)"""
    return math.fsum(np.asarray(values, dtype=float).ravel())


def weighted_normal_system(design: np.ndarray, weights: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Normal matrix sum_i w_i x_i x_i^T and right-hand side sum_i w_i x_i y_i, every entry summed with fsum

    Args:
        design: Regressors, shape (P, N)
        weights: Point weights, shape (N,)
        target: Responses, shape (N,)

    Returns:
        Tuple[np.ndarray, np.ndarray]: (P, P) matrix and (P,) vector
    """
    size = design.shape[0]
    matrix = np.empty((size, size))
    for a in range(size):
        for b in range(a, size):
            matrix[a, b] = matrix[b, a] = compensated_sum(weights * design[a] * design[b])
    rhs = np.array([compensated_sum(weights * design[a] * target) for a in range(size)])
    return matrix, rhs


def check_rank(matrix: np.ndarray, component: str) -> None:
    """Raise RankDeficiencyError when the unit-diagonal scaled matrix is numerically singular"""
    diagonal = np.diag(matrix)
    if np.any(diagonal <= 0) or not np.all(np.isfinite(matrix)):
        raise RankDeficiencyError("normal matrix has a vanishing direction (degenerate design)", component)
    scale = 1.0 / np.sqrt(diagonal)
    condition = np.linalg.cond(matrix * np.outer(scale, scale))
    if not condition < CONDITION_LIMIT:
        raise RankDeficiencyError(f"normal matrix is rank deficient (condition {condition:.3e})", component)


def cramer_solve(matrix: np.ndarray, rhs: np.ndarray, component: str = "cramer") -> Tuple[np.ndarray, float]:
    """
    Solve matrix @ x = rhs as determinant ratios W_k / W_0

    Returns:
        Tuple[np.ndarray, float]: Solution and the system determinant W_0
    """
    w0 = np.linalg.det(matrix)
    if w0 == 0.0 or not math.isfinite(w0):
        raise RankDeficiencyError("system determinant W0 vanishes (degenerate design)", component)
    solution = np.empty(len(rhs))
    for k in range(len(rhs)):
        replaced = matrix.copy()
        replaced[:, k] = rhs
        solution[k] = np.linalg.det(replaced) / w0
    return solution, w0


def solve_normal_system(matrix: np.ndarray, rhs: np.ndarray, solver: str = "generic", component: str = "fit") -> np.ndarray:
    check_rank(matrix, component)
    if solver == "cramer":
        solution, _ = cramer_solve(matrix, rhs, component)
        return solution
    return np.linalg.solve(matrix, rhs)


def finite_difference_hessian(func: Callable[[np.ndarray], float], x0: np.ndarray, steps: Sequence[float]) -> np.ndarray:
    """
    Central-difference Hessian with a separate step per axis

    Args:
        func: Scalar function of the parameter vector
        x0: Expansion point
        steps: Step along each axis

    Returns:
        np.ndarray: Symmetric (P, P) matrix
    """
    x0 = np.asarray(x0, dtype=float)
    size = len(x0)
    hessian = np.zeros((size, size))
    f0 = func(x0)
    basis = np.eye(size) * np.asarray(steps, dtype=float)
    for i in range(size):
        hi = basis[i]
        hessian[i, i] = (func(x0 + hi) + func(x0 - hi) - 2.0 * f0) / steps[i] ** 2
        for j in range(i + 1, size):
            hj = basis[j]
            value = (
                func(x0 + hi + hj) + func(x0 - hi - hj) - func(x0 - hi + hj) - func(x0 + hi - hj)
            ) / (4.0 * steps[i] * steps[j])
            hessian[i, j] = hessian[j, i] = value
    return hessian


def covariance_from_hessian(hessian: np.ndarray, component: str) -> np.ndarray:
    """Inverse of -H; raises SingularHessianError carrying the condition estimate of the unit-diagonal scaled H"""
    if hessian.size == 0:
        return np.zeros((0, 0))
    diagonal = np.abs(np.diag(hessian))
    if np.any(diagonal == 0) or not np.all(np.isfinite(hessian)):
        raise SingularHessianError("Hessian of the log-posterior is not invertible", component, math.inf)
    scale = np.outer(1.0 / np.sqrt(diagonal), 1.0 / np.sqrt(diagonal))
    scaled = hessian * scale
    condition = np.linalg.cond(scaled)
    if not condition < CONDITION_LIMIT:
        raise SingularHessianError("Hessian of the log-posterior is not invertible", component, condition)
    return np.linalg.inv(-scaled) * scale


def golden_refine(func: Callable[[float], float], left: float, middle: float, right: float, tol: float = 1e-10) -> float:
    """Maximize func on [left, right] by golden-section search bracketed at middle"""
    if not left < middle < right:
        return middle
    try:
        result = minimize_scalar(lambda x: -func(x), bracket=(left, middle, right), method="golden", tol=tol)
    except ValueError as e:
        logger.debug(f"Golden refinement skipped: {e}")
        return middle
    x = float(result.x)
    if func(x) < func(middle):
        return middle
    return x if left <= x <= right else middle
