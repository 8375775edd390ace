"""
Curves bounded by Y_max: the saturated forms Y = Y0 + (Y_max - Y0)(1 - exp(-q)) and the critical
forms Y = Y0 + (Y_max - Y0) q exp(-q), where the exponent q(D) is alpha D, beta D + gamma D^2 or a D^n.
"""

from abc import abstractmethod
from typing import List, Tuple
import math

import numpy as np
from scipy.special import xlogy

from ..models.schemas import CurveKind, CurveModel
from .base import CurveForm, small_dose_slopes


class BoundedForm(CurveForm):
    bounded = True

    @abstractmethod
    def exponent(self, params: Tuple[float, ...], dose: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def exponent_param_gradient(self, params: Tuple[float, ...], dose: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def exponent_slope(self, params: Tuple[float, ...], dose: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def shape(self, q: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def shape_slope(self, q: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def shape_sup(self) -> float:
        pass

    def value(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        q = self.exponent(model.params, doses[0])
        return model.y0 + self.span(model) * self.shape(q)

    def dose_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        dose = doses[0]
        q = self.exponent(model.params, dose)
        return (self.span(model) * self.shape_slope(q) * self.exponent_slope(model.params, dose))[None, :]

    def param_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        dose = doses[0]
        q = self.exponent(model.params, dose)
        d_y0 = 1.0 - self.shape(q)
        d_params = self.span(model) * self.shape_slope(q)[None, :] * self.exponent_param_gradient(model.params, dose)
        return np.vstack([d_y0, d_params])


class SaturatingShape:
    """f(q) = 1 - exp(-q)"""

    def shape(self, q: np.ndarray) -> np.ndarray:
        return -np.expm1(-q)

    def shape_slope(self, q: np.ndarray) -> np.ndarray:
        return np.exp(-q)

    def shape_sup(self) -> float:
        return 1.0


class CriticalShape:
    """f(q) = q exp(-q), maximal at q = 1"""

    def shape(self, q: np.ndarray) -> np.ndarray:
        return q * np.exp(-q)

    def shape_slope(self, q: np.ndarray) -> np.ndarray:
        return (1.0 - q) * np.exp(-q)

    def shape_sup(self) -> float:
        return math.exp(-1.0)


class LinearExponent:
    def param_count(self, model: CurveModel) -> int:
        return 1

    def param_names(self, model: CurveModel) -> List[str]:
        return ["alpha"]

    def exponent(self, params, dose):
        return params[0] * dose

    def exponent_param_gradient(self, params, dose):
        return dose[None, :]

    def exponent_slope(self, params, dose):
        return np.full_like(dose, params[0])

    def initial_params(self, model: CurveModel, doses: np.ndarray, e: np.ndarray) -> Tuple[float, ...]:
        (slope,) = small_dose_slopes(doses[0], e, model.y0, 1)
        return (slope / self.span(model),)


class QuadraticExponent:
    def param_count(self, model: CurveModel) -> int:
        return 2

    def param_names(self, model: CurveModel) -> List[str]:
        return ["beta", "gamma"]

    def exponent(self, params, dose):
        beta, gamma = params
        return beta * dose + gamma * dose**2

    def exponent_param_gradient(self, params, dose):
        return np.vstack([dose, dose**2])

    def exponent_slope(self, params, dose):
        beta, gamma = params
        return beta + 2.0 * gamma * dose

    def initial_params(self, model: CurveModel, doses: np.ndarray, e: np.ndarray) -> Tuple[float, ...]:
        beta, gamma = small_dose_slopes(doses[0], e, model.y0, 2)
        span = self.span(model)
        return (beta / span, gamma / span)


class AvramiExponent:
    """q = a D^n with n > 0"""

    def param_count(self, model: CurveModel) -> int:
        return 2

    def param_names(self, model: CurveModel) -> List[str]:
        return ["a", "n"]

    def validate_structure(self, model: CurveModel) -> None:
        super().validate_structure(model)
        if len(model.params) == 2 and not model.params[1] > 0:
            raise ValueError(f"Avrami exponent n must be > 0, got {model.params[1]}")

    def exponent(self, params, dose):
        a, n = params
        return a * dose**n

    def exponent_param_gradient(self, params, dose):
        a, n = params
        powered = dose**n
        return np.vstack([powered, a * xlogy(powered, dose)])

    def exponent_slope(self, params, dose):
        a, n = params
        # at D = 0 the slope is a for n = 1, 0 for n > 1 and infinite for n < 1
        with np.errstate(divide="ignore"):
            return a * n * dose ** (n - 1.0)

    def initial_params(self, model: CurveModel, doses: np.ndarray, e: np.ndarray) -> Tuple[float, ...]:
        (slope,) = small_dose_slopes(doses[0], e, model.y0, 1)
        return (slope / self.span(model), 1.0)


class SaturatedLinearForm(LinearExponent, SaturatingShape, BoundedForm):
    kind = CurveKind.SATURATED_LINEAR


class SaturatedSigmoidForm(QuadraticExponent, SaturatingShape, BoundedForm):
    kind = CurveKind.SATURATED_SIGMOID


class AvramiSigmoidForm(AvramiExponent, SaturatingShape, BoundedForm):
    kind = CurveKind.AVRAMI_SIGMOID


class CriticalLinearForm(LinearExponent, CriticalShape, BoundedForm):
    kind = CurveKind.CRITICAL_LINEAR


class CriticalQuadraticForm(QuadraticExponent, CriticalShape, BoundedForm):
    kind = CurveKind.CRITICAL_QUADRATIC
