"""
Polynomial-family calibration curves: linear neutron, linear-quadratic gamma, the combined
mixed-field curve and the general (multi-radiation) polynomials. All are linear in Y0 and lambda.
"""

from typing import List

import numpy as np

from ..models.schemas import CurveKind, CurveModel
from .base import CurveForm


def _powers(dose: np.ndarray, degree: int) -> np.ndarray:
    """Rows D^1 .. D^degree, shape (degree, N)"""
    exponents = np.arange(1, degree + 1)[:, None]
    return dose[None, :] ** exponents


def _power_slopes(dose: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    degree = len(coefficients)
    if degree == 0:
        return np.zeros_like(dose)
    exponents = np.arange(1, degree + 1)[:, None]
    return (coefficients[:, None] * exponents * dose[None, :] ** (exponents - 1)).sum(axis=0)


class LinearNeutronForm(CurveForm):
    """Y = Y0 + alpha D"""

    kind = CurveKind.LINEAR_NEUTRON
    linear_in_params = True

    def param_count(self, model: CurveModel) -> int:
        return 1

    def param_names(self, model: CurveModel) -> List[str]:
        return ["alpha"]

    def value(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        return model.y0 + model.params[0] * doses[0]

    def dose_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        return np.full_like(doses, model.params[0])

    def param_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        return np.vstack([np.ones_like(doses[0]), doses[0]])


class LinearQuadraticGammaForm(CurveForm):
    """Y = Y0 + beta D + gamma D^2"""

    kind = CurveKind.LINEAR_QUADRATIC_GAMMA
    linear_in_params = True

    def param_count(self, model: CurveModel) -> int:
        return 2

    def param_names(self, model: CurveModel) -> List[str]:
        return ["beta", "gamma"]

    def value(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        beta, gamma = model.params
        dose = doses[0]
        return model.y0 + beta * dose + gamma * dose**2

    def dose_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        beta, gamma = model.params
        return (beta + 2.0 * gamma * doses[0])[None, :]

    def param_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        dose = doses[0]
        return np.vstack([np.ones_like(dose), dose, dose**2])


class CombinedMixedForm(CurveForm):
    """Y = Y0 + alpha D_n + beta D_g + gamma D_g^2, doses ordered (D_n, D_g)"""

    kind = CurveKind.COMBINED_MIXED
    linear_in_params = True

    def param_count(self, model: CurveModel) -> int:
        return 3

    def param_names(self, model: CurveModel) -> List[str]:
        return ["alpha", "beta", "gamma"]

    def dose_arity(self, model: CurveModel) -> int:
        return 2

    def value(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        alpha, beta, gamma = model.params
        dn, dg = doses
        return model.y0 + alpha * dn + beta * dg + gamma * dg**2

    def dose_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        alpha, beta, gamma = model.params
        dn, dg = doses
        return np.vstack([np.full_like(dn, alpha), beta + 2.0 * gamma * dg])

    def param_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        dn, dg = doses
        return np.vstack([np.ones_like(dn), dn, dg, dg**2])


class PolynomialForm(CurveForm):
    """Y = Y0 + sum_j lambda_j D^j, j = 1..n"""

    kind = CurveKind.POLYNOMIAL
    linear_in_params = True

    def validate_structure(self, model: CurveModel) -> None:
        super().validate_structure(model)
        if len(model.degrees) > 1 or any(d < 0 for d in model.degrees):
            raise ValueError("polynomial takes at most one non-negative degree")

    def param_count(self, model: CurveModel) -> int:
        return model.degrees[0] if model.degrees else len(model.params)

    def param_names(self, model: CurveModel) -> List[str]:
        return [f"lambda_{j}" for j in range(1, len(model.params) + 1)]

    def value(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        coefficients = np.asarray(model.params, dtype=float)
        return model.y0 + coefficients @ _powers(doses[0], len(coefficients))

    def dose_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        return _power_slopes(doses[0], np.asarray(model.params, dtype=float))[None, :]

    def param_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        dose = doses[0]
        return np.vstack([np.ones_like(dose), _powers(dose, len(model.params))])


class MultiRadiationPolynomialForm(CurveForm):
    """Y = Y0 + sum_i sum_j lambda_ij D_i^j; params run radiation by radiation, j = 1..n_i"""

    kind = CurveKind.MULTI_RADIATION_POLYNOMIAL
    linear_in_params = True

    def validate_structure(self, model: CurveModel) -> None:
        if model.radiation_count < 1:
            raise ValueError("radiation_count must be >= 1")
        if len(model.degrees) != model.radiation_count:
            raise ValueError(
                f"degrees must list one degree per radiation ({model.radiation_count}), got {len(model.degrees)}"
            )
        if any(d < 0 for d in model.degrees):
            raise ValueError("polynomial degrees must be >= 0")

    def param_count(self, model: CurveModel) -> int:
        return sum(model.degrees)

    def param_names(self, model: CurveModel) -> List[str]:
        return [f"lambda_{i + 1}_{j}" for i, n in enumerate(model.degrees) for j in range(1, n + 1)]

    def dose_arity(self, model: CurveModel) -> int:
        return model.radiation_count

    def _blocks(self, model: CurveModel):
        offset = 0
        params = np.asarray(model.params, dtype=float)
        for i, degree in enumerate(model.degrees):
            yield i, params[offset:offset + degree]
            offset += degree

    def value(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        total = np.full(doses.shape[1], model.y0)
        for i, coefficients in self._blocks(model):
            total = total + coefficients @ _powers(doses[i], len(coefficients))
        return total

    def dose_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        return np.vstack([_power_slopes(doses[i], coefficients) for i, coefficients in self._blocks(model)])

    def param_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        rows = [np.ones(doses.shape[1])]
        for i, degree in enumerate(model.degrees):
            rows.extend(_powers(doses[i], degree))
        return np.vstack(rows)
