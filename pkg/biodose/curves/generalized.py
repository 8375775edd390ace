"""
The generalized calibration curve

    Y = Y0 + (Y_max - Y0) sum_i sum_{j=0..n_i} (a_ij + b_ij D_i^j exp(-sum_k c_ijk D_i^m_ijk))

Parameters are stored radiation by radiation and, inside a radiation, power by power as
a_ij, b_ij, c_ij1 .. c_ijK with K = exp_terms. Exponents m_ijk come from CurveModel.exponents
in the same (i, j, k) order and default to m_ijk = k.

Y(0) = Y0 requires sum_j a_ij + b_i0 = 0 for every radiation; fits keep every a_ij fixed and
re-derive a_i0 from that constraint.
"""

from typing import Iterator, List, Tuple

import numpy as np

from ..models.schemas import CurveKind, CurveModel
from .base import CurveForm

ZERO_DOSE_TOLERANCE = 1e-12


class GeneralizedForm(CurveForm):
    kind = CurveKind.GENERALIZED
    bounded = True

    def block_size(self, model: CurveModel) -> int:
        return 2 + model.exp_terms

    def param_count(self, model: CurveModel) -> int:
        return sum(degree + 1 for degree in model.degrees) * self.block_size(model)

    def dose_arity(self, model: CurveModel) -> int:
        return model.radiation_count

    def exponent_table(self, model: CurveModel) -> np.ndarray:
        """Exponents m as an array of shape (terms, K)"""
        terms = sum(degree + 1 for degree in model.degrees)
        if model.exponents:
            return np.asarray(model.exponents, dtype=float).reshape(terms, model.exp_terms)
        return np.tile(np.arange(1, model.exp_terms + 1, dtype=float), (terms, 1))

    def terms(self, model: CurveModel) -> Iterator[Tuple[int, int, int]]:
        """Yield (radiation i, power j, offset of a_ij in params)"""
        offset = 0
        for i, degree in enumerate(model.degrees):
            for j in range(degree + 1):
                yield i, j, offset
                offset += self.block_size(model)

    def validate_structure(self, model: CurveModel) -> None:
        if model.radiation_count < 1 or len(model.degrees) != model.radiation_count:
            raise ValueError("generalized curve needs one degree per radiation")
        if any(d < 0 for d in model.degrees) or model.exp_terms < 0:
            raise ValueError("degrees and exp_terms must be >= 0")
        terms = sum(degree + 1 for degree in model.degrees)
        if model.exponents and len(model.exponents) != terms * model.exp_terms:
            raise ValueError(f"exponents must hold {terms * model.exp_terms} values, got {len(model.exponents)}")
        if any(not m > 0 for m in model.exponents):
            raise ValueError("exponents m must be > 0")
        if len(model.params) != self.param_count(model):
            return
        for i, residual in enumerate(self.zero_dose_residuals(model, np.asarray(model.params, dtype=float))):
            if abs(residual) > ZERO_DOSE_TOLERANCE:
                raise ValueError(f"radiation {i + 1}: sum_j a_ij + b_i0 must vanish so that Y(0) = Y0, got {residual}")

    def zero_dose_residuals(self, model: CurveModel, params: np.ndarray) -> np.ndarray:
        residuals = np.zeros(model.radiation_count)
        for i, j, offset in self.terms(model):
            residuals[i] += params[offset]
            if j == 0:
                residuals[i] += params[offset + 1]
        return residuals

    def param_names(self, model: CurveModel) -> List[str]:
        names = []
        for i, j, _ in self.terms(model):
            names.extend([f"a_{i + 1}_{j}", f"b_{i + 1}_{j}"])
            names.extend(f"c_{i + 1}_{j}_{k + 1}" for k in range(model.exp_terms))
        return names

    def _term_parts(self, model: CurveModel, doses: np.ndarray):
        """Yield (i, j, offset, D_i, D_i^j, exp factor, exponent powers D_i^m) per term"""
        params = np.asarray(model.params, dtype=float)
        table = self.exponent_table(model)
        for row, (i, j, offset) in enumerate(self.terms(model)):
            dose = doses[i]
            c = params[offset + 2:offset + 2 + model.exp_terms]
            powers = dose[None, :] ** table[row][:, None]
            factor = np.exp(-(c[:, None] * powers).sum(axis=0))
            yield i, j, offset, row, dose, dose**j, factor, powers

    def _sum(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        params = model.params
        total = np.zeros(doses.shape[1])
        for _, _, offset, _, _, powered, factor, _ in self._term_parts(model, doses):
            total = total + params[offset] + params[offset + 1] * powered * factor
        return total

    def value(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        at_origin = np.all(doses == 0.0, axis=0)
        computed = model.y0 + self.span(model) * self._sum(model, doses)
        return np.where(at_origin, model.y0, computed)

    def dose_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        params = model.params
        table = self.exponent_table(model)
        gradient = np.zeros_like(doses, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            for i, j, offset, row, dose, powered, factor, _ in self._term_parts(model, doses):
                b = params[offset + 1]
                c = np.asarray(params[offset + 2:offset + 2 + model.exp_terms])
                m = table[row]
                rising = j * dose ** (j - 1) if j > 0 else np.zeros_like(dose)
                decay = (c[:, None] * m[:, None] * dose[None, :] ** (j + m[:, None] - 1.0)).sum(axis=0)
                gradient[i] += b * (rising - decay) * factor
        return self.span(model) * gradient

    def param_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        params = model.params
        span = self.span(model)
        gradient = np.zeros((len(params) + 1, doses.shape[1]))
        gradient[0] = 1.0 - self._sum(model, doses)
        for _, _, offset, _, _, powered, factor, powers in self._term_parts(model, doses):
            b = params[offset + 1]
            gradient[offset + 1] = span
            gradient[offset + 2] = span * powered * factor
            gradient[offset + 3:offset + 3 + model.exp_terms] = -span * b * powered * factor * powers
        return gradient

    def free_mask(self, model: CurveModel) -> np.ndarray:
        mask = np.ones(len(model.params), dtype=bool)
        for _, _, offset in self.terms(model):
            mask[offset] = False
        return mask

    def constrain(self, model: CurveModel, params: np.ndarray) -> np.ndarray:
        params = np.array(params, dtype=float)
        residuals = self.zero_dose_residuals(model, params)
        for i, j, offset in self.terms(model):
            if j == 0:
                params[offset] -= residuals[i]
        return params

    def fit_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        gradient = self.param_gradient(model, doses)
        span = self.span(model)
        for _, j, offset in self.terms(model):
            if j == 0:
                # b_i0 also moves the derived a_i0
                gradient[offset + 2] -= span
        return gradient
