from typing import Dict, List, Optional, Sequence, Union
import logging
import math

import numpy as np

from ..errors import CurveError
from ..models.schemas import CurveKind, CurveModel, DataPoint
from .base import CurveForm
from .classical import (
    CombinedMixedForm,
    LinearNeutronForm,
    LinearQuadraticGammaForm,
    MultiRadiationPolynomialForm,
    PolynomialForm,
)
from .generalized import GeneralizedForm
from .saturated import (
    AvramiSigmoidForm,
    BoundedForm,
    CriticalLinearForm,
    CriticalQuadraticForm,
    SaturatedLinearForm,
    SaturatedSigmoidForm,
)

logger = logging.getLogger(__name__)


class CurveFactory:
    """
    Registry of curve forms, one per CurveKind.
    """

    def __init__(self):
        self.forms: Dict[CurveKind, CurveForm] = {}
        self._initialize_forms()

    def _initialize_forms(self) -> None:
        for form_class in (
            LinearNeutronForm,
            LinearQuadraticGammaForm,
            CombinedMixedForm,
            SaturatedLinearForm,
            SaturatedSigmoidForm,
            AvramiSigmoidForm,
            CriticalLinearForm,
            CriticalQuadraticForm,
            PolynomialForm,
            MultiRadiationPolynomialForm,
            GeneralizedForm,
        ):
            form = form_class()
            self.forms[form.kind] = form
        logger.debug(f"Registered {len(self.forms)} curve forms")

    def get_form(self, kind: Union[CurveKind, str]) -> CurveForm:
        try:
            return self.forms[CurveKind(kind)]
        except ValueError as e:
            raise CurveError(f"Unknown curve kind: {kind}", "CurveFactory", e)

    def get_available_kinds(self) -> List[str]:
        return [kind.value for kind in self.forms]


_curve_factory: Optional[CurveFactory] = None


def get_curve_factory() -> CurveFactory:
    global _curve_factory
    if _curve_factory is None:
        _curve_factory = CurveFactory()
    return _curve_factory


def get_curve_form(kind: Union[CurveKind, str]) -> CurveForm:
    return get_curve_factory().get_form(kind)


def _check_doses(model: CurveModel, doses: np.ndarray) -> np.ndarray:
    arity = get_curve_form(model.kind).dose_arity(model)
    if doses.shape[0] != arity:
        raise CurveError(f"{model.kind.value} takes {arity} dose component(s), got {doses.shape[0]}", "curves")
    if not np.all(np.isfinite(doses)) or np.any(doses < 0):
        raise CurveError("dose components must be finite and >= 0", "curves")
    return doses


def dose_vector(model: CurveModel, dose: Union[float, Sequence[float]]) -> np.ndarray:
    """Single dose point as an (arity, 1) array; single-radiation kinds accept a scalar"""
    array = np.atleast_1d(np.asarray(dose, dtype=float))
    if array.ndim != 1:
        raise CurveError("a single dose point must be a scalar or a flat vector", "curves")
    return _check_doses(model, array.reshape(-1, 1))


def dose_matrix(model: CurveModel, doses: Union[Sequence, np.ndarray]) -> np.ndarray:
    """Many dose points as an (arity, N) array; single-radiation kinds accept a flat (N,) array"""
    array = np.asarray(doses, dtype=float)
    if array.ndim == 1:
        array = array.reshape(1, -1)
    return _check_doses(model, array)


def point_doses(model: CurveModel, points: Sequence[DataPoint]) -> np.ndarray:
    """
    Dose coordinates of calibration points in the layout the model's kind reads

    Args:
        model: Curve (or template) fixing the dose arity
        points: Calibration data

    Returns:
        np.ndarray: Shape (arity, N)
    """
    arity = get_curve_form(model.kind).dose_arity(model)
    if model.kind == CurveKind.COMBINED_MIXED:
        columns = [(p.dn, p.dg) for p in points]
    elif model.kind in (CurveKind.MULTI_RADIATION_POLYNOMIAL, CurveKind.GENERALIZED):
        columns = []
        for p in points:
            if p.doses is not None:
                columns.append(p.doses)
            elif arity == 2:
                columns.append((p.dn, p.dg))
            elif arity == 1:
                columns.append((p.total_dose,))
            else:
                raise CurveError(f"{model.kind.value} with {arity} radiations needs per-point dose vectors", "curves")
    else:
        columns = [(p.total_dose,) for p in points]
    if any(len(column) != arity for column in columns):
        raise CurveError(f"every point needs {arity} dose component(s) for {model.kind.value}", "curves")
    return np.asarray(columns, dtype=float).T.reshape(arity, len(points))


def evaluate(model: CurveModel, dose: Union[float, Sequence[float]]) -> float:
    """
    Aberration frequency Y at one dose point

    Args:
        model: Calibration curve
        dose: Scalar dose (Gy) for single-radiation kinds, (D_n, D_g) for CombinedMixed,
            one component per radiation for multi-radiation kinds

    Returns:
        float: Y(D) in aberrations per cell
    """
    doses = dose_vector(model, dose)
    return float(get_curve_form(model.kind).value(model, doses)[0])


def evaluate_many(model: CurveModel, doses: Union[Sequence, np.ndarray]) -> np.ndarray:
    doses = dose_matrix(model, doses)
    return get_curve_form(model.kind).value(model, doses)


def derivative_wrt_dose(model: CurveModel, dose: Union[float, Sequence[float]], component: int = 0) -> float:
    doses = dose_vector(model, dose)
    if not 0 <= component < doses.shape[0]:
        raise CurveError(f"dose component {component} out of range for {model.kind.value}", "curves")
    return float(get_curve_form(model.kind).dose_gradient(model, doses)[component, 0])


def derivative_wrt_param(model: CurveModel, dose: Union[float, Sequence[float]], index: int) -> float:
    """dY/dlambda_index at one dose point; index 0 addresses Y0, index k >= 1 addresses params[k - 1]"""
    doses = dose_vector(model, dose)
    if not 0 <= index <= len(model.params):
        raise CurveError(f"parameter index {index} out of range (0..{len(model.params)})", "curves")
    return float(get_curve_form(model.kind).param_gradient(model, doses)[index, 0])


def param_names(model: CurveModel) -> List[str]:
    return ["y0"] + get_curve_form(model.kind).param_names(model)


def full_params(model: CurveModel) -> np.ndarray:
    return np.array((model.y0, *model.params), dtype=float)


def with_full_params(model: CurveModel, values: Sequence[float], validate: bool = True) -> CurveModel:
    """
    Copy of model with (Y0, lambda) replaced

    Args:
        model: Structural template
        values: Full parameter vector, Y0 first
        validate: Re-run the CurveModel invariants; fits switch this off for trial iterates

    Returns:
        CurveModel: Updated model
    """
    values = [float(v) for v in values]
    update = {"y0": values[0], "params": tuple(values[1:])}
    if not validate:
        return model.model_copy(update=update)
    data = model.model_dump()
    data.update(update)
    return CurveModel(**data)


def sup_value(model: CurveModel) -> float:
    """Least upper bound of Y over dose for bounded kinds, infinity otherwise"""
    form = get_curve_form(model.kind)
    if isinstance(form, BoundedForm):
        return model.y0 + form.span(model) * form.shape_sup()
    if form.bounded:
        return model.ymax
    return math.inf
