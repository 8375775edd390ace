"""
Calibration curve forms and the public evaluation API
"""

from .base import CurveForm
from .factory import (
    CurveFactory,
    derivative_wrt_dose,
    derivative_wrt_param,
    dose_matrix,
    evaluate,
    evaluate_many,
    full_params,
    get_curve_factory,
    get_curve_form,
    param_names,
    point_doses,
    sup_value,
    with_full_params,
)

__all__ = [
    "CurveForm",
    "CurveFactory",
    "derivative_wrt_dose",
    "derivative_wrt_param",
    "dose_matrix",
    "evaluate",
    "evaluate_many",
    "full_params",
    "get_curve_factory",
    "get_curve_form",
    "param_names",
    "point_doses",
    "sup_value",
    "with_full_params",
]
