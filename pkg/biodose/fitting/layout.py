from typing import List, Optional, Sequence, Union
import logging

import numpy as np

from ..curves import full_params, get_curve_form, param_names, point_doses, with_full_params
from ..errors import CurveError, DataError
from ..models.schemas import CurveKind, CurveModel, DataPoint

logger = logging.getLogger(__name__)

_STRUCTURED_KINDS = (CurveKind.POLYNOMIAL, CurveKind.MULTI_RADIATION_POLYNOMIAL, CurveKind.GENERALIZED)


def resolve_template(kind: Union[CurveKind, str, CurveModel]) -> CurveModel:
    """
    Structural template for a fit: a CurveModel passes through, a kind gets placeholder parameters

    Args:
        kind: Curve kind, or a CurveModel fixing structure (degrees, exp_terms), Y0, Y_max and start values

    Returns:
        CurveModel: Validated template
    """
    if isinstance(kind, CurveModel):
        return kind
    try:
        kind = CurveKind(kind)
    except ValueError as e:
        raise CurveError(f"Unknown curve kind: {kind}", "fitting", e)
    if kind in _STRUCTURED_KINDS:
        raise CurveError(f"{kind.value} needs a CurveModel template fixing its degrees", "fitting")
    count = get_curve_form(kind).param_count(CurveModel.model_construct(kind=kind))
    return CurveModel(kind=kind, params=(1.0,) * count)


class ParamLayout:
    """
    Maps the free-parameter vector of a fit onto full curve models.

    The full vector is (Y0, lambda_1, ..., lambda_P); Y0 is free unless y0_free is False, and
    a form may hold some lambda fixed or derived (see CurveForm.free_mask).
    """

    def __init__(self, template: CurveModel, y0_free: bool = True):
        self.template = template
        self.form = get_curve_form(template.kind)
        self.y0_free = y0_free
        mask = np.concatenate([[y0_free], self.form.free_mask(template)])
        self.free = np.flatnonzero(mask)

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def names(self) -> List[str]:
        names = param_names(self.template)
        return [names[k] for k in self.free]

    def pack(self, model: CurveModel) -> np.ndarray:
        return full_params(model)[self.free]

    def unpack(self, x: Sequence[float], validate: bool = False) -> CurveModel:
        values = full_params(self.template)
        values[self.free] = x
        values[1:] = self.form.constrain(self.template, values[1:])
        return with_full_params(self.template, values, validate=validate)

    def jacobian(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        """dY/dx for the free parameters, shape (n_free, N)"""
        return self.form.fit_gradient(model, doses)[self.free]

    def expand(self, free_values: Sequence[float], fill: float = 0.0) -> np.ndarray:
        """Spread per-free-parameter values over the full vector"""
        full = np.full(len(self.template.params) + 1, fill)
        full[self.free] = free_values
        return full


class FitData:
    """Calibration points as arrays in the layout a curve kind reads"""

    def __init__(self, points: Sequence[DataPoint], template: CurveModel):
        if not points:
            raise DataError("calibration data is empty", "fitting")
        self.points = list(points)
        self.doses = point_doses(template, self.points)
        self.e = np.array([p.e for p in self.points])
        self.sigma0 = np.array([p.sigma0 for p in self.points])

    def __len__(self) -> int:
        return len(self.points)

    def counts(self) -> Optional[tuple]:
        """(u, w) arrays when every point carries counts"""
        if any(p.cells is None or p.aberrations is None for p in self.points):
            return None
        return (
            np.array([p.aberrations for p in self.points], dtype=float),
            np.array([p.cells for p in self.points], dtype=float),
        )
