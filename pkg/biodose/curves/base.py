from abc import ABC, abstractmethod
from typing import List, Tuple
import logging

import numpy as np

from ..models.schemas import CurveKind, CurveModel

logger = logging.getLogger(__name__)


class CurveForm(ABC):
    """
    Abstract base class for calibration curve forms.

    A form is stateless: it interprets the parameter vector of a CurveModel of its kind.
    Dose arrays are shaped (arity, N); parameter gradients are shaped (P + 1, N) with
    row 0 holding dY/dY0.
    """

    kind: CurveKind
    bounded: bool = False
    linear_in_params: bool = False

    @abstractmethod
    def param_count(self, model: CurveModel) -> int:
        """
        Number of lambda parameters a model of this kind must carry

        Args:
            model: Model whose structural fields (degrees, exp_terms) fix the count

        Returns:
            int: Required length of model.params
        """
        pass

    @abstractmethod
    def param_names(self, model: CurveModel) -> List[str]:
        pass

    @abstractmethod
    def value(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        """
        Evaluate Y at N dose points

        Args:
            model: Curve to evaluate
            doses: Array of shape (arity, N), all components >= 0

        Returns:
            np.ndarray: Aberration frequencies, shape (N,)
        """
        pass

    @abstractmethod
    def dose_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def param_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        pass

    def dose_arity(self, model: CurveModel) -> int:
        return 1

    def validate_structure(self, model: CurveModel) -> None:
        if model.radiation_count != 1:
            raise ValueError(f"{self.kind.value} is a single-radiation curve, got radiation_count={model.radiation_count}")

    def free_mask(self, model: CurveModel) -> np.ndarray:
        """Mask over lambda marking the parameters a fit may move"""
        return np.ones(len(model.params), dtype=bool)

    def constrain(self, model: CurveModel, params: np.ndarray) -> np.ndarray:
        """Recompute dependent parameters after the free ones changed"""
        return params

    def fit_gradient(self, model: CurveModel, doses: np.ndarray) -> np.ndarray:
        """Parameter gradient with dependent parameters folded into the free ones"""
        return self.param_gradient(model, doses)

    def initial_params(self, model: CurveModel, doses: np.ndarray, e: np.ndarray) -> Tuple[float, ...]:
        """Starting lambda for an iterative fit; linear forms never need one"""
        return tuple(model.params)

    def span(self, model: CurveModel) -> float:
        return model.ymax - model.y0


def small_dose_slopes(doses: np.ndarray, e: np.ndarray, y0: float, degree: int) -> np.ndarray:
    """
    Unweighted polynomial fit of E - Y0 on dose without intercept, used to seed nonlinear fits

    Args:
        doses: Single-radiation doses, shape (N,)
        e: Observed frequencies, shape (N,)
        y0: Background frequency subtracted before the fit
        degree: Highest power of dose

    Returns:
        np.ndarray: Coefficients of D, D^2, ..., D^degree (non-negative)
    """
    design = np.vander(doses, degree + 1, increasing=True)[:, 1:]
    coefficients, *_ = np.linalg.lstsq(design, e - y0, rcond=None)
    return np.clip(coefficients, 1e-6, None)

