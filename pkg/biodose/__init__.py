# Radiation biodosimetry: calibration curves, robust fitting, model selection and dose estimation
__version__ = "1.0.0"

import logging

from .config import settings
from .curves import evaluate, evaluate_many, get_curve_form
from .fitting import fit_curve, fit_least_squares, fit_mixture, fit_poisson_mle, fit_robust_bayesian
from .selection import compare, evidence, rank_models
from .services import get_dose_estimator, get_simulator


def configure_logging() -> None:
    """
    Configure root logging from settings.log_level
    """
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


__all__ = [
    "__version__",
    "compare",
    "configure_logging",
    "evaluate",
    "evaluate_many",
    "evidence",
    "fit_curve",
    "fit_least_squares",
    "fit_mixture",
    "fit_poisson_mle",
    "fit_robust_bayesian",
    "get_curve_form",
    "get_dose_estimator",
    "get_simulator",
    "rank_models",
    "settings",
]
