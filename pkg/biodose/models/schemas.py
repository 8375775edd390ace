from datetime import datetime
from enum import Enum
from typing import Any, Dict, NamedTuple, Optional, Tuple, Union
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


class CurveKind(str, Enum):
    LINEAR_NEUTRON = "linear_neutron"
    LINEAR_QUADRATIC_GAMMA = "linear_quadratic_gamma"
    COMBINED_MIXED = "combined_mixed"
    SATURATED_LINEAR = "saturated_linear"
    SATURATED_SIGMOID = "saturated_sigmoid"
    AVRAMI_SIGMOID = "avrami_sigmoid"
    CRITICAL_LINEAR = "critical_linear"
    CRITICAL_QUADRATIC = "critical_quadratic"
    POLYNOMIAL = "polynomial"
    MULTI_RADIATION_POLYNOMIAL = "multi_radiation_polynomial"
    GENERALIZED = "generalized"


class CurveModel(BaseModel):
    """
    A calibration curve: its kind, the parameter vector lambda, background Y0 and ceiling Y_max.

    Polynomial and multi-radiation kinds carry per-radiation degrees; the generalized kind also
    carries the number of exponential terms per (i, j) pair and their exponents m_{i,j,k}.
    """

    model_config = ConfigDict(frozen=True)

    kind: CurveKind
    params: Tuple[float, ...] = ()
    y0: float = 0.0005
    ymax: float = 1.0
    radiation_count: int = 1
    degrees: Tuple[int, ...] = ()
    exp_terms: int = 0
    exponents: Tuple[float, ...] = ()

    @model_validator(mode="before")
    @classmethod
    def _derive_radiation_count(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("degrees") and "radiation_count" not in data:
            data = dict(data)
            data["radiation_count"] = len(data["degrees"])
        return data

    @model_validator(mode="after")
    def _check_structure(self) -> "CurveModel":
        from ..curves.factory import get_curve_form

        if not math.isfinite(self.y0) or self.y0 < 0:
            raise ValueError(f"background y0 must be finite and >= 0, got {self.y0}")
        if not all(math.isfinite(p) for p in self.params):
            raise ValueError("curve parameters must be finite")
        form = get_curve_form(self.kind)
        if form.bounded and not self.ymax > self.y0:
            raise ValueError(f"{self.kind.value} requires ymax > y0 (ymax={self.ymax}, y0={self.y0})")
        form.validate_structure(self)
        expected = form.param_count(self)
        if len(self.params) != expected:
            raise ValueError(f"{self.kind.value} takes {expected} parameters, got {len(self.params)}")
        return self


class DataPoint(BaseModel):
    """One calibration observation (D_n, D_g, E, sigma0) with optional counts u, w"""

    model_config = ConfigDict(frozen=True)

    dn: float = Field(0.0, ge=0)
    dg: float = Field(0.0, ge=0)
    e: float = Field(ge=0)
    sigma0: float = Field(gt=0)
    cells: Optional[int] = Field(None, ge=1)
    aberrations: Optional[int] = Field(None, ge=0)
    doses: Optional[Tuple[float, ...]] = None

    @model_validator(mode="before")
    @classmethod
    def _fill_from_counts(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        cells, aberrations = data.get("cells"), data.get("aberrations")
        if cells is not None and aberrations is not None and cells > 0:
            if data.get("e") is None:
                data["e"] = aberrations / cells
            if data.get("sigma0") is None:
                # Poisson counting error on the frequency
                data["sigma0"] = math.sqrt(max(aberrations, 1)) / cells
        return data

    @model_validator(mode="after")
    def _check_counts(self) -> "DataPoint":
        if self.cells is not None and self.aberrations is not None:
            if abs(self.e - self.aberrations / self.cells) > 1e-12:
                raise ValueError(
                    f"frequency e={self.e} disagrees with aberrations/cells={self.aberrations}/{self.cells}"
                )
        if self.doses is not None and any(d < 0 or not math.isfinite(d) for d in self.doses):
            raise ValueError("dose components must be finite and >= 0")
        return self

    @classmethod
    def from_counts(
        cls, dn: float, dg: float, cells: int, aberrations: int, sigma0: Optional[float] = None
    ) -> "DataPoint":
        return cls(dn=dn, dg=dg, cells=cells, aberrations=aberrations, sigma0=sigma0)

    @property
    def total_dose(self) -> float:
        return self.dn + self.dg


class FitEngine(str, Enum):
    LEAST_SQUARES = "ls"
    POISSON = "poisson"
    ROBUST = "robust"
    MIXTURE = "mixture"


class FitOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: float = Field(1e-8, gt=0)
    max_iter: int = Field(1000, ge=1)
    y0_free: bool = True
    solver: str = Field("auto", pattern="^(auto|cramer|generic)$")


class FitResult(BaseModel):
    """Fitted curve with per-parameter uncertainties (Y0 first), log-posterior S and point weights"""

    model_config = ConfigDict(frozen=True)

    model: CurveModel
    sigmas: Tuple[float, ...]
    log_posterior: float
    weights: Tuple[float, ...]
    engine: FitEngine
    iterations: int = 0
    converged: bool = True
    y0_free: bool = True
    phi: Optional[float] = None
    chi2: Optional[float] = None
    sigma_method: str = "hessian"

    @model_validator(mode="after")
    def _check_sigmas(self) -> "FitResult":
        if len(self.sigmas) != len(self.model.params) + 1:
            raise ValueError(
                f"sigmas must have {len(self.model.params) + 1} entries (Y0 counted), got {len(self.sigmas)}"
            )
        if any(not s >= 0 for s in self.sigmas):
            raise ValueError("parameter uncertainties must be >= 0")
        return self


class ModelEvidence(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: CurveModel
    reliability: float = Field(ge=0)
    log_reliability: float
    ockham: float = Field(gt=0)
    bracket_sum: float
    lambda_ranges: Tuple[Tuple[float, float], ...]
    param_names: Tuple[str, ...]
    param_sigmas: Tuple[float, ...]
    n_params: int = Field(ge=0)
    range_rule: str = "k2"

    @computed_field
    @property
    def kind(self) -> str:
        return self.model.kind.value


class ThetaPriorKind(str, Enum):
    GAUSSIAN_THETA = "gauss_theta"
    GAUSSIAN_RHO = "gauss_rho"
    BETA = "beta"
    UNIFORM = "uniform"
    POINT_MASS = "point_mass"


class ThetaPrior(BaseModel):
    """Prior over the gamma-dose fraction theta in [0, 1]"""

    model_config = ConfigDict(frozen=True)

    kind: ThetaPriorKind
    theta_hat: Optional[float] = None
    sigma_theta: Optional[float] = None
    rho_hat: Optional[float] = None
    sigma_rho: Optional[float] = None
    theta_min: float = 0.0
    theta_max: float = 1.0
    value: Optional[float] = None

    @model_validator(mode="before")
    @classmethod
    def _normalize_aliases(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        kind = data.get("kind")
        kind = kind.value if isinstance(kind, ThetaPriorKind) else kind
        if "sigma" in data:
            sigma = data.pop("sigma")
            target = "sigma_rho" if kind == ThetaPriorKind.GAUSSIAN_RHO.value else "sigma_theta"
            data.setdefault(target, sigma)
        if "range" in data:
            data["theta_min"], data["theta_max"] = data.pop("range")
        if kind == ThetaPriorKind.GAUSSIAN_RHO.value and data.get("rho_hat") is None and data.get("theta_hat"):
            data["rho_hat"] = 1.0 / data["theta_hat"] - 1.0
        if kind == ThetaPriorKind.POINT_MASS.value and data.get("value") is None:
            data["value"] = data.get("theta_hat")
        return data

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "ThetaPrior":
        kind = self.kind
        if kind == ThetaPriorKind.GAUSSIAN_THETA:
            if self.theta_hat is None or self.sigma_theta is None or not self.sigma_theta > 0:
                raise ValueError("gauss_theta needs theta_hat and sigma_theta > 0")
        elif kind == ThetaPriorKind.GAUSSIAN_RHO:
            if self.rho_hat is None or self.sigma_rho is None or not self.sigma_rho > 0:
                raise ValueError("gauss_rho needs rho_hat (or theta_hat) and sigma_rho > 0")
        elif kind == ThetaPriorKind.UNIFORM:
            if not 0.0 <= self.theta_min <= self.theta_max <= 1.0:
                raise ValueError("uniform prior needs 0 <= theta_min <= theta_max <= 1")
        elif kind == ThetaPriorKind.POINT_MASS:
            if self.value is None or not 0.0 <= self.value <= 1.0:
                raise ValueError("point_mass prior needs a value in [0, 1]")
        return self

    @property
    def is_point_mass(self) -> bool:
        if self.kind == ThetaPriorKind.POINT_MASS:
            return True
        return self.kind == ThetaPriorKind.UNIFORM and self.theta_min == self.theta_max

    @property
    def point_value(self) -> float:
        return self.value if self.kind == ThetaPriorKind.POINT_MASS else self.theta_min

    @classmethod
    def point_mass(cls, theta: float) -> "ThetaPrior":
        return cls(kind=ThetaPriorKind.POINT_MASS, value=theta)


class ParamPriorKind(str, Enum):
    GAMMA = "gamma"
    GAUSSIAN = "gaussian"
    POINT_MASS = "point_mass"


class ParamPrior(BaseModel):
    """Prior over one calibration parameter: Gamma(k, z) with rate z, Gaussian, or a point mass"""

    model_config = ConfigDict(frozen=True)

    kind: ParamPriorKind
    k: Optional[float] = None
    z: Optional[float] = None
    mean: Optional[float] = None
    sd: Optional[float] = None
    value: Optional[float] = None

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "ParamPrior":
        if self.kind == ParamPriorKind.GAMMA:
            if self.k is None or self.z is None or not (self.k > 0 and self.z > 0):
                raise ValueError("gamma prior needs k > 0 and z > 0")
        elif self.kind == ParamPriorKind.GAUSSIAN:
            if self.mean is None or self.sd is None or not self.sd > 0:
                raise ValueError("gaussian prior needs mean and sd > 0")
        elif self.value is None or not math.isfinite(self.value):
            raise ValueError("point_mass prior needs a finite value")
        return self

    @property
    def expected(self) -> float:
        if self.kind == ParamPriorKind.GAMMA:
            return self.k / self.z
        if self.kind == ParamPriorKind.GAUSSIAN:
            return self.mean
        return self.value

    @classmethod
    def point_mass(cls, value: float) -> "ParamPrior":
        return cls(kind=ParamPriorKind.POINT_MASS, value=value)


class Casework(BaseModel):
    """Observed casework sample: w scored cells with u aberrations"""

    model_config = ConfigDict(frozen=True)

    cells: int = Field(ge=1)
    aberrations: int = Field(ge=0)
    sigma_yf: Optional[float] = Field(None, ge=0)

    @computed_field
    @property
    def y_f(self) -> float:
        return self.aberrations / self.cells


class DoseMethod(str, Enum):
    CLASSICAL = "classical"
    QUASI = "quasi"
    SIMPLIFIED = "simplified"
    FULL = "full"
    GENERALIZED = "generalized"


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    d_max: Optional[float] = Field(None, gt=0)
    points: Optional[int] = Field(None, ge=3)


class MonteCarloSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_samples: int = Field(100_000, ge=1)
    seed: Optional[int] = None
    batch_size: Optional[int] = Field(None, ge=1)


class DosePosterior(BaseModel):
    """Posterior density of one dose component sampled on a uniform grid"""

    model_config = ConfigDict(frozen=True)

    quantity: str
    method: DoseMethod
    dose: Tuple[float, ...]
    density: Tuple[float, ...]
    peak: float
    peak_at_boundary: bool = False
    sigma: Optional[float] = None
    normalization: float = Field(gt=0)
    spike: bool = False
    diagnostics: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_grid(self) -> "DosePosterior":
        if len(self.dose) != len(self.density) or len(self.dose) < 2:
            raise ValueError("dose grid and density must have equal length >= 2")
        if any(b <= a for a, b in zip(self.dose, self.dose[1:])):
            raise ValueError("dose grid must be strictly increasing")
        if any(not d >= 0 for d in self.density):
            raise ValueError("densities must be >= 0")
        return self

    def normalized_density(self) -> np.ndarray:
        return np.asarray(self.density) / self.normalization


class DoseSplit(NamedTuple):
    d_gamma: float
    d_neutron: float


class ParameterSigmas(BaseModel):
    """Uncertainties of the classical-method inputs (alpha, beta, gamma, y_f, Y0, theta)"""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(0.0, ge=0)
    beta: float = Field(0.0, ge=0)
    gamma: float = Field(0.0, ge=0)
    y_f: float = Field(0.0, ge=0)
    y0: float = Field(0.0, ge=0)
    theta: float = Field(0.0, ge=0)


class DoseMapKind(str, Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    SATURATED = "saturated"


class DoseMap(BaseModel):
    """Damage count to absorbed dose: const*u, sum c_k u^k, or d_sat*(1 - exp(-const*u/d_sat))"""

    model_config = ConfigDict(frozen=True)

    kind: DoseMapKind = DoseMapKind.LINEAR
    const: float = Field(0.012, gt=0)
    coefficients: Tuple[float, ...] = ()
    d_sat: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "DoseMap":
        if self.kind == DoseMapKind.POLYNOMIAL and not self.coefficients:
            raise ValueError("polynomial dose map needs coefficients c1..cn")
        if self.kind == DoseMapKind.SATURATED and self.d_sat is None:
            raise ValueError("saturated dose map needs d_sat")
        return self


def _default_neutron_curve() -> CurveModel:
    return CurveModel(kind=CurveKind.LINEAR_NEUTRON, params=(0.832,), y0=0.0005)


def _default_gamma_curve() -> CurveModel:
    return CurveModel(kind=CurveKind.LINEAR_QUADRATIC_GAMMA, params=(0.0164, 0.0492), y0=0.0005)


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    cells: int = Field(ge=1)
    target_yf: float
    repetitions: int = Field(ge=1)
    theta: Union[ThetaPrior, float] = 0.5
    dose_map: DoseMap = Field(default_factory=DoseMap)
    neutron_curve: CurveModel = Field(default_factory=_default_neutron_curve)
    gamma_curve: CurveModel = Field(default_factory=_default_gamma_curve)
    seed: Optional[int] = None

    @field_validator("theta")
    @classmethod
    def _check_theta(cls, value: Union[ThetaPrior, float]) -> Union[ThetaPrior, float]:
        if isinstance(value, float) and not 0.0 <= value <= 1.0:
            raise ValueError("exact theta must lie in [0, 1]")
        return value

    @model_validator(mode="after")
    def _check_target(self) -> "SimConfig":
        if not self.target_yf > self.gamma_curve.y0:
            raise ValueError(f"target_yf must exceed the background Y0={self.gamma_curve.y0}")
        return self


class SimResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    repetitions: int
    mean_dn: float
    mean_dg: float
    sd_dn: float = Field(ge=0)
    sd_dg: float = Field(ge=0)
    sem_dn: float = Field(ge=0)
    sem_dg: float = Field(ge=0)
    mean_un: float
    mean_ug: float
    per_repetition_un: Tuple[int, ...]
    per_repetition_ug: Tuple[int, ...]
    per_repetition_dn: Tuple[float, ...]
    per_repetition_dg: Tuple[float, ...]
    damage_table: Tuple[Tuple[int, int], ...]
    damage_histogram: Tuple[int, ...]
    seed: int


class DamageStatistics(BaseModel):
    model_config = ConfigDict(frozen=True)

    cells: int
    total_damage: int
    mean: float
    variance: float
    dispersion: Optional[float] = None
    dispersion_defined: bool = True


class RunManifest(BaseModel):
    subcommand: str
    inputs: Dict[str, str] = Field(default_factory=dict)
    options: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    version: str
    timestamp: datetime
