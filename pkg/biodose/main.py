"""
Command-line front end: fit, select, dose and simulate.

    python -m biodose.main fit --data calibration.csv --kind linear_quadratic_gamma --engine robust
    python -m biodose.main select --data calibration.csv --kinds linear_neutron,linear_quadratic_gamma
    python -m biodose.main dose --curve curve.json --case "w=1000,u=33" --grid 5,201 --method simplified --prior prior.json
    python -m biodose.main simulate --config sim.json --cells-csv cells.csv
    python -m biodose.main --reference-fixtures --out walkthrough/

Calibration CSV schema (header required): dn,dg,e,sigma0[,cells,aberrations]. One row per point:
neutron dose (Gy), gamma dose (Gy), aberration frequency and its uncertainty (aberrations/cell).
sigma0 may be left out when cells and aberrations are given. Multi-radiation data adds d1..dR columns.

Exit codes: 0 success, 1 validation or usage error, 2 numerical failure.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional
import logging
import sys

from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, CliApp, CliSubCommand, SettingsConfigDict, SettingsError

from . import __version__, configure_logging
from .config import settings
from .curves import param_names
from .errors import BiodoseError, ConvergenceError, UsageError
from .fitting import fit_curve, resolve_template, uncertainties_cramer_rao, uncertainties_hessian
from .models.schemas import (
    Casework,
    CurveKind,
    CurveModel,
    DoseMethod,
    FitEngine,
    FitOptions,
    GridSpec,
    MonteCarloSpec,
    ParameterSigmas,
    ParamPrior,
    SimConfig,
    ThetaPrior,
    ThetaPriorKind,
)
from .selection import rank_models
from .services import damage_statistics, default_sigma_yf, get_dose_estimator, get_simulator
from .utils.data_io import (
    read_calibration_csv,
    read_json_as,
    read_model_json,
    write_damage_csv,
    write_json,
    write_posterior_csv,
    write_residual_csv,
)
from .utils.run_manifest import build_manifest, with_manifest

logger = logging.getLogger(__name__)

MIXED_REFERENCE_CURVE = CurveModel(kind=CurveKind.COMBINED_MIXED, params=(0.832, 0.0164, 0.0492), y0=0.0005)
MIXED_REFERENCE_YF = 1.2
CASEWORK_REFERENCE_CURVE = CurveModel(kind=CurveKind.COMBINED_MIXED, params=(0.354, 0.0119, 0.0557), y0=0.0005)
REFERENCE_CASE = Casework(cells=1000, aberrations=33)
REFERENCE_THETA_PRIOR = ThetaPrior(kind=ThetaPriorKind.GAUSSIAN_RHO, theta_hat=0.92, sigma_rho=0.05)


class FitCLI(BaseModel):
    """Fit a calibration curve to a calibration CSV (dn,dg,e,sigma0[,cells,aberrations])."""

    data: Path = Field(description="Calibration CSV")
    kind: CurveKind = Field(CurveKind.LINEAR_QUADRATIC_GAMMA, description="Curve kind")
    template: Optional[Path] = Field(None, description="CurveModel JSON fixing structure (polynomial, multi-radiation, generalized)")
    engine: FitEngine = FitEngine.ROBUST
    phi: Optional[float] = Field(None, description="Outlier probability of the mixture engine")
    y0_fixed: bool = Field(False, description="Hold Y0 at the template value")
    solver: str = "auto"
    tol: float = settings.fit_tol
    max_iter: int = settings.fit_max_iter
    out: Path = Path("biodose_out")

    def cli_cmd(self) -> None:
        if self.engine == FitEngine.POISSON and self.kind != CurveKind.LINEAR_NEUTRON:
            raise UsageError(f"the poisson engine fits linear_neutron only, not {self.kind.value}", "fit")
        data = read_calibration_csv(self.data)
        template = read_model_json(self.template, CurveModel) if self.template else resolve_template(self.kind)
        if template.kind != self.kind:
            raise UsageError(f"template kind {template.kind.value} does not match --kind {self.kind.value}", "fit")
        options = FitOptions(tol=self.tol, max_iter=self.max_iter, y0_free=not self.y0_fixed, solver=self.solver)
        result = fit_curve(data, template, self.engine, phi=self.phi, options=options)

        hessian = cramer_rao = None
        if result.converged and result.engine != FitEngine.POISSON:
            try:
                hessian = list(uncertainties_hessian(data, result))
            except BiodoseError as e:
                logger.warning(f"Hessian uncertainties unavailable: {e.message}")
        if result.converged:
            try:
                cramer_rao = list(uncertainties_cramer_rao(data, result))
            except BiodoseError as e:
                logger.warning(f"Cramer-Rao bounds unavailable: {e.message}")

        manifest = build_manifest("fit", {"data": self.data, "template": self.template}, self.model_dump())
        payload = {
            "fit": result.model_dump(mode="json"),
            "param_names": param_names(result.model),
            "sigmas_hessian": hessian,
            "sigmas_cramer_rao": cramer_rao,
        }
        write_json(self.out / "fit.json", with_manifest(payload, manifest))
        write_residual_csv(self.out / "residuals.csv", data, result)
        if not result.converged:
            raise ConvergenceError(
                f"{result.engine.value} fit did not converge in {result.iterations} iterations; last iterate written to {self.out}",
                "fit",
            )


class SelectCLI(BaseModel):
    """Rank candidate curves by reliability P(M|D) with Ockham factors."""

    data: Path = Field(description="Calibration CSV")
    kinds: List[CurveKind] = Field(default_factory=list, description="Candidate kinds, comma separated")
    templates: List[Path] = Field(default_factory=list, description="Extra candidates as CurveModel JSON files")
    rule: str = Field("k2", description="Range rule: k2 or arbitrary")
    k: Optional[float] = None
    engine: FitEngine = FitEngine.ROBUST
    out: Path = Path("biodose_out")

    def cli_cmd(self) -> None:
        candidates: List[Any] = list(self.kinds) + [read_model_json(p, CurveModel) for p in self.templates]
        if not candidates:
            raise UsageError("select needs at least one candidate kind", "select")
        data = read_calibration_csv(self.data)
        ranked, matrix = rank_models(data, candidates, self.engine, self.rule, self.k)
        manifest = build_manifest(
            "select", {"data": self.data, **{f"template_{i}": p for i, p in enumerate(self.templates)}}, self.model_dump()
        )
        payload = {"ranking": [e.model_dump(mode="json") for e in ranked], "preference_matrix": matrix}
        write_json(self.out / "selection.json", with_manifest(payload, manifest))


class DoseCLI(BaseModel):
    """Estimate absorbed doses after a mixed neutron and gamma exposure."""

    curve: Path = Field(description="CurveModel JSON (combined_mixed; multi_radiation_polynomial for generalized)")
    case: Optional[str] = Field(None, description="Casework sample as \"w=<cells>,u=<aberrations>\"")
    cells: Optional[int] = Field(None, description="Scored cells w (alternative to --case)")
    aberrations: Optional[int] = Field(None, description="Observed aberrations u (alternative to --case)")
    method: DoseMethod = DoseMethod.SIMPLIFIED
    theta: Optional[float] = Field(None, description="Exactly known gamma fraction")
    prior: Optional[Path] = Field(None, description="ThetaPrior JSON (a JSON list for generalized)")
    param_priors: Optional[Path] = Field(None, description="ParamPrior JSON: object y0/alpha/beta/gamma or list for generalized")
    sigmas: Optional[Path] = Field(None, description="ParameterSigmas JSON for the classical uncertainty")
    sigma_yf: Optional[float] = None
    combine: str = "linear"
    mode: str = Field("quadrature", description="Simplified method integration: quadrature or monte_carlo")
    jacobian: bool = True
    samples: int = settings.mc_samples
    seed: Optional[int] = None
    grid: Optional[str] = Field(None, description="Dose grid as \"D_max,points\"")
    d_max: Optional[float] = None
    points: Optional[int] = None
    out: Path = Path("biodose_out")

    def _theta_prior(self) -> ThetaPrior:
        if self.theta is not None and self.prior is not None:
            raise UsageError("--theta and --prior are mutually exclusive", "dose")
        if self.theta is not None:
            return ThetaPrior.point_mass(self.theta)
        if self.prior is None:
            raise UsageError("dose needs --theta or --prior", "dose")
        return read_model_json(self.prior, ThetaPrior)

    def _casework(self) -> Casework:
        if self.case is None:
            if self.cells is None or self.aberrations is None:
                raise UsageError("dose needs --case \"w=<cells>,u=<aberrations>\"", "dose")
            return Casework(cells=self.cells, aberrations=self.aberrations, sigma_yf=self.sigma_yf)
        if self.cells is not None or self.aberrations is not None:
            raise UsageError("--case and --cells/--aberrations are mutually exclusive", "dose")
        counts: Dict[str, int] = {}
        for item in self.case.split(","):
            key, sep, value = item.partition("=")
            key = key.strip().lower()
            if not sep or key not in ("w", "u") or key in counts:
                raise UsageError(f"--case expects \"w=<cells>,u=<aberrations>\", got {self.case!r}", "dose")
            try:
                counts[key] = int(value.strip())
            except ValueError:
                raise UsageError(f"--case {key} must be an integer, got {value.strip()!r}", "dose")
        if set(counts) != {"w", "u"}:
            raise UsageError(f"--case needs both w and u, got {self.case!r}", "dose")
        return Casework(cells=counts["w"], aberrations=counts["u"], sigma_yf=self.sigma_yf)

    def _grid(self) -> GridSpec:
        if self.grid is None:
            return GridSpec(d_max=self.d_max, points=self.points)
        if self.d_max is not None or self.points is not None:
            raise UsageError("--grid and --d-max/--points are mutually exclusive", "dose")
        parts = [p.strip() for p in self.grid.split(",")]
        if len(parts) != 2:
            raise UsageError(f"--grid expects \"D_max,points\", got {self.grid!r}", "dose")
        try:
            return GridSpec(d_max=float(parts[0]), points=int(parts[1]))
        except ValueError:
            raise UsageError(f"--grid expects a dose and an integer point count, got {self.grid!r}", "dose")

    def cli_cmd(self) -> None:
        seed = settings.default_seed if self.seed is None else self.seed
        case = self._casework()
        curve = read_model_json(self.curve, CurveModel)
        grid = self._grid()
        mc = MonteCarloSpec(n_samples=self.samples, seed=seed)
        estimator = get_dose_estimator()
        manifest = build_manifest(
            "dose",
            {"curve": self.curve, "prior": self.prior, "param_priors": self.param_priors, "sigmas": self.sigmas},
            self.model_dump(),
            seed,
        )

        if self.method == DoseMethod.GENERALIZED:
            if self.theta is not None or self.prior is None:
                raise UsageError("generalized estimation needs --prior with one theta prior per radiation", "dose")
            priors = read_json_as(self.prior, List[ThetaPrior])
            param_priors = read_json_as(self.param_priors, List[ParamPrior]) if self.param_priors else None
            posteriors = estimator.generalized_bayesian(curve, case, priors, param_priors, mc, grid)
            self._write_posteriors(posteriors, manifest)
            return

        prior = self._theta_prior()
        if self.method == DoseMethod.CLASSICAL:
            if not prior.is_point_mass:
                raise UsageError("the classical method needs an exact --theta", "dose")
            split = estimator.classical_split(curve, case.y_f, prior.point_value)
            sigmas = read_model_json(self.sigmas, ParameterSigmas) if self.sigmas else ParameterSigmas()
            if sigmas.y_f == 0:
                sigmas = sigmas.model_copy(update={"y_f": case.sigma_yf if case.sigma_yf is not None else default_sigma_yf(case)})
            sigma_dg, sigma_dn = estimator.classical_uncertainty(curve, case.y_f, prior.point_value, sigmas, self.combine)
            payload = {
                "method": self.method.value,
                "y_f": case.y_f,
                "theta": prior.point_value,
                "d_gamma": split.d_gamma,
                "d_neutron": split.d_neutron,
                "sigma_d_gamma": sigma_dg,
                "sigma_d_neutron": sigma_dn,
            }
            write_json(self.out / "dose.json", with_manifest(payload, manifest))
            return

        if self.method == DoseMethod.QUASI:
            posteriors = estimator.quasi_bayesian(curve, case.y_f, prior, grid, self.jacobian)
        elif self.method == DoseMethod.SIMPLIFIED:
            posteriors = estimator.simplified_bayesian(curve, case, prior, grid, self.mode, mc)
        else:
            if self.param_priors:
                param_priors = read_json_as(self.param_priors, Dict[str, ParamPrior])
            else:
                alpha, beta, gamma = curve.params
                values = {"y0": curve.y0, "alpha": alpha, "beta": beta, "gamma": gamma}
                param_priors = {name: ParamPrior.point_mass(v) for name, v in values.items()}
            posteriors = estimator.full_bayesian(param_priors, case, prior, mc, grid)
        self._write_posteriors(list(posteriors), manifest)

    def _write_posteriors(self, posteriors, manifest) -> None:
        payload = {"method": self.method.value, "posteriors": [p.model_dump(mode="json", exclude={"dose", "density"}) for p in posteriors]}
        write_json(self.out / "dose.json", with_manifest(payload, manifest))
        for posterior in posteriors:
            write_posterior_csv(self.out / f"posterior_{posterior.quantity}.csv", posterior)


class SimulateCLI(BaseModel):
    """Simulate cell irradiation until the target aberration frequency is reached."""

    config: Path = Field(description="SimConfig JSON")
    seed: Optional[int] = Field(None, description="Overrides the config seed")
    cells_csv: Optional[Path] = Field(None, description="Per-cell damage CSV cell,u_n,u_g of the last repetition")
    out: Path = Path("biodose_out")

    def cli_cmd(self) -> None:
        config = read_model_json(self.config, SimConfig)
        seed = self.seed if self.seed is not None else config.seed
        seed = settings.default_seed if seed is None else seed
        config = config.model_copy(update={"seed": seed})
        result = get_simulator().simulate(config)
        statistics = damage_statistics(result)
        manifest = build_manifest("simulate", {"config": self.config, "cells_csv": self.cells_csv}, self.model_dump(), seed)
        payload = {
            "result": result.model_dump(mode="json", exclude={"damage_table"}),
            "damage_statistics": statistics.model_dump(mode="json"),
        }
        write_json(self.out / "simulation.json", with_manifest(payload, manifest))
        if self.cells_csv:
            write_damage_csv(self.cells_csv, result)


def write_reference_fixtures(out: Path) -> None:
    """Classical split, quasi-Bayesian and simplified Bayesian walkthroughs of the reference curves"""
    estimator = get_dose_estimator()
    split = estimator.classical_split(MIXED_REFERENCE_CURVE, MIXED_REFERENCE_YF, 0.5)
    sweep = [
        {"theta": t / 10, **estimator.classical_split(MIXED_REFERENCE_CURVE, MIXED_REFERENCE_YF, t / 10)._asdict()} for t in range(0, 11)
    ]
    manifest = build_manifest("reference-fixtures", {}, {"out": out})
    write_json(
        out / "classical.json",
        with_manifest({"curve": MIXED_REFERENCE_CURVE.model_dump(mode="json"), "y_f": MIXED_REFERENCE_YF, "theta_0.5": split._asdict(), "sweep": sweep}, manifest),
    )

    beta = ThetaPrior(kind=ThetaPriorKind.BETA)
    for posterior in estimator.quasi_bayesian(MIXED_REFERENCE_CURVE, MIXED_REFERENCE_YF, beta, jacobian=False):
        write_posterior_csv(out / f"quasi_{posterior.quantity}.csv", posterior)

    simplified = estimator.simplified_bayesian(CASEWORK_REFERENCE_CURVE, REFERENCE_CASE, REFERENCE_THETA_PRIOR)
    for posterior in simplified:
        write_posterior_csv(out / f"simplified_{posterior.quantity}.csv", posterior)
    write_json(
        out / "simplified.json",
        with_manifest({"posteriors": [p.model_dump(mode="json", exclude={"dose", "density"}) for p in simplified]}, manifest),
    )


class BiodoseCLI(BaseSettings):
    """Radiation biodosimetry: calibration fits, model selection, dose estimation and simulation."""

    model_config = SettingsConfigDict(
        cli_prog_name="biodose",
        cli_kebab_case=True,
        cli_implicit_flags=True,
        cli_exit_on_error=False,
        env_prefix="BIODOSE_CLI_",
    )

    reference_fixtures: bool = Field(False, description="Write the reference walkthrough runs to --out")
    out: Path = Path("biodose_fixtures")

    fit: CliSubCommand[FitCLI]
    select: CliSubCommand[SelectCLI]
    dose: CliSubCommand[DoseCLI]
    simulate: CliSubCommand[SimulateCLI]

    def cli_cmd(self) -> None:
        if self.reference_fixtures:
            write_reference_fixtures(self.out)
            return
        CliApp.run_subcommand(self)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the CLI and map failures to exit codes

    Args:
        argv: Arguments without the program name; sys.argv[1:] when omitted

    Returns:
        int: 0 success, 1 validation or usage error, 2 numerical failure
    """
    configure_logging()
    args = sys.argv[1:] if argv is None else list(argv)
    logger.info(f"biodose {__version__}: {' '.join(args)}")
    try:
        CliApp.run(BiodoseCLI, cli_args=args)
    except BiodoseError as e:
        logger.error(f"{e.component}: {e.message}")
        return e.exit_code
    except (ValidationError, SettingsError) as e:
        logger.error(f"Invalid input: {e}")
        return 1
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
