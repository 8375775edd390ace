"""
Dose estimation after mixed-field exposure: the classical split, the quasi-Bayesian
transformation of a theta prior, and the simplified, full and generalized Bayesian posteriors.

Doses of a mixed exposure are tied together by theta = D_g / (D_g + D_n). For a gamma dose D on
the grid the neutron dose is D (1 - theta) / theta, for a neutron dose D the gamma dose is
D theta / (1 - theta). Poisson likelihoods are evaluated in log space relative to their maximum
u ln u - u, so large u never overflows.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.integrate import quad_vec, trapezoid
from scipy.optimize import brentq
from scipy.special import xlogy

from ..config import settings
from ..curves import get_curve_form
from ..errors import CurvatureError, CurveError, InfeasibleError, InputError, NumericalError
from ..models.schemas import (
    Casework,
    CurveKind,
    CurveModel,
    DoseMethod,
    DosePosterior,
    DoseSplit,
    GridSpec,
    MonteCarloSpec,
    ParameterSigmas,
    ParamPrior,
    ThetaPrior,
    ThetaPriorKind,
)
from ..priors import density_array, mode, sample_many, sample_param
from ..utils.numerics import golden_refine

logger = logging.getLogger(__name__)

DensityFn = Callable[[np.ndarray], np.ndarray]

PARAM_ORDER = ("y0", "alpha", "beta", "gamma")


def _coefficients(curve: CurveModel) -> Tuple[float, float, float, float]:
    if curve.kind != CurveKind.COMBINED_MIXED:
        raise CurveError(f"mixed-field dose estimation needs a combined_mixed curve, got {curve.kind.value}", "dose")
    alpha, beta, gamma = curve.params
    return alpha, beta, gamma, curve.y0


def _quadratic_root(linear: float, quadratic: float, excess: float) -> float:
    """Non-negative D with linear D + quadratic D^2 = excess >= 0"""
    if excess == 0:
        return 0.0
    discriminant = linear**2 + 4.0 * quadratic * excess
    if discriminant < 0:
        raise InfeasibleError("no real dose reproduces the observed frequency", "dose")
    root = math.sqrt(discriminant)
    if linear >= 0:
        denominator = root + linear
        if denominator == 0:
            raise InfeasibleError("curve has no dose response (zero slope and curvature)", "dose")
        return 2.0 * excess / denominator
    if quadratic == 0:
        raise InfeasibleError("decreasing linear response cannot reach the observed frequency", "dose")
    return (root - linear) / (2.0 * quadratic)


def _log_likelihood_ratio(case: Casework, y: np.ndarray) -> np.ndarray:
    """ln L(y) - max_y ln L for Poisson counts u in w cells; -inf where y <= 0"""
    u, w = float(case.aberrations), float(case.cells)
    expected = w * np.where(y > 0, y, 1.0)
    ratio = xlogy(u, expected) - expected - (xlogy(u, u) - u)
    return np.where(y > 0, ratio, -np.inf)


def _gamma_frequency(alpha, beta, gamma, y0, theta, dose):
    """Y at gamma dose D with the neutron dose implied by theta (broadcasting)"""
    ratio = (1.0 - theta) / theta
    return y0 + alpha * ratio * dose + beta * dose + gamma * dose**2


def _neutron_frequency(alpha, beta, gamma, y0, theta, dose):
    ratio = theta / (1.0 - theta)
    gamma_dose = ratio * dose
    return y0 + alpha * dose + beta * gamma_dose + gamma * gamma_dose**2


def default_sigma_yf(case: Casework) -> float:
    """Poisson counting uncertainty sqrt(u)/w of the observed frequency"""
    return math.sqrt(case.aberrations) / case.cells


def posterior_sigma(posterior: DosePosterior) -> float:
    """
    sigma_D >= 1 / sqrt(|d^2 ln P / dD^2|) at the grid argmax, by central differences on the grid

    Raises:
        CurvatureError: Peak on the grid boundary, vanishing neighbours or non-negative curvature
    """
    density = np.asarray(posterior.density)
    dose = np.asarray(posterior.dose)
    index = int(np.argmax(density))
    if index == 0 or index == len(density) - 1:
        raise CurvatureError("posterior peak lies on the grid boundary", "posterior_sigma")
    window = density[index - 1:index + 2]
    if np.any(window <= 0):
        raise CurvatureError("posterior vanishes next to its peak", "posterior_sigma")
    step = 0.5 * (dose[index + 1] - dose[index - 1])
    logs = np.log(window)
    curvature = (logs[2] - 2.0 * logs[1] + logs[0]) / step**2
    if not curvature < 0:
        raise CurvatureError(f"log-posterior curvature {curvature:.3e} is not negative at the peak", "posterior_sigma")
    return 1.0 / math.sqrt(-curvature)


class DoseEstimator:
    """
    Dose estimation methods with grid, quadrature and Monte Carlo defaults taken from settings
    """

    def __init__(
        self,
        grid_points: Optional[int] = None,
        grid_margin: Optional[float] = None,
        theta_epsilon: Optional[float] = None,
        quad_epsrel: Optional[float] = None,
        mc_batch_size: Optional[int] = None,
        min_mc_samples: Optional[int] = None,
        simplex_tolerance: Optional[float] = None,
        simplex_warn_rejection: Optional[float] = None,
    ):
        self.grid_points = grid_points or settings.grid_points
        self.grid_margin = grid_margin or settings.grid_margin
        self.theta_epsilon = theta_epsilon or settings.theta_epsilon
        self.quad_epsrel = quad_epsrel or settings.quad_epsrel
        self.mc_batch_size = mc_batch_size or settings.mc_batch_size
        self.min_mc_samples = settings.min_mc_samples if min_mc_samples is None else min_mc_samples
        self.simplex_tolerance = simplex_tolerance or settings.simplex_tolerance
        self.simplex_warn_rejection = simplex_warn_rejection or settings.simplex_warn_rejection
        logger.info("Dose estimator initialized")

    # ------------------------------------------------------------------ classical

    def classical_split(self, curve: CurveModel, y_f: float, theta: float) -> DoseSplit:
        """
        Closed-form doses for an exactly known theta

        Args:
            curve: combined_mixed calibration curve
            y_f: Observed aberration frequency, >= Y0
            theta: Gamma fraction in [0, 1]; 1 is pure gamma, 0 pure neutron

        Returns:
            DoseSplit: (D_g, D_n) in Gy
        """
        alpha, beta, gamma, y0 = _coefficients(curve)
        if not 0.0 <= theta <= 1.0:
            raise InputError(f"theta must lie in [0, 1], got {theta}", "classical_split")
        if y_f < y0:
            raise InputError(f"observed frequency y_f={y_f} is below the background Y0={y0}", "classical_split")
        excess = y_f - y0
        if theta == 0.0:
            if not alpha > 0:
                raise InfeasibleError("pure neutron exposure needs alpha > 0", "classical_split")
            return DoseSplit(0.0, excess / alpha)
        if theta == 1.0:
            return DoseSplit(_quadratic_root(beta, gamma, excess), 0.0)
        ratio = (1.0 - theta) / theta
        d_gamma = _quadratic_root(alpha * ratio + beta, gamma, excess)
        return DoseSplit(d_gamma, d_gamma * ratio)

    def classical_uncertainty(
        self,
        curve: CurveModel,
        y_f: float,
        theta: float,
        sigmas: ParameterSigmas,
        combine: str = "linear",
    ) -> Tuple[float, float]:
        """
        Propagate the uncertainties of (alpha, beta, gamma, y_f, Y0, theta) into (sigma_Dg, sigma_Dn)

        Partials come from central differences; combine="linear" sums |dD/de| de (never below the
        root-sum-square), combine="quadrature" returns the root-sum-square instead.
        """
        if combine not in ("linear", "quadrature"):
            raise InputError(f"combine must be linear or quadrature, got {combine!r}", "classical_uncertainty")
        alpha, beta, gamma, y0 = _coefficients(curve)
        values = np.array([alpha, beta, gamma, y_f, y0, theta])
        deltas = np.array([sigmas.alpha, sigmas.beta, sigmas.gamma, sigmas.y_f, sigmas.y0, sigmas.theta])

        def split(point: np.ndarray) -> np.ndarray:
            a, b, g, yf, background, t = point
            model = curve.model_copy(update={"params": (a, b, g), "y0": background})
            return np.array(self.classical_split(model, yf, t))

        contributions = []
        for j in np.flatnonzero(deltas > 0):
            step = 1e-6 * max(abs(values[j]), 1e-3)
            upper, lower = values.copy(), values.copy()
            upper[j] += step
            lower[j] -= step
            try:
                partial = (split(upper) - split(lower)) / (2.0 * step)
            except (InputError, NumericalError) as e:
                raise InfeasibleError(
                    f"partial derivative diverges at the boundary for parameter {j}: {e.message}", "classical_uncertainty", e
                )
            contributions.append(np.abs(partial) * deltas[j])
        if not contributions:
            return 0.0, 0.0
        stacked = np.vstack(contributions)
        total = stacked.sum(axis=0) if combine == "linear" else np.sqrt((stacked**2).sum(axis=0))
        return float(total[0]), float(total[1])

    # ------------------------------------------------------------------ grids

    def _reach(self, response: Callable[[float], float], target: float) -> float:
        """Dose where an increasing response first reaches target"""
        if response(0.0) >= target:
            return 1.0
        high = 1.0
        for _ in range(200):
            if response(high) >= target:
                return brentq(lambda d: response(d) - target, 0.0, high)
            high *= 2.0
        logger.warning("Calibration response never reaches the grid target; using a 1 Gy grid")
        return 1.0

    def _grid(self, spec: Optional[GridSpec], reach: Callable[[], float]) -> np.ndarray:
        points = (spec.points if spec and spec.points else None) or self.grid_points
        d_max = spec.d_max if spec and spec.d_max else reach()
        return np.linspace(0.0, d_max, points)

    def _grid_target(self, y0: float, y_f: float, case: Optional[Casework] = None) -> float:
        target = self.grid_margin * y_f
        if case is not None:
            target = max(target, y0 + self.grid_margin / case.cells)
        return target

    def default_grid(self, curve: CurveModel, y_f: float, quantity: str, case: Optional[Casework] = None) -> np.ndarray:
        """[0, D_max] with D_max where the pure-component curve reaches 3 y_f"""
        alpha, beta, gamma, y0 = _coefficients(curve)
        target = self._grid_target(y0, y_f, case)
        if quantity == "gamma":
            response = lambda d: y0 + beta * d + gamma * d**2
        else:
            response = lambda d: y0 + alpha * d
        return np.linspace(0.0, self._reach(response, target), self.grid_points)

    # ------------------------------------------------------------------ posterior assembly

    def _posterior(
        self,
        quantity: str,
        method: DoseMethod,
        grid: np.ndarray,
        density: np.ndarray,
        density_fn: Optional[DensityFn] = None,
        diagnostics: Optional[Dict[str, float]] = None,
    ) -> DosePosterior:
        density = np.nan_to_num(np.asarray(density, dtype=float), nan=0.0, posinf=0.0)
        normalization = float(trapezoid(density, grid))
        if not normalization > 0:
            raise InfeasibleError(f"{method.value} posterior of the {quantity} dose vanishes on the whole grid", "dose")
        index = int(np.argmax(density))
        at_boundary = index in (0, len(grid) - 1)
        peak = float(grid[index])
        if not at_boundary and density_fn is not None:
            peak = golden_refine(
                lambda d: float(density_fn(np.array([d]))[0]),
                float(grid[index - 1]),
                peak,
                float(grid[index + 1]),
                tol=1e-6,
            )
        posterior = DosePosterior(
            quantity=quantity,
            method=method,
            dose=tuple(float(d) for d in grid),
            density=tuple(float(p) for p in density),
            peak=peak,
            peak_at_boundary=at_boundary,
            normalization=normalization,
            diagnostics=diagnostics or {},
        )
        try:
            sigma = posterior_sigma(posterior)
        except CurvatureError as e:
            logger.debug(f"No curvature sigma for the {quantity} posterior: {e.message}")
            sigma = None
        logger.info(f"{method.value} {quantity} posterior: peak={peak:.6g} Gy, sigma={sigma}, boundary={at_boundary}")
        return posterior.model_copy(update={"sigma": sigma})

    def _spike(self, quantity: str, method: DoseMethod, grid: np.ndarray, dose: float) -> DosePosterior:
        """Delta posterior: 1/step at the grid point nearest dose"""
        if not grid[0] <= dose <= grid[-1]:
            raise InfeasibleError(f"{quantity} dose {dose:.6g} Gy lies outside the grid", "dose")
        index = int(np.argmin(np.abs(grid - dose)))
        step = grid[1] - grid[0]
        density = np.zeros_like(grid)
        density[index] = 1.0 / step
        logger.info(f"{method.value} {quantity} posterior collapses to a spike at {dose:.6g} Gy")
        return DosePosterior(
            quantity=quantity,
            method=method,
            dose=tuple(float(d) for d in grid),
            density=tuple(float(p) for p in density),
            peak=float(dose),
            peak_at_boundary=index in (0, len(grid) - 1),
            normalization=float(trapezoid(density, grid)),
            spike=True,
        )

    # ------------------------------------------------------------------ quasi-Bayesian

    def quasi_bayesian(
        self,
        curve: CurveModel,
        y_f: float,
        prior: ThetaPrior,
        grid: Optional[GridSpec] = None,
        jacobian: bool = True,
    ) -> Tuple[DosePosterior, DosePosterior]:
        """
        Transform a theta prior into dose densities P(D_x) = p(theta_x(D_x)) |theta_x'(D_x)|

        Args:
            curve: combined_mixed calibration curve
            y_f: Observed aberration frequency
            prior: Theta prior; a point mass gives spikes at the classical split
            grid: Optional grid override, applied to both doses
            jacobian: Multiply by |theta_x'(D_x)|; False keeps the bare p(theta_x(D_x))

        Returns:
            (gamma posterior, neutron posterior)
        """
        alpha, beta, gamma, y0 = _coefficients(curve)
        if not alpha > 0:
            raise CurveError("quasi-Bayesian transformation needs alpha > 0", "quasi_bayesian")
        if y_f < y0:
            raise InputError(f"observed frequency y_f={y_f} is below the background Y0={y0}", "quasi_bayesian")
        excess = y_f - y0
        gamma_grid = self._grid(grid, lambda: self.default_grid(curve, y_f, "gamma")[-1])
        neutron_grid = self._grid(grid, lambda: self.default_grid(curve, y_f, "neutron")[-1])

        if prior.is_point_mass:
            split = self.classical_split(curve, y_f, prior.point_value)
            return (
                self._spike("gamma", DoseMethod.QUASI, gamma_grid, split.d_gamma),
                self._spike("neutron", DoseMethod.QUASI, neutron_grid, split.d_neutron),
            )

        def theta_gamma(dose: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            neutron = (excess - beta * dose - gamma * dose**2) / alpha
            neutron_slope = -(beta + 2.0 * gamma * dose) / alpha
            total = dose + neutron
            with np.errstate(divide="ignore", invalid="ignore"):
                theta = dose / total
                slope = (neutron - dose * neutron_slope) / total**2
            return theta, slope

        def theta_neutron(dose: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            remaining = excess - alpha * dose
            with np.errstate(divide="ignore", invalid="ignore"):
                root = np.sqrt(np.where(remaining >= 0, beta**2 + 4.0 * gamma * remaining, np.nan))
                gamma_dose = 2.0 * remaining / (root + beta)
                gamma_slope = -alpha / (beta + 2.0 * gamma * gamma_dose)
                total = gamma_dose + dose
                theta = gamma_dose / total
                slope = (gamma_slope * dose - gamma_dose) / total**2
            return theta, slope

        def make_density(transform) -> DensityFn:
            def density(dose: np.ndarray) -> np.ndarray:
                theta, slope = transform(np.asarray(dose, dtype=float))
                feasible = np.isfinite(theta) & (theta > 0) & (theta < 1)
                safe = np.where(feasible, theta, 0.5)
                values = density_array(prior, safe)
                if jacobian:
                    values = values * np.abs(np.where(feasible, slope, 0.0))
                return np.where(feasible, values, 0.0)

            return density

        gamma_density = make_density(theta_gamma)
        neutron_density = make_density(theta_neutron)
        return (
            self._posterior("gamma", DoseMethod.QUASI, gamma_grid, gamma_density(gamma_grid), gamma_density),
            self._posterior("neutron", DoseMethod.QUASI, neutron_grid, neutron_density(neutron_grid), neutron_density),
        )

    # ------------------------------------------------------------------ simplified Bayesian

    def _exact_theta_posteriors(
        self, method: DoseMethod, curve: CurveModel, case: Casework, theta: float, gamma_grid, neutron_grid
    ) -> Tuple[DosePosterior, DosePosterior]:
        alpha, beta, gamma, y0 = _coefficients(curve)
        results = []
        for quantity, grid, frequency, inactive in (
            ("gamma", gamma_grid, _gamma_frequency, theta == 0.0),
            ("neutron", neutron_grid, _neutron_frequency, theta == 1.0),
        ):
            if inactive:
                results.append(self._spike(quantity, method, grid, 0.0))
                continue

            def density(dose: np.ndarray, frequency=frequency) -> np.ndarray:
                return np.exp(_log_likelihood_ratio(case, frequency(alpha, beta, gamma, y0, theta, dose)))

            results.append(self._posterior(quantity, method, grid, density(grid), density, {"theta": theta}))
        return results[0], results[1]

    def simplified_bayesian(
        self,
        curve: CurveModel,
        case: Casework,
        prior: ThetaPrior,
        grid: Optional[GridSpec] = None,
        mode_: str = "quadrature",
        mc: Optional[MonteCarloSpec] = None,
    ) -> Tuple[DosePosterior, DosePosterior]:
        """
        P(D_x) = integral over theta of L(D_x | theta) p(theta), with the Poisson likelihood of u
        aberrations in w cells

        Args:
            curve: combined_mixed calibration curve
            case: Casework counts
            prior: Theta prior; a point mass evaluates the exact-theta likelihood
            grid: Optional grid override
            mode_: "quadrature" (adaptive, on [eps, 1 - eps]) or "monte_carlo"
            mc: Sample count and seed of the Monte Carlo mode

        Returns:
            (gamma posterior, neutron posterior)
        """
        alpha, beta, gamma, y0 = _coefficients(curve)
        gamma_grid = self._grid(grid, lambda: self.default_grid(curve, case.y_f, "gamma", case)[-1])
        neutron_grid = self._grid(grid, lambda: self.default_grid(curve, case.y_f, "neutron", case)[-1])
        logger.info(f"Simplified Bayesian estimate for u={case.aberrations}, w={case.cells} ({mode_})")

        if prior.is_point_mass:
            return self._exact_theta_posteriors(
                DoseMethod.SIMPLIFIED, curve, case, prior.point_value, gamma_grid, neutron_grid
            )
        eps = self.theta_epsilon

        if mode_ == "quadrature":
            breakpoints = sorted({p for p in (prior.theta_min, prior.theta_max, mode(prior)) if eps < p < 1 - eps})

            def integrate(frequency) -> Callable[[np.ndarray], np.ndarray]:
                def density(dose: np.ndarray) -> np.ndarray:
                    def integrand(theta: float) -> np.ndarray:
                        weight = density_array(prior, np.array([theta]))[0]
                        if weight == 0:
                            return np.zeros_like(dose)
                        return np.exp(_log_likelihood_ratio(case, frequency(alpha, beta, gamma, y0, theta, dose))) * weight

                    value, _ = quad_vec(integrand, eps, 1.0 - eps, epsrel=self.quad_epsrel, points=breakpoints or None)
                    return value

                return density

            diagnostics = {"epsilon": eps}
        elif mode_ == "monte_carlo":
            mc = mc or MonteCarloSpec(n_samples=settings.mc_samples)
            seed = settings.default_seed if mc.seed is None else mc.seed
            thetas = np.clip(sample_many(prior, np.random.default_rng(seed), mc.n_samples), eps, 1.0 - eps)

            def integrate(frequency) -> Callable[[np.ndarray], np.ndarray]:
                def density(dose: np.ndarray) -> np.ndarray:
                    total = np.zeros(len(dose))
                    for start in range(0, len(thetas), self.mc_batch_size):
                        chunk = thetas[start:start + self.mc_batch_size, None]
                        y = frequency(alpha, beta, gamma, y0, chunk, dose[None, :])
                        total += np.exp(_log_likelihood_ratio(case, y)).sum(axis=0)
                    return total / len(thetas)

                return density

            diagnostics = {"samples": float(mc.n_samples), "seed": float(seed)}
        else:
            raise InputError(f"unknown integration mode {mode_!r}; use quadrature or monte_carlo", "simplified_bayesian")

        gamma_density = integrate(_gamma_frequency)
        neutron_density = integrate(_neutron_frequency)
        return (
            self._posterior("gamma", DoseMethod.SIMPLIFIED, gamma_grid, gamma_density(gamma_grid), gamma_density, diagnostics),
            self._posterior(
                "neutron", DoseMethod.SIMPLIFIED, neutron_grid, neutron_density(neutron_grid), neutron_density, diagnostics
            ),
        )

    # ------------------------------------------------------------------ Monte Carlo helpers

    def _check_samples(self, mc: MonteCarloSpec) -> Tuple[int, int]:
        if mc.n_samples < self.min_mc_samples:
            raise InputError(f"Monte Carlo estimates need n_samples >= {self.min_mc_samples}, got {mc.n_samples}", "dose")
        seed = settings.default_seed if mc.seed is None else mc.seed
        return seed, mc.batch_size or self.mc_batch_size

    @staticmethod
    def batch_generator(seed: int, batch: int) -> np.random.Generator:
        """Counter-based stream of one batch, independent of how batches are scheduled"""
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(batch,))))

    @staticmethod
    def _average_density(samples: Dict[str, np.ndarray], evaluate, dose: np.ndarray, chunk: int) -> np.ndarray:
        count = len(next(iter(samples.values())))
        total = np.zeros(len(dose))
        for start in range(0, count, chunk):
            part = {name: values[start:start + chunk, None] for name, values in samples.items()}
            total += np.exp(evaluate(part, dose[None, :])).sum(axis=0)
        return total / count

    # ------------------------------------------------------------------ full Bayesian

    def full_bayesian(
        self,
        curve_priors: Dict[str, ParamPrior],
        case: Casework,
        prior: ThetaPrior,
        mc: Optional[MonteCarloSpec] = None,
        grid: Optional[GridSpec] = None,
    ) -> Tuple[DosePosterior, DosePosterior]:
        """
        Monte Carlo marginal over (Y0, alpha, beta, gamma, theta) drawn from their priors

        Args:
            curve_priors: ParamPrior for each of "y0", "alpha", "beta", "gamma"
            case: Casework counts
            prior: Theta prior
            mc: Sample count (>= min_mc_samples), seed and batch size
            grid: Optional grid override

        Returns:
            (gamma posterior, neutron posterior)
        """
        missing = [name for name in PARAM_ORDER if name not in curve_priors]
        if missing:
            raise InputError(f"missing parameter priors: {', '.join(missing)}", "full_bayesian")
        mc = mc or MonteCarloSpec(n_samples=settings.mc_samples)
        seed, batch_size = self._check_samples(mc)
        eps = self.theta_epsilon

        draws = {name: [] for name in (*PARAM_ORDER, "theta")}
        for batch, start in enumerate(range(0, mc.n_samples, batch_size)):
            size = min(batch_size, mc.n_samples - start)
            rng = self.batch_generator(seed, batch)
            for name in PARAM_ORDER:
                draws[name].append(sample_param(curve_priors[name], rng, size))
            draws["theta"].append(np.clip(sample_many(prior, rng, size), eps, 1.0 - eps))
        samples = {name: np.concatenate(values) for name, values in draws.items()}

        center = CurveModel(
            kind=CurveKind.COMBINED_MIXED,
            params=tuple(max(curve_priors[name].expected, 0.0) for name in ("alpha", "beta", "gamma")),
            y0=max(curve_priors["y0"].expected, 0.0),
        )
        gamma_grid = self._grid(grid, lambda: self.default_grid(center, case.y_f, "gamma", case)[-1])
        neutron_grid = self._grid(grid, lambda: self.default_grid(center, case.y_f, "neutron", case)[-1])
        logger.info(f"Full Bayesian estimate from {mc.n_samples} samples (seed {seed})")

        def log_likelihood(frequency):
            def evaluate(part: Dict[str, np.ndarray], dose: np.ndarray) -> np.ndarray:
                y = frequency(part["alpha"], part["beta"], part["gamma"], part["y0"], part["theta"], dose)
                return _log_likelihood_ratio(case, y)

            return evaluate

        diagnostics = {"samples": float(mc.n_samples), "seed": float(seed)}
        results = []
        for quantity, grid_values, frequency in (
            ("gamma", gamma_grid, _gamma_frequency),
            ("neutron", neutron_grid, _neutron_frequency),
        ):
            evaluate = log_likelihood(frequency)

            def density(dose: np.ndarray, evaluate=evaluate) -> np.ndarray:
                return self._average_density(samples, evaluate, dose, batch_size)

            results.append(self._posterior(quantity, DoseMethod.FULL, grid_values, density(grid_values), density, diagnostics))
        return results[0], results[1]

    # ------------------------------------------------------------------ generalized Bayesian

    def generalized_bayesian(
        self,
        curve: CurveModel,
        case: Casework,
        priors: Sequence[ThetaPrior],
        param_priors: Optional[Sequence[ParamPrior]] = None,
        mc: Optional[MonteCarloSpec] = None,
        grid: Optional[GridSpec] = None,
    ) -> List[DosePosterior]:
        """
        Posterior of every dose D_i for R radiation types, with D_k = (theta_k / theta_i) D_i

        Thetas are drawn independently from their priors, kept when |sum theta - 1| < simplex
        tolerance and renormalized onto the simplex. n_samples counts kept draws.

        Args:
            curve: multi_radiation_polynomial curve (R >= 2) fixing structure and default parameters
            case: Casework counts
            priors: One theta prior per radiation
            param_priors: Priors for (Y0, lambda_1, ...); point masses at the curve's values when omitted
            mc: Sample count (>= min_mc_samples), seed and batch size
            grid: Optional grid override, applied to every dose

        Returns:
            List[DosePosterior]: One posterior per radiation, quantity "radiation_<i>"
        """
        if curve.kind != CurveKind.MULTI_RADIATION_POLYNOMIAL or curve.radiation_count < 2:
            raise CurveError("generalized estimation needs a multi_radiation_polynomial curve with R >= 2", "generalized_bayesian")
        count = curve.radiation_count
        if len(priors) != count:
            raise InputError(f"need {count} theta priors, got {len(priors)}", "generalized_bayesian")
        full = (curve.y0, *curve.params)
        if param_priors is None:
            param_priors = [ParamPrior.point_mass(value) for value in full]
        if len(param_priors) != len(full):
            raise InputError(f"need {len(full)} parameter priors (Y0 first), got {len(param_priors)}", "generalized_bayesian")
        mc = mc or MonteCarloSpec(n_samples=settings.mc_samples)
        seed, batch_size = self._check_samples(mc)
        max_draws = int(math.ceil(mc.n_samples / max(1.0 - self.simplex_warn_rejection, 1e-6)))

        kept_params, kept_thetas = [], []
        kept = drawn = batch = 0
        while kept < mc.n_samples and drawn < max_draws:
            rng = self.batch_generator(seed, batch)
            params = np.vstack([sample_param(p, rng, batch_size) for p in param_priors])
            thetas = np.vstack([sample_many(p, rng, batch_size) for p in priors])
            total = thetas.sum(axis=0)
            accept = np.abs(total - 1.0) < self.simplex_tolerance
            kept_params.append(params[:, accept])
            kept_thetas.append(thetas[:, accept] / total[accept])
            kept += int(accept.sum())
            drawn += batch_size
            batch += 1
        rejection = 1.0 - kept / drawn
        if kept == 0:
            raise InfeasibleError("theta priors never produced a draw on the simplex", "generalized_bayesian")
        if rejection > self.simplex_warn_rejection:
            logger.warning(f"Simplex rejection rate {rejection:.4f} distorts the joint theta prior")
        params = np.hstack(kept_params)[:, :mc.n_samples]
        thetas = np.hstack(kept_thetas)[:, :mc.n_samples]
        logger.info(f"Generalized Bayesian estimate for R={count} from {params.shape[1]} kept draws (rejection {rejection:.3f})")

        blocks = []
        offset = 1
        for degree in curve.degrees:
            blocks.append((offset, degree))
            offset += degree
        diagnostics = {"samples": float(params.shape[1]), "rejection_rate": rejection, "seed": float(seed)}
        form = get_curve_form(curve.kind)

        results = []
        for i in range(count):
            grid_values = self._grid(grid, lambda i=i: self._radiation_reach(curve, form, i, case))
            if priors[i].is_point_mass and priors[i].point_value == 0.0:
                results.append(self._spike(f"radiation_{i + 1}", DoseMethod.GENERALIZED, grid_values, 0.0))
                continue

            def density(dose: np.ndarray, i=i) -> np.ndarray:
                total = np.zeros(len(dose))
                for start in range(0, params.shape[1], batch_size):
                    stop = start + batch_size
                    y = np.broadcast_to(params[0, start:stop, None], (min(stop, params.shape[1]) - start, len(dose))).copy()
                    with np.errstate(divide="ignore", invalid="ignore"):
                        scale = thetas[:, start:stop] / thetas[i, start:stop]
                    for k, (first, degree) in enumerate(blocks):
                        dose_k = np.nan_to_num(scale[k, :, None], nan=0.0) * dose[None, :]
                        for j in range(1, degree + 1):
                            y = y + params[first + j - 1, start:stop, None] * dose_k**j
                    total += np.exp(_log_likelihood_ratio(case, y)).sum(axis=0)
                return total / params.shape[1]

            results.append(
                self._posterior(f"radiation_{i + 1}", DoseMethod.GENERALIZED, grid_values, density(grid_values), density, diagnostics)
            )
        return results

    def _radiation_reach(self, curve: CurveModel, form, index: int, case: Casework) -> float:
        target = self._grid_target(curve.y0, case.y_f, case)
        doses = np.zeros((curve.radiation_count, 1))

        def response(d: float) -> float:
            doses[:, 0] = 0.0
            doses[index, 0] = d
            return float(form.value(curve, doses)[0])

        return self._reach(response, target)


# Initialize global dose estimator instance
dose_estimator = None


def get_dose_estimator() -> DoseEstimator:
    """
    Get or create the dose estimator (singleton pattern)
    """
    global dose_estimator
    if dose_estimator is None:
        dose_estimator = DoseEstimator()
    return dose_estimator
