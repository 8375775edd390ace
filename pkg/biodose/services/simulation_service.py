"""
Virtual irradiation of w cells: damages are dealt to uniformly chosen cells, each one gamma with
probability theta and neutron otherwise, until the aberration frequency implied by the aggregate
doses reaches the target. Repeated K times with independent streams derived from (seed, repetition).
"""

from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple
import logging
import math

import numpy as np

from ..config import settings
from ..curves import evaluate, evaluate_many, sup_value
from ..errors import SimulationError
from ..models.schemas import DamageStatistics, DoseMap, DoseMapKind, SimConfig, SimResult, ThetaPrior
from ..priors import sample_many

logger = logging.getLogger(__name__)

Repetition = Tuple[int, int, np.ndarray]


def apply_dose_map(dose_map: DoseMap, damages) -> np.ndarray:
    """Absorbed dose (Gy) produced by a damage count"""
    u = np.asarray(damages, dtype=float)
    if dose_map.kind == DoseMapKind.LINEAR:
        return dose_map.const * u
    if dose_map.kind == DoseMapKind.POLYNOMIAL:
        return sum(c * u ** (k + 1) for k, c in enumerate(dose_map.coefficients))
    return -dose_map.d_sat * np.expm1(-dose_map.const * u / dose_map.d_sat)


def _dose_limit(dose_map: DoseMap) -> float:
    if dose_map.kind == DoseMapKind.SATURATED:
        return dose_map.d_sat
    if dose_map.kind == DoseMapKind.POLYNOMIAL and dose_map.coefficients[-1] < 0:
        return math.nan
    return math.inf


class MonteCarloSimulator:
    def __init__(self, chunk: Optional[int] = None, damage_ceiling: Optional[int] = None, workers: Optional[int] = None):
        """
        Initialize the cell irradiation simulator

        Args:
            chunk: Damages drawn per vectorized step
            damage_ceiling: Damages after which a repetition is declared non-terminating
            workers: Threads running repetitions concurrently
        """
        self.chunk = chunk or settings.sim_chunk
        self.damage_ceiling = damage_ceiling or settings.sim_damage_ceiling
        self.workers = workers or settings.sim_workers
        logger.info(f"Monte Carlo simulator initialized (chunk={self.chunk}, workers={self.workers})")

    @staticmethod
    def repetition_generator(seed: int, repetition: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(repetition,))))

    def _check_reachable(self, config: SimConfig) -> None:
        limit = _dose_limit(config.dose_map)
        if math.isnan(limit):
            return
        if math.isinf(limit):
            ceiling = sup_value(config.neutron_curve) + sup_value(config.gamma_curve)
        else:
            ceiling = evaluate(config.neutron_curve, limit) + evaluate(config.gamma_curve, limit)
        if ceiling - config.gamma_curve.y0 < config.target_yf:
            raise SimulationError(
                f"target y_f={config.target_yf} exceeds the reachable frequency {ceiling - config.gamma_curve.y0:.6g}",
                "simulate",
            )

    def _frequency(self, config: SimConfig, un: np.ndarray, ug: np.ndarray) -> np.ndarray:
        neutron = evaluate_many(config.neutron_curve, apply_dose_map(config.dose_map, un))
        gamma = evaluate_many(config.gamma_curve, apply_dose_map(config.dose_map, ug))
        return neutron + gamma - config.gamma_curve.y0

    def run_repetition(self, config: SimConfig, seed: int, repetition: int) -> Repetition:
        """
        One repetition: deal damages until Y_n(D_n) + Y_g(D_g) - Y0_g >= y_f

        Returns:
            Tuple of (u_n, u_g, per-cell table of shape (w, 2) holding (u_n, u_g))
        """
        rng = self.repetition_generator(seed, repetition)
        table = np.zeros((config.cells, 2), dtype=np.int64)
        un = ug = 0
        while True:
            cells = rng.integers(0, config.cells, self.chunk)
            if isinstance(config.theta, ThetaPrior):
                thetas = sample_many(config.theta, rng, self.chunk)
            else:
                thetas = np.full(self.chunk, config.theta)
            is_gamma = rng.random(self.chunk) < thetas
            ug_path = ug + np.cumsum(is_gamma)
            un_path = un + np.cumsum(~is_gamma)
            reached = np.flatnonzero(self._frequency(config, un_path, ug_path) >= config.target_yf)
            stop = int(reached[0]) + 1 if reached.size else self.chunk

            taken, gamma_taken = cells[:stop], is_gamma[:stop]
            table[:, 0] += np.bincount(taken[~gamma_taken], minlength=config.cells)
            table[:, 1] += np.bincount(taken[gamma_taken], minlength=config.cells)
            un, ug = int(un_path[stop - 1]), int(ug_path[stop - 1])
            if reached.size:
                return un, ug, table
            if un + ug >= self.damage_ceiling:
                raise SimulationError(
                    f"repetition {repetition} drew {un + ug} damages without reaching y_f={config.target_yf}",
                    "simulate",
                )

    def simulate(self, config: SimConfig) -> SimResult:
        """
        Run K repetitions and aggregate the doses

        Args:
            config: Simulation configuration

        Returns:
            SimResult: Means, sample deviations and standard errors over repetitions, per-repetition
            damage totals and the per-cell table of the last repetition
        """
        self._check_reachable(config)
        seed = settings.default_seed if config.seed is None else config.seed
        logger.info(
            f"Simulating w={config.cells} cells to y_f={config.target_yf} over K={config.repetitions} repetitions (seed {seed})"
        )

        def run(repetition: int) -> Repetition:
            return self.run_repetition(config, seed, repetition)

        repetitions = range(config.repetitions)
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                runs: List[Repetition] = list(executor.map(run, repetitions))
        else:
            runs = [run(r) for r in repetitions]

        un = np.array([r[0] for r in runs])
        ug = np.array([r[1] for r in runs])
        dn = apply_dose_map(config.dose_map, un)
        dg = apply_dose_map(config.dose_map, ug)
        k = config.repetitions
        sd_dn = float(np.std(dn, ddof=1)) if k > 1 else 0.0
        sd_dg = float(np.std(dg, ddof=1)) if k > 1 else 0.0
        table = runs[-1][2]
        totals = table.sum(axis=1)

        result = SimResult(
            repetitions=k,
            mean_dn=float(np.mean(dn)),
            mean_dg=float(np.mean(dg)),
            sd_dn=sd_dn,
            sd_dg=sd_dg,
            sem_dn=sd_dn / math.sqrt(k),
            sem_dg=sd_dg / math.sqrt(k),
            mean_un=float(np.mean(un)),
            mean_ug=float(np.mean(ug)),
            per_repetition_un=tuple(int(v) for v in un),
            per_repetition_ug=tuple(int(v) for v in ug),
            per_repetition_dn=tuple(float(v) for v in dn),
            per_repetition_dg=tuple(float(v) for v in dg),
            damage_table=tuple((int(a), int(b)) for a, b in table),
            damage_histogram=tuple(int(c) for c in np.bincount(totals)),
            seed=seed,
        )
        logger.info(f"Simulation done: D_n={result.mean_dn:.4f}+/-{sd_dn:.4f} Gy, D_g={result.mean_dg:.4f}+/-{sd_dg:.4f} Gy")
        return result


def damage_statistics(result: SimResult) -> DamageStatistics:
    """
    Per-cell mean, variance and index of dispersion of the total damage of the last repetition

    Args:
        result: Simulation result with a non-empty damage table

    Returns:
        DamageStatistics: dispersion is None (dispersion_defined False) for a single cell or no damage
    """
    if not result.damage_table:
        raise SimulationError("damage table is empty", "damage_statistics")
    totals = np.array([un + ug for un, ug in result.damage_table], dtype=float)
    mean = float(totals.mean())
    if len(totals) < 2 or mean == 0:
        return DamageStatistics(
            cells=len(totals),
            total_damage=int(totals.sum()),
            mean=mean,
            variance=0.0,
            dispersion=None,
            dispersion_defined=False,
        )
    variance = float(totals.var(ddof=1))
    return DamageStatistics(
        cells=len(totals),
        total_damage=int(totals.sum()),
        mean=mean,
        variance=variance,
        dispersion=variance / mean,
    )


# Initialize global simulator instance
simulator = None


def get_simulator() -> MonteCarloSimulator:
    """
    Get or create the Monte Carlo simulator (singleton pattern)
    """
    global simulator
    if simulator is None:
        simulator = MonteCarloSimulator()
    return simulator
