from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from categorical_dataset import neighbor_counts, non_majority_point, sample_skewed
from diffusion_schedule import DiffusionSchedule, build
from pdp_bound import BoundOptions, PointLeakage, evaluate_table
from privacy_errors import PdpInputError

logger = logging.getLogger(__name__)

SKEW_COLUMNS = ("p", "t", "psi_term", "radius", "main_term")


@dataclass(frozen=True)
class SkewParams:
    p: float
    num_categories: int
    num_features: int

    def __post_init__(self) -> None:
        if self.num_categories < 2 or self.num_features < 1:
            raise PdpInputError("Skewed designs need k >= 2 and n >= 1.")
        if self.p < 1.0 / self.num_categories - 1e-12 or self.p >= 1.0:
            raise PdpInputError(f"p must lie in [1/k, 1), got {self.p}.")

    @property
    def minority_share(self) -> float:
        """(1 − p)/(k − 1), the probability of any single minority category."""
        return (1.0 - self.p) / (self.num_categories - 1)

    def tau(self, t: int, schedule: DiffusionSchedule) -> float:
        schedule.check_step(t)
        share = self.minority_share
        flip = float(schedule.mu_bar_minus[t] / schedule.mu_bar_plus[t])
        return share + flip * (1.0 - share)


@dataclass(frozen=True)
class SkewDesign:
    """Setup of the skewness and decay sweeps."""

    num_features: int = 5
    num_categories: int = 5
    steps: int = 20
    size: int = 1000
    epsilon: float = 10.0
    m: int = 1
    release_step: int = 0
    p: float = 0.5
    seeds: int = 5
    base_seed: int = 0
    schedule: str = "linear"
    decay: float = 1.0

    def build_schedule(self, family: str | None = None, decay: float | None = None) -> DiffusionSchedule:
        return build(family or self.schedule, self.steps, self.num_categories, self.decay if decay is None else decay)

    def params(self, p: float | None = None) -> SkewParams:
        return SkewParams(p=self.p if p is None else p, num_categories=self.num_categories, num_features=self.num_features)


def asymptotic_psi(t: int, params: SkewParams, schedule: DiffusionSchedule) -> float:
    """Large-s limit of psi_term · s²/n for the non-majority point."""
    coefficient = schedule.coefficient(t)
    if coefficient <= 0.0:
        return 0.0
    n = params.num_features
    tau = params.tau(t, schedule)
    share = params.minority_share
    previous = float(schedule.ratio_bar[t - 1])
    if math.isinf(previous):
        return float(coefficient / (share * tau ** (2 * n - 1)))
    spread = (previous - 1.0) * (previous + 1.0)
    return float(coefficient * spread / (previous**2 * tau ** (2 * n - 1) * share + tau ** (2 * n)))


def sufficient_radii(t: int, params: SkewParams, size: int, schedule: DiffusionSchedule) -> Tuple[int, Fraction]:
    """Smallest grid (η, c*) meeting the closed-form sufficient conditions."""
    schedule.check_step(t)
    if size < 1:
        raise PdpInputError("s must be positive.")
    n = params.num_features
    skew = math.log((params.num_categories - 1) / (1.0 - params.p))
    mu_bar_minus = float(schedule.mu_bar_minus[t])
    log_ratio = float(schedule.log_ratio_bar[t])
    coefficient = schedule.coefficient(t)
    log_scale = math.log(size) + 0.5 * math.log(coefficient) if coefficient > 0.0 else -math.inf
    if log_ratio > 0.0:
        numerator = n - log_scale / log_ratio
    else:
        numerator = -math.inf if log_scale > 0.0 else n
    spread = math.log(max(1.0 / (n * mu_bar_minus), 1.0))
    denominator = math.inf if spread == 0.0 else 2.0 * skew / spread + 1.0
    reach = max(numerator / denominator, 0.0) if math.isfinite(numerator) else 0.0
    eta = min(max(math.ceil(n - reach - 1e-12), 1), n)
    threshold = ((n - eta) / eta * skew + math.log(2.0) + 1.0) / (skew - 1.0 - math.log(mu_bar_minus))
    for j in range(n - eta + 1):
        if j / eta >= threshold - 1e-12:
            return eta, Fraction(j, eta)
    return eta, Fraction(n - eta, eta)


def _audit_outlier(design: SkewDesign, p: float, seed: Sequence[int], schedule: DiffusionSchedule, options: BoundOptions) -> PointLeakage:
    sample = sample_skewed(design.num_features, design.num_categories, p, design.size, np.random.SeedSequence(list(seed)))
    target = non_majority_point(design.num_features, design.num_categories)
    table = neighbor_counts(sample.with_rows([target]), target)
    zeros = (0.0,) * schedule.steps
    return evaluate_table(table, design.epsilon, design.m, design.release_step, schedule, options, zeros, zeros)


def _outlier_runs(design: SkewDesign, p_grid: Sequence[float], options: BoundOptions | None) -> Dict[float, List[PointLeakage]]:
    options = options or BoundOptions()
    schedule = design.build_schedule()
    runs: Dict[float, List[PointLeakage]] = {}
    for index, p in enumerate(p_grid):
        design.params(p)  # rejects p outside [1/k, 1)
        runs[p] = [_audit_outlier(design, p, (design.base_seed, index, rep), schedule, options) for rep in range(design.seeds)]
        logger.info("p=%.3g: mean delta %.6g over %d seeds", p, np.mean([run.delta for run in runs[p]]), design.seeds)
    return runs


def predict_leakage_vs_skew(p_grid: Sequence[float], design: SkewDesign, options: BoundOptions | None = None) -> pd.DataFrame:
    """Seed-averaged per-timestep bound of the non-majority point, one row per (p, t)."""
    records = []
    for p, runs in _outlier_runs(design, p_grid, options).items():
        for t in range(design.release_step + 1, design.steps + 1):
            steps = [run.trace.at(t) for run in runs]
            records.append(
                {
                    "p": p,
                    "t": t,
                    "psi_term": float(np.mean([step.psi_term for step in steps])),
                    "radius": float(np.mean([step.radius for step in steps])),
                    "main_term": float(np.mean([step.main_term for step in steps])),
                }
            )
    return pd.DataFrame.from_records(records, columns=list(SKEW_COLUMNS))


def leakage_by_p(p_grid: Sequence[float], design: SkewDesign, options: BoundOptions | None = None) -> pd.DataFrame:
    records = [
        {"p": p, "delta": float(np.mean([run.delta for run in runs])), "delta_std": float(np.std([run.delta for run in runs]))}
        for p, runs in _outlier_runs(design, p_grid, options).items()
    ]
    return pd.DataFrame.from_records(records, columns=["p", "delta", "delta_std"])


def predict_leakage_vs_decay(
    decays: Iterable[float],
    family: str,
    design: SkewDesign,
    options: BoundOptions | None = None,
) -> pd.DataFrame:
    """Seed-averaged δ of the non-majority point per decay rate; every decay sees the same samples."""
    options = options or BoundOptions()
    records = []
    for decay in decays:
        schedule = design.build_schedule(family, decay)
        deltas = [_audit_outlier(design, design.p, (design.base_seed, 0, rep), schedule, options).delta for rep in range(design.seeds)]
        records.append({"decay": float(decay), "delta": float(np.mean(deltas)), "delta_std": float(np.std(deltas))})
    return pd.DataFrame.from_records(records, columns=["decay", "delta", "delta_std"])


__all__ = [
    "SKEW_COLUMNS",
    "SkewDesign",
    "SkewParams",
    "asymptotic_psi",
    "leakage_by_p",
    "predict_leakage_vs_decay",
    "predict_leakage_vs_skew",
    "sufficient_radii",
]
