from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy.special import logsumexp

from diffusion_schedule import DiffusionSchedule
from pdp_bound import AuditMode, BoundOptions, RadiusScan, binomial_tail_kappa, finite_or_none, kl_to_pdp, select_radius
from privacy_errors import PdpInputError

logger = logging.getLogger(__name__)

DP_SCHEMA = "dp-trace/1"
_SLACK = 1e-12


@dataclass(frozen=True)
class DpStep:
    t: int
    psi_term: float
    eta: int
    c_star: Fraction
    varrho: float
    second_term: float

    @property
    def radius(self) -> int:
        return int(self.eta * (1 + self.c_star))

    @property
    def main_term(self) -> float:
        return self.psi_term + self.second_term

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "eta": self.eta,
            "c_star": float(self.c_star),
            "radius": self.radius,
            "psi_term": finite_or_none(self.psi_term),
            "clamp": 1.0,
            "varrho": self.varrho,
            "second_term": self.second_term,
            "main_term": finite_or_none(self.main_term),
        }


@dataclass(frozen=True)
class DpTrace:
    size: int
    num_features: int
    num_categories: int
    epsilon: float
    m: int
    release_step: int
    mode: AuditMode
    steps: Tuple[DpStep, ...]
    delta: float
    literal_main_text: bool = False

    def total(self) -> float:
        return float(sum(step.main_term for step in self.steps))

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "schema": DP_SCHEMA,
            "meta": {
                "s": self.size,
                "n": self.num_features,
                "k": self.num_categories,
                "epsilon": self.epsilon,
                "m": self.m,
                "release_step": self.release_step,
                "mode": self.mode.value,
                "literal_main_text": self.literal_main_text,
            },
            "delta": finite_or_none(self.delta),
            "trace": [step.to_json_dict() for step in self.steps],
        }


def _check_size(size: int, num_features: int) -> None:
    if num_features < 1:
        raise PdpInputError("n must be positive.")
    if size <= num_features:
        raise PdpInputError(f"The dataset-free bound needs s > n, got s={size}, n={num_features}.")


def _mode_coefficient(t: int, schedule: DiffusionSchedule, mode: AuditMode) -> float:
    return schedule.coefficient(t) if mode is AuditMode.MAIN else schedule.relaxed_coefficient(t)


def worst_psi(t: int, size: int, num_features: int, schedule: DiffusionSchedule, mode: AuditMode = AuditMode.MAIN) -> float:
    """Per-column 1/s^{Ψ_t} of the one-overlap-per-column structure."""
    schedule.check_step(t)
    _check_size(size, num_features)
    coefficient = _mode_coefficient(t, schedule, mode)
    if coefficient <= 0.0:
        return 0.0
    n = num_features
    log_ratio = float(schedule.log_ratio_bar[t])
    far = -n * log_ratio + math.log(size - n)
    near = (1 - n) * log_ratio
    log_outer = float(logsumexp([0.0, far, near]))
    previous = float(schedule.ratio_bar[t - 1])
    if math.isinf(previous):
        growth = float(np.logaddexp(0.0, (n - 1) * log_ratio))
    else:
        spread = (previous - 1.0) * (previous + 1.0)
        if spread <= 0.0:
            return 0.0
        log_inner = float(logsumexp([2.0 * math.log(previous) + near, far, near, 0.0]))
        growth = float(np.logaddexp(0.0, math.log(spread) - log_inner))
    return float(coefficient * growth * math.exp(-log_outer))


def worst_theta(radius: int, size: int, num_features: int) -> float:
    """h(η): s below n − 1, s/n at n − 1, 0 at n."""
    if radius >= num_features:
        return 0.0
    if radius == num_features - 1:
        return size / num_features
    return float(size)


def _worst_scan(t: int, size: int, num_features: int, schedule: DiffusionSchedule, mode: AuditMode, literal_main_text: bool) -> RadiusScan:
    psi = worst_psi(t, size, num_features, schedule, mode)
    coefficient = _mode_coefficient(t, schedule, mode)
    log_scaled = -math.inf if psi <= 0.0 or coefficient <= 0.0 else math.log(coefficient / psi)
    return RadiusScan(
        t=t,
        num_features=num_features,
        size=size,
        schedule=schedule,
        options=BoundOptions(mode=AuditMode.MAIN, literal_main_text=literal_main_text),
        log_scaled=log_scaled,
        theta=lambda outside, inside: worst_theta(outside, size, num_features),
        count_within=lambda radius: 0,
    )


def _worst_c_star(eta: int, scan: RadiusScan) -> int:
    """Smallest j with j/η ≥ (log h(η + j)/η + 3/2)/(log(1/μ_t⁻) − 1)."""
    mu = float(scan.schedule.mu_minus[scan.t])
    denominator = math.inf if mu <= 0.0 else -math.log(mu) - 1.0
    for j in range(scan.n - eta + 1):
        log_h = scan.log_theta(eta + j)
        if log_h == -math.inf:
            return j
        if denominator > 0.0 and j / eta >= (log_h / eta + 1.5) / denominator - _SLACK:
            return j
    return scan.n - eta


def _worst_eta_holds(eta: int, scan: RadiusScan, kappa: int) -> bool:
    """η ≥ κ* + ((log h(η) + log(A·B·Ψ))/(2 log(μ_t⁺/μ_t⁻)))₊ − 2."""
    if kappa > scan.n:
        return False
    log_h = scan.log_theta(eta)
    previous = float(scan.schedule.ratio_bar[scan.t - 1])
    if log_h == -math.inf or scan.log_scaled == -math.inf:
        part = 0.0
    elif math.isinf(previous):
        return False
    else:
        spread = (previous - 1.0) * (previous + 1.0)
        if spread <= 0.0:
            part = 0.0
        else:
            log_ratio = 2.0 * math.log(float(scan.schedule.ratio[scan.t]))
            numerator = log_h + math.log(spread) + scan.log_scaled
            if log_ratio > 0.0:
                part = max(numerator / log_ratio, 0.0)
            else:
                part = math.inf if numerator > 0.0 else 0.0
    return eta >= kappa + part - 2.0 - _SLACK


def worst_radii(
    t: int,
    size: int,
    num_features: int,
    schedule: DiffusionSchedule,
    mode: AuditMode = AuditMode.MAIN,
    literal_main_text: bool = False,
) -> Tuple[int, Fraction]:
    """(η̃_t, c̃*_t) with ϑ replaced by h.

    Main mode scans the main conditions. Relaxed mode keeps the smallest radius
    over those pairs and the pairs meeting the dataset-free relaxed conditions,
    whose κ* uses the tail threshold 1/s.
    """
    _check_size(size, num_features)
    eta, j = select_radius(_worst_scan(t, size, num_features, schedule, AuditMode.MAIN, literal_main_text))
    if mode is AuditMode.RELAXED:
        scan = _worst_scan(t, size, num_features, schedule, AuditMode.RELAXED, literal_main_text)
        kappa = binomial_tail_kappa(num_features, float(schedule.mu_bar_plus[t]), 1.0 / size)
        for candidate in range(1, num_features + 1):
            extra = _worst_c_star(candidate, scan)
            if _worst_eta_holds(candidate, scan, kappa) and (candidate + extra, candidate) < (eta + j, eta):
                eta, j = candidate, extra
    return eta, Fraction(j, eta)


def varrho(t: int, schedule: DiffusionSchedule) -> float:
    schedule.check_step(t)
    keep = float(schedule.mu_plus[t] * schedule.mu_bar_plus[t - 1] / schedule.mu_bar_plus[t])
    previous = float(schedule.ratio_bar[t - 1])
    current = float(schedule.ratio_bar[t])
    if math.isinf(previous):
        return 1.0
    value = (1.0 - keep) * (1.0 - 1.0 / previous) + keep * (1.0 - current / previous)
    return float(min(max(value, 0.0), 1.0))


def dp_delta(
    size: int,
    num_features: int,
    num_categories: int,
    epsilon: float,
    m: int,
    release_step: int,
    schedule: DiffusionSchedule,
    options: BoundOptions | None = None,
) -> DpTrace:
    """Dataset-free δ for any s-row dataset with n columns over k categories.

    The neighbor-count factor is clamped to 1 because no dataset is available.
    """
    options = options or BoundOptions()
    _check_size(size, num_features)
    if epsilon <= 0:
        raise PdpInputError("epsilon must be positive.")
    if m < 0:
        raise PdpInputError("m must be non-negative.")
    if num_categories != schedule.num_categories:
        raise PdpInputError(f"k={num_categories} does not match the schedule's k={schedule.num_categories}.")
    schedule.check_step(release_step, allow_zero=True)
    steps: List[DpStep] = []
    for t in range(release_step + 1, schedule.steps + 1):
        eta, c_star = worst_radii(t, size, num_features, schedule, options.mode, options.literal_main_text)
        rho = varrho(t, schedule)
        steps.append(
            DpStep(
                t=t,
                psi_term=num_features * worst_psi(t, size, num_features, schedule, options.mode),
                eta=eta,
                c_star=c_star,
                varrho=rho,
                second_term=num_features * rho / size**2,
            )
        )
    total = float(sum(step.main_term for step in steps))
    delta = 0.0 if m == 0 or total == 0.0 else m * kl_to_pdp(total, epsilon)
    logger.info("Dataset-free bound for s=%d n=%d k=%d: delta=%.6g", size, num_features, num_categories, delta)
    return DpTrace(
        size=size,
        num_features=num_features,
        num_categories=num_categories,
        epsilon=epsilon,
        m=m,
        release_step=release_step,
        mode=options.mode,
        literal_main_text=options.literal_main_text,
        steps=tuple(steps),
        delta=float(delta),
    )


__all__ = ["DP_SCHEMA", "DpStep", "DpTrace", "dp_delta", "varrho", "worst_psi", "worst_radii", "worst_theta"]
