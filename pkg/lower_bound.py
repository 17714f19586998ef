"""Lower bounds on the two-column worst pair and the exact chain they are checked against.

The worst pair holds s − 1 copies of [0, 0] plus two copies of [1, 1] (V₀) or one (V₁).
Both datasets use k = 2, so the generation chain lives on four states and can be
enumerated exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np

from categorical_dataset import CategoricalDataset
from ddm_core import ExactChainDistribution, exact_generated_distribution, exact_pdp_delta, posterior_cases
from diffusion_schedule import DiffusionSchedule
from privacy_errors import PdpInputError

logger = logging.getLogger(__name__)

WORST_ROW = (1, 1)
COMMON_ROW = (0, 0)


@dataclass(frozen=True)
class TransitionConstants:
    """q(v_{t−1}ⁱ | v_tⁱ, v_0ⁱ) for the four coincidence patterns of a binary column."""

    t: int
    c1: float
    c2: float
    c1_tilde: float
    c2_tilde: float

    def to_json_dict(self) -> Dict[str, Any]:
        return {"t": self.t, "C1": self.c1, "C2": self.c2, "C1~": self.c1_tilde, "C2~": self.c2_tilde}


@dataclass(frozen=True)
class SimplifiedLowerBound:
    epsilon: float
    delta_lb: float
    gap_lower: float
    mass_upper: float
    closed_form_delta: float
    delta_tilde: float

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "delta_lb": self.delta_lb,
            "gap_lower": self.gap_lower,
            "mass_upper": self.mass_upper,
            "closed_form_delta": self.closed_form_delta,
            "delta_tilde": self.delta_tilde,
        }


@dataclass(frozen=True, eq=False)
class ExactGap:
    with_copy: ExactChainDistribution
    without_copy: ExactChainDistribution

    @property
    def worst_index(self) -> int:
        return self.with_copy.state_index(WORST_ROW)

    @property
    def gap(self) -> float:
        return self.with_copy.probability_of(WORST_ROW) - self.without_copy.probability_of(WORST_ROW)

    def pdp_delta(self, epsilon: float) -> float:
        return exact_pdp_delta(self.with_copy, self.without_copy, epsilon)

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "worst_state": list(WORST_ROW),
            "with_copy": self.with_copy.probabilities.tolist(),
            "without_copy": self.without_copy.probabilities.tolist(),
            "gap": self.gap,
        }


def _check_binary(schedule: DiffusionSchedule, minimum_steps: int = 1) -> None:
    if schedule.num_categories != 2:
        raise PdpInputError(f"The worst-pair bounds need k = 2, got k={schedule.num_categories}.")
    if schedule.steps < minimum_steps:
        raise PdpInputError(f"The worst-pair bounds need T >= {minimum_steps}, got T={schedule.steps}.")


def _check_size(size: int) -> None:
    if size < 2:
        raise PdpInputError(f"The worst pair needs s >= 2, got s={size}.")


def transition_constants(t: int, schedule: DiffusionSchedule) -> TransitionConstants:
    cases = posterior_cases(t, schedule)
    return TransitionConstants(
        t=t,
        c1=cases.keep_at_origin,
        c2=cases.leave_origin,
        c1_tilde=cases.keep_away,
        c2_tilde=cases.return_to_origin,
    )


def worst_pair(size: int) -> Tuple[CategoricalDataset, CategoricalDataset]:
    _check_size(size)
    rows = [COMMON_ROW] * (size - 1) + [WORST_ROW, WORST_ROW]
    with_copy = CategoricalDataset.from_rows(rows, num_categories=2)
    return with_copy, with_copy.without_one(WORST_ROW)


def _series(first: float, factors: List[float], terms: List[float]) -> float:
    """first + F₁G₂ + F₁F₂G₃ + … with ``factors`` = [F₁, …] and ``terms`` = [G₂, …]."""
    total, product = first, 1.0
    for factor, term in zip(factors, terms):
        product *= factor
        total += product * term
    return float(total)


def _closed_form(schedule: DiffusionSchedule, size: int) -> Tuple[float, float]:
    """(G̃₁ + F̃₁G̃₂ + …, Δ̃) from the large-s constants; reported for reference only."""
    T = schedule.steps
    constants = [transition_constants(t, schedule) for t in range(1, T + 1)]
    ratio_one = float(schedule.ratio_bar[1])
    factors = [c.c1 * (c.c1 - c.c1_tilde) for c in constants[: T - 2]]
    terms = [2.0 * (c.c2_tilde - c.c2) / float(schedule.ratio_bar[c.t]) ** 2 for c in constants[1 : T - 1]]
    series = _series(ratio_one**2 / size, factors, terms)
    delta_tilde = min((c.c2 + c.c1_tilde + 2.0 * c.c1_tilde * c.c2) / 4.0 for c in constants[1:])
    return series, delta_tilde


def simplified_bound(schedule: DiffusionSchedule, size: int) -> SimplifiedLowerBound:
    """ε₀ and δ_lb: the mechanism fails (ε₀, δ)-pDP for every δ below δ_lb.

    With L the recursion bound on the mass gap at [1, 1] and U the bound on the
    one-copy mass there, ε₀ = log(1 + L/(2U)) leaves δ* ≥ L − (e^ε₀ − 1)U = L/2.
    """
    _check_binary(schedule, minimum_steps=2)
    _check_size(size)
    gap_lower = full_recursion_bound(schedule, size)
    mass_upper = single_copy_mass_bound(schedule, size)
    series, delta_tilde = _closed_form(schedule, size)
    delta_lb = gap_lower / 2.0
    if series / size > delta_lb:
        logger.info("Closed-form delta %.3g exceeds the recursion-backed delta %.3g at s=%d; reporting the latter", series / size, delta_lb, size)
    return SimplifiedLowerBound(
        epsilon=math.log1p(gap_lower / (2.0 * mass_upper)),
        delta_lb=delta_lb,
        gap_lower=gap_lower,
        mass_upper=mass_upper,
        closed_form_delta=series / size,
        delta_tilde=delta_tilde,
    )


def _recursion_factor(c: TransitionConstants, schedule: DiffusionSchedule, size: int) -> float:
    plus, minus = float(schedule.mu_bar_plus[c.t]), float(schedule.mu_bar_minus[c.t])
    shared = ((size - 1) * c.c1_tilde + 2.0 * c.c1) * ((size - 1) * c.c1 + 2.0 * c.c2_tilde)
    a = (size + 1) ** 2 * c.c1**2 - shared
    b = (size + 1) ** 2 * c.c1_tilde * c.c1 - shared
    cc = (size + 1) ** 2 * c.c1_tilde**2 - shared
    top = 4.0 * plus**4 * a + 4.0 * (size - 1) * plus**2 * minus**2 * b + (size - 1) ** 2 * minus**4 * cc
    bottom = (size + 1) ** 2 * (2.0 * plus**2 + (size - 1) * minus**2) ** 2
    return top / bottom


def _recursion_term(c: TransitionConstants, schedule: DiffusionSchedule, size: int) -> float:
    plus, minus = float(schedule.mu_bar_plus[c.t]), float(schedule.mu_bar_minus[c.t])
    lead = (size - 1) * (c.c2_tilde - c.c2) * plus**2 * minus**2
    spread = (
        4.0 * c.c2_tilde * minus**4
        + 3.0 * (size - 1) * (c.c2 + c.c2_tilde) * plus**2 * minus**2
        + 2.0 * (size - 1) ** 2 * c.c2 * plus**4
    )
    bottom = ((size - 1) * plus**2 + 2.0 * minus**2) ** 2 * ((size - 1) * plus**2 + minus**2) ** 2
    return lead * spread / bottom


def first_recursion_term(schedule: DiffusionSchedule, size: int) -> float:
    ratio_sq = float(schedule.ratio_bar[1]) ** 2
    return ratio_sq * (size - 1) / ((1.0 + (size - 1) * ratio_sq) * (2.0 + (size - 1) * ratio_sq))


def full_recursion_bound(schedule: DiffusionSchedule, size: int) -> float:
    """G₁ + F₁G₂ + … + F₁…F_{T−2}G_{T−1} with the s-dependent constants."""
    _check_binary(schedule, minimum_steps=2)
    _check_size(size)
    T = schedule.steps
    constants = [transition_constants(t, schedule) for t in range(1, T + 1)]
    factors = [_recursion_factor(c, schedule, size) for c in constants[: T - 2]]
    terms = [_recursion_term(c, schedule, size) for c in constants[1 : T - 1]]
    return _series(first_recursion_term(schedule, size), factors, terms)


def exact_gap(schedule: DiffusionSchedule, size: int, release_step: int = 0) -> ExactGap:
    _check_binary(schedule)
    with_copy, without_copy = worst_pair(size)
    logger.info("Enumerating the four-state chain for s=%d over %d steps", size, schedule.steps)
    return ExactGap(
        with_copy=exact_generated_distribution(with_copy, release_step, schedule),
        without_copy=exact_generated_distribution(without_copy, release_step, schedule),
    )


def single_copy_mass_bound(schedule: DiffusionSchedule, size: int) -> float:
    """1/s + R̄₁²Δ/(R̄₁² + s), an upper bound on the one-copy chain's mass at [1, 1]."""
    _check_binary(schedule, minimum_steps=2)
    _check_size(size)
    s = float(size)
    values = []
    for t in range(2, schedule.steps + 1):
        c = transition_constants(t, schedule)
        r2 = float(schedule.ratio_bar[t]) ** 2
        mixed = 2.0 * (c.c1_tilde * (s - 1.0) / s + c.c1 / s) * (c.c2 * (s - 1.0) / s + c.c2_tilde / s)
        values.append(
            (c.c2 * s * r2 / (s * r2 + 1.0) + c.c2_tilde / (s * r2 + 1.0) + c.c1_tilde * s / (s + r2) + c.c1 * r2 / (s + r2) + mixed)
            / 4.0
        )
    delta = min(values)
    ratio_one_sq = float(schedule.ratio_bar[1]) ** 2
    return float(1.0 / s + ratio_one_sq * delta / (ratio_one_sq + s))


def constants_table(schedule: DiffusionSchedule) -> List[Dict[str, Any]]:
    return [transition_constants(t, schedule).to_json_dict() for t in range(1, schedule.steps + 1)]


def constant_identity_error(schedule: DiffusionSchedule) -> float:
    """max_t |C1 + C2 − C1~ − C2~|."""
    gaps = [
        abs(c.c1 + c.c2 - c.c1_tilde - c.c2_tilde)
        for c in (transition_constants(t, schedule) for t in range(1, schedule.steps + 1))
    ]
    return float(np.max(gaps))


__all__ = [
    "COMMON_ROW",
    "ExactGap",
    "SimplifiedLowerBound",
    "TransitionConstants",
    "WORST_ROW",
    "constant_identity_error",
    "constants_table",
    "exact_gap",
    "first_recursion_term",
    "full_recursion_bound",
    "simplified_bound",
    "single_copy_mass_bound",
    "transition_constants",
    "worst_pair",
]
