from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.stats import binom, spearmanr

from categorical_dataset import (
    CategoricalDataset,
    NeighborTable,
    RowLike,
    as_row,
    neighbor_counts,
    neighbor_table_from_distinct,
    neighbor_tables,
    subset_counting_feasible,
)
from diffusion_schedule import DiffusionSchedule
from privacy_errors import PdpInputError

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "pdp-report/1"
SUPPORT_ISOLATED = "support-isolated"
DIVERGENT = "divergent"
_SLACK = 1e-12
_LOG_TWO_E = math.log(2.0) + 1.0


class AuditMode(str, Enum):
    MAIN = "main"
    RELAXED = "relaxed"


@dataclass(frozen=True)
class BoundOptions:
    mode: AuditMode = AuditMode.MAIN
    literal_main_text: bool = False


@dataclass(frozen=True)
class StepBreakdown:
    t: int
    eta: int
    c_star: Fraction
    psi_term: float
    clamp: float
    second_term: float
    error_term: float = 0.0

    @property
    def radius(self) -> int:
        return int(self.eta * (1 + self.c_star))

    @property
    def main_term(self) -> float:
        if self.psi_term == 0.0:
            return self.second_term
        if math.isinf(self.psi_term):
            return math.inf
        return self.clamp * self.psi_term + self.second_term

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "eta": self.eta,
            "c_star": float(self.c_star),
            "radius": self.radius,
            "psi_term": finite_or_none(self.psi_term),
            "clamp": self.clamp,
            "second_term": self.second_term,
            "error_term": finite_or_none(self.error_term),
            "main_term": finite_or_none(self.main_term),
        }


@dataclass(frozen=True)
class RadiusTrace:
    steps: Tuple[StepBreakdown, ...]

    def total(self) -> float:
        return float(sum(step.main_term + step.error_term for step in self.steps))

    def at(self, t: int) -> StepBreakdown:
        for step in self.steps:
            if step.t == t:
                return step
        raise KeyError(t)

    def to_records(self) -> List[Dict[str, Any]]:
        return [step.to_json_dict() for step in self.steps]


@dataclass(frozen=True)
class PointLeakage:
    row: Tuple[int, ...]
    multiplicity: int
    delta: float
    trace: RadiusTrace
    flags: Tuple[str, ...] = ()
    rank: int = 0

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "row": list(self.row),
            "multiplicity": self.multiplicity,
            "rank": self.rank,
            "delta": finite_or_none(self.delta),
            "flags": list(self.flags),
            "trace": self.trace.to_records(),
        }


@dataclass(frozen=True)
class PdpReport:
    epsilon: float
    m: int
    release_step: int
    steps: int
    options: BoundOptions
    dataset_fingerprint: str
    dataset_size: int
    points: Tuple[PointLeakage, ...]
    gamma: Tuple[float, ...] = field(default=())
    gamma_tilde: Tuple[float, ...] = field(default=())

    @property
    def mode(self) -> AuditMode:
        return self.options.mode

    def weighted_deltas(self) -> np.ndarray:
        return np.repeat([point.delta for point in self.points], [point.multiplicity for point in self.points])

    def mean_delta(self) -> float:
        values = self.weighted_deltas()
        return float(values.mean()) if values.size else 0.0

    def max_delta(self) -> float:
        return max((point.delta for point in self.points), default=0.0)

    def to_json_dict(self, extra_meta: Mapping[str, Any] | None = None) -> Dict[str, Any]:
        meta: Dict[str, Any] = {
            "epsilon": self.epsilon,
            "m": self.m,
            "release_step": self.release_step,
            "summation": [self.release_step + 1, self.steps],
            "mode": self.options.mode.value,
            "literal_main_text": self.options.literal_main_text,
            "dataset_fingerprint": self.dataset_fingerprint,
            "dataset_size": self.dataset_size,
            "gamma": list(self.gamma),
            "gamma_tilde": list(self.gamma_tilde),
        }
        if extra_meta:
            meta.update(extra_meta)
        return {
            "schema": REPORT_SCHEMA,
            "meta": meta,
            "points": [point.to_json_dict() for point in self.points],
        }


def finite_or_none(value: float) -> float | None:
    """JSON has no infinity; non-finite values are written as null and explained by the flags."""
    return float(value) if math.isfinite(value) else None


def _log(value: float) -> float:
    if value == 0.0:
        return -math.inf
    return math.log(value)


def _divide(numerator: float, denominator: float) -> float:
    """numerator/denominator for a non-negative denominator; 0 stands for the R̄ = 1 limit."""
    if denominator > 0.0:
        return numerator / denominator
    return math.inf if numerator > 0.0 else 0.0


def vartheta(outside_count: int, inside_count: int, size: int) -> float:
    """(s − N_a)/N_b with N_b = 0 read as +∞."""
    if not (0 <= outside_count <= size and 0 <= inside_count <= size):
        raise PdpInputError("Neighbor counts must lie in [0, s].")
    remaining = size - outside_count
    if remaining == 0:
        return 0.0
    if inside_count == 0:
        return math.inf
    return remaining / inside_count


def kl_to_pdp(tau: float, epsilon: float) -> float:
    if epsilon <= 0:
        raise PdpInputError("epsilon must be positive.")
    if tau < 0:
        raise PdpInputError("The divergence bound must be non-negative.")
    if tau == 0:
        return 0.0
    return float(tau / (epsilon * -math.expm1(-epsilon)))


@lru_cache(maxsize=4096)
def _log_tails(num_features: int, mu_bar_plus: float) -> Tuple[float, ...]:
    flip = 1.0 - mu_bar_plus
    kappas = np.arange(num_features + 1)
    with np.errstate(divide="ignore"):
        tails = binom.logsf(kappas - 1, num_features, flip)
    return tuple(float(value) for value in tails)


def binomial_tail_kappa(num_features: int, mu_bar_plus: float, threshold: float) -> int:
    """Smallest κ whose Binomial(n, 1 − μ̄⁺) upper tail is at most ``threshold``; n + 1 if none."""
    if threshold < 0:
        raise PdpInputError("threshold must be non-negative.")
    if threshold >= 1.0:
        return 0
    limit = _log(threshold)
    for kappa, log_tail in enumerate(_log_tails(num_features, float(mu_bar_plus))):
        if log_tail <= limit + _SLACK:
            return kappa
    return num_features + 1


def error_term(t: int, gamma: float, gamma_tilde: float, schedule: DiffusionSchedule, num_features: int) -> float:
    """n (f₁(γ_t) + f₂(γ̃_t)); the bare μ̄_{t−1} of f₁ is read as μ̄_{t−1}⁻."""
    schedule.check_step(t)
    if gamma < 0 or gamma_tilde < 0:
        raise PdpInputError("Training errors must be non-negative.")
    k = schedule.num_categories
    mu_plus, mu_minus = schedule.mu_plus[t], schedule.mu_minus[t]
    prev_plus, prev_minus = schedule.mu_bar_plus[t - 1], schedule.mu_bar_minus[t - 1]
    first = 0.0
    if gamma > 0:
        scale = (mu_plus * prev_plus) ** 2
        below = schedule.mu_bar_plus[t] * mu_minus * prev_minus
        first = math.inf if below == 0 else k * scale / below * math.sqrt(2.0 * gamma)
    second = 0.0
    if gamma_tilde > 0:
        below = mu_minus * prev_minus
        second = math.inf if below == 0 else 2.0 * math.log(mu_plus * prev_plus / below) * gamma_tilde
    return float(num_features * (first + second))


def _psi_parts(table: NeighborTable, t: int, schedule: DiffusionSchedule) -> Tuple[float, float]:
    """(Sim(v*, V₁), Σ_i log(1 + …)) at ratio R̄_t."""
    ratio = float(schedule.ratio_bar[t])
    log_sim = table.log_similarity(ratio)
    log_restricted = table.log_restricted_similarities(ratio)
    sim = math.exp(log_sim)
    previous = float(schedule.ratio_bar[t - 1])
    if math.isinf(previous):
        terms = np.logaddexp(0.0, -log_restricted)
    else:
        spread = (previous - 1.0) * (previous + 1.0)
        terms = np.log1p(spread / (previous**2 * np.exp(log_restricted) + sim + 1.0))
    return sim, float(np.sum(terms))


def psi_term(table: NeighborTable, t: int, schedule: DiffusionSchedule, mode: AuditMode = AuditMode.MAIN) -> float:
    """n/s^{ψ_t} for the target of ``table``; +∞ when a column has no support at t = 1."""
    schedule.check_step(t)
    if table.size < 1:
        raise PdpInputError("The audited dataset needs at least one other row.")
    coefficient = schedule.coefficient(t) if mode is AuditMode.MAIN else schedule.relaxed_coefficient(t)
    if coefficient <= 0.0:
        return 0.0
    sim, log_sum = _psi_parts(table, t, schedule)
    return float(coefficient * log_sum / (1.0 + sim))


@dataclass(frozen=True)
class RadiusScan:
    """Per-timestep inputs of the η and c* conditions.

    ``theta(a, b)`` is ϑ with outside radius ``a`` and inside radius ``b``;
    ``count_within`` gives N_η and is only consulted by the relaxed conditions.
    """

    t: int
    num_features: int
    size: int
    schedule: DiffusionSchedule
    options: BoundOptions
    log_scaled: float
    theta: Callable[[int, int], float]
    count_within: Callable[[int], int]

    @property
    def n(self) -> int:
        return self.num_features

    @property
    def s(self) -> int:
        return self.size

    def log_theta(self, outside: int, inside: int | None = None) -> float:
        value = self.theta(outside, outside if inside is None else inside)
        return math.inf if math.isinf(value) else _log(value)


def _step_context(table: NeighborTable, t: int, schedule: DiffusionSchedule, options: BoundOptions, sim: float, log_sum: float) -> RadiusScan:
    if log_sum == 0.0 or schedule.coefficient(t) <= 0.0:
        log_scaled = -math.inf
    else:
        log_scaled = math.log(table.num_features) + math.log1p(sim) - _log(log_sum)
    size = table.size

    def theta(outside: int, inside: int) -> float:
        return vartheta(table.n_within(outside), table.n_within(inside), size)

    return RadiusScan(
        t=t,
        num_features=table.num_features,
        size=size,
        schedule=schedule,
        options=options,
        log_scaled=log_scaled,
        theta=theta,
        count_within=table.n_within,
    )


def _c_holds(c: Fraction, numerator: float, denominator: float) -> bool:
    if numerator == -math.inf:
        return True
    if denominator <= 0.0 or numerator == math.inf:
        return False
    return float(c) >= numerator / denominator - _SLACK


def _c_star_main(eta: int, step: RadiusScan) -> int:
    mu = step.schedule.mu_minus[step.t] if step.options.literal_main_text else step.schedule.mu_bar_minus[step.t]
    denominator = -math.log(mu) - 1.0
    for j in range(step.n - eta + 1):
        numerator = step.log_theta(eta + j) / eta + 1.5
        if _c_holds(Fraction(j, eta), numerator, denominator):
            return j
    return step.n - eta


def _c_star_relaxed(eta: int, step: RadiusScan) -> int:
    mu = float(step.schedule.mu_bar_minus[step.t])
    log_inverse = -math.log(mu)
    doubled = step.log_theta(min(2 * eta, step.n))
    first_branch = -doubled > eta * (_LOG_TWO_E + math.log(mu))
    if first_branch:
        for j in range(step.n - eta + 1):
            numerator = step.log_theta(eta + j) / eta + 1.0 + math.log(2.0)
            if _c_holds(Fraction(j, eta), numerator, log_inverse):
                return j
        return step.n - eta
    for j in range(eta, step.n - eta + 1):
        numerator = step.log_theta(eta + j) / eta
        if _c_holds(Fraction(j, eta), numerator, log_inverse - 1.0):
            return j
    return step.n - eta


def find_c_star(eta: int, t: int, table: NeighborTable, schedule: DiffusionSchedule, options: BoundOptions | None = None) -> Fraction:
    options = options or BoundOptions()
    if not 1 <= eta <= table.num_features:
        raise PdpInputError(f"eta must lie in [1, {table.num_features}].")
    sim, log_sum = _psi_parts(table, t, schedule)
    step = _step_context(table, t, schedule, options, sim, log_sum)
    j = _c_star_main(eta, step) if options.mode is AuditMode.MAIN else _c_star_relaxed(eta, step)
    return Fraction(j, eta)


def _eta_holds_main(eta: int, step: RadiusScan) -> bool:
    log_theta = step.log_theta(eta)
    if log_theta == math.inf:
        return False
    if log_theta == -math.inf:
        return True
    k = step.schedule.num_categories
    log_inverse = -math.log(step.n * (k - 1) * step.schedule.mu_bar_minus[step.t])
    if log_inverse > 0.0:
        first = log_theta / log_inverse
    else:
        first = math.inf if log_theta > 0.0 else 0.0
    if step.log_scaled == -math.inf:
        second = 0.0
    else:
        second = max(_divide(log_theta + step.log_scaled, 2.0 * float(step.schedule.log_ratio_bar[step.t])) - 2.0, 0.0)
    return eta >= first + second - _SLACK


def _eta_holds_relaxed(eta: int, j: int, step: RadiusScan) -> bool:
    inside = step.count_within(eta)
    radius_count = step.count_within(eta + j)
    outside = step.s - inside
    threshold = math.inf if outside == 0 else radius_count / outside
    kappa = binomial_tail_kappa(step.n, float(step.schedule.mu_bar_plus[step.t]), threshold)
    if kappa > step.n:
        return False
    log_theta = step.log_theta(eta, eta + j)
    if log_theta == math.inf:
        return False
    if log_theta == -math.inf:
        part = 0.0
    else:
        previous = float(step.schedule.ratio_bar[step.t - 1])
        if math.isinf(previous) or step.log_scaled == math.inf:
            part = math.inf
        elif step.log_scaled == -math.inf:
            part = 0.0
        else:
            log_phi = math.log((previous - 1.0) * (previous + 1.0)) + step.log_scaled
            ratio = step.schedule.ratio[step.t] if step.options.literal_main_text else step.schedule.ratio_bar[step.t]
            part = max(_divide(log_theta + log_phi, 2.0 * math.log(float(ratio))), 0.0)
    return eta >= kappa + part - 2.0 - _SLACK


def select_radius(step: RadiusScan) -> Tuple[int, int]:
    n = step.n
    if step.options.mode is AuditMode.MAIN:
        for eta in range(1, n + 1):
            j = _c_star_main(eta, step)
            if _eta_holds_main(eta, step):
                return eta, j
        return n, 0
    best = (n, 0)
    for eta in range(1, n + 1):
        candidates = []
        if _eta_holds_main(eta, step):
            candidates.append(_c_star_main(eta, step))
        j = _c_star_relaxed(eta, step)
        if _eta_holds_relaxed(eta, j, step):
            candidates.append(j)
        for j in candidates:
            if (eta + j, eta) < (best[0] + best[1], best[0]):
                best = (eta, j)
    return best


def find_eta(t: int, table: NeighborTable, schedule: DiffusionSchedule, options: BoundOptions | None = None) -> Tuple[int, Fraction]:
    """(η_t, c*_t) for the target of ``table``."""
    options = options or BoundOptions()
    schedule.check_step(t)
    sim, log_sum = _psi_parts(table, t, schedule)
    eta, j = select_radius(_step_context(table, t, schedule, options, sim, log_sum))
    return eta, Fraction(j, eta)


def _gamma_values(values: Sequence[float] | None, steps: int, label: str) -> Tuple[float, ...]:
    if values is None:
        return (0.0,) * steps
    result = tuple(float(value) for value in values)
    if len(result) != steps:
        raise PdpInputError(f"{label} needs one value per timestep ({steps}), got {len(result)}.")
    if any(value < 0 for value in result):
        raise PdpInputError(f"{label} values must be non-negative.")
    return result


def _check_audit_inputs(epsilon: float, m: int, release_step: int, schedule: DiffusionSchedule) -> None:
    if epsilon <= 0:
        raise PdpInputError("epsilon must be positive.")
    if m < 0:
        raise PdpInputError("m must be non-negative.")
    schedule.check_step(release_step, allow_zero=True)


def evaluate_table(
    table: NeighborTable,
    epsilon: float,
    m: int,
    release_step: int,
    schedule: DiffusionSchedule,
    options: BoundOptions,
    gamma: Sequence[float],
    gamma_tilde: Sequence[float],
    multiplicity: int = 1,
) -> PointLeakage:
    if table.size < 1:
        raise PdpInputError("Auditing needs at least two rows.")
    n, s = table.num_features, table.size
    steps: List[StepBreakdown] = []
    flags: List[str] = []
    for t in range(release_step + 1, schedule.steps + 1):
        sim, log_sum = _psi_parts(table, t, schedule)
        coefficient = schedule.coefficient(t) if options.mode is AuditMode.MAIN else schedule.relaxed_coefficient(t)
        psi = 0.0 if coefficient <= 0.0 else coefficient * log_sum / (1.0 + sim)
        if math.isinf(psi) and SUPPORT_ISOLATED not in flags:
            flags.append(SUPPORT_ISOLATED)
        eta, j = select_radius(_step_context(table, t, schedule, options, sim, log_sum))
        clamp = min(4.0 * table.n_within(eta + j) / s, 1.0)
        previous = float(schedule.ratio_bar[t - 1])
        second = n * (1.0 - 1.0 / previous) / s**2
        error = error_term(t, gamma[t - 1], gamma_tilde[t - 1], schedule, n)
        steps.append(StepBreakdown(t=t, eta=eta, c_star=Fraction(j, eta), psi_term=psi, clamp=clamp, second_term=second, error_term=error))
    trace = RadiusTrace(steps=tuple(steps))
    total = trace.total()
    delta = 0.0 if m == 0 else m * kl_to_pdp(total, epsilon) if total > 0 else 0.0
    if math.isinf(delta) and SUPPORT_ISOLATED not in flags:
        flags.append(DIVERGENT)
    return PointLeakage(
        row=tuple(int(value) for value in table.target),
        multiplicity=multiplicity,
        delta=float(delta),
        trace=trace,
        flags=tuple(flags),
    )


def per_instance_delta(
    dataset: CategoricalDataset,
    target: RowLike,
    epsilon: float,
    m: int,
    release_step: int,
    schedule: DiffusionSchedule,
    options: BoundOptions | None = None,
    gamma: Sequence[float] | None = None,
    gamma_tilde: Sequence[float] | None = None,
) -> PointLeakage:
    options = options or BoundOptions()
    _check_audit_inputs(epsilon, m, release_step, schedule)
    table = neighbor_counts(dataset, target)
    return evaluate_table(
        table,
        epsilon,
        m,
        release_step,
        schedule,
        options,
        _gamma_values(gamma, schedule.steps, "gamma"),
        _gamma_values(gamma_tilde, schedule.steps, "gamma_tilde"),
        multiplicity=dataset.count(target),
    )


def default_threads() -> int:
    return max(1, int(os.getenv("PDP_THREADS", "1")))


def audit_all(
    dataset: CategoricalDataset,
    epsilon: float,
    m: int,
    release_step: int,
    schedule: DiffusionSchedule,
    options: BoundOptions | None = None,
    gamma: Sequence[float] | None = None,
    gamma_tilde: Sequence[float] | None = None,
    threads: int | None = None,
) -> PdpReport:
    """Audit every distinct row; duplicates share one result."""
    options = options or BoundOptions()
    _check_audit_inputs(epsilon, m, release_step, schedule)
    if dataset.num_categories > schedule.num_categories:
        raise PdpInputError(f"Dataset uses k={dataset.num_categories} but the schedule was built for k={schedule.num_categories}.")
    if dataset.size < 2:
        raise PdpInputError("Auditing needs at least two rows.")
    gammas = _gamma_values(gamma, schedule.steps, "gamma")
    gammas_tilde = _gamma_values(gamma_tilde, schedule.steps, "gamma_tilde")
    logger.info(
        "Auditing %d distinct rows over t=%d..%d (the release step contributes no transition), mode=%s",
        dataset.unique_rows.shape[0],
        release_step + 1,
        schedule.steps,
        options.mode.value,
    )
    distinct, counts = dataset.unique_rows, dataset.unique_counts
    tables: List[NeighborTable] | None = None
    if subset_counting_feasible(distinct.shape[0], dataset.num_features, dataset.num_categories):
        tables = neighbor_tables(distinct, counts, dataset.num_categories)

    def audit_one(index: int) -> PointLeakage:
        if tables is not None:
            table = tables[index]
        else:
            remaining = counts.astype(np.int64)
            remaining[index] -= 1
            table = neighbor_table_from_distinct(distinct, remaining, distinct[index])
        return evaluate_table(table, epsilon, m, release_step, schedule, options, gammas, gammas_tilde, int(counts[index]))

    with ThreadPoolExecutor(max_workers=threads or default_threads()) as pool:
        results = list(pool.map(audit_one, range(distinct.shape[0])))

    ordered = sorted(results, key=lambda point: (-point.delta, point.row))
    ranked = tuple(replace(point, rank=rank) for rank, point in enumerate(ordered, start=1))
    isolated = sum(1 for point in ranked if SUPPORT_ISOLATED in point.flags)
    if isolated:
        logger.warning("%d distinct row(s) share no category with any other row in some column", isolated)
    return PdpReport(
        epsilon=epsilon,
        m=m,
        release_step=release_step,
        steps=schedule.steps,
        options=options,
        dataset_fingerprint=dataset.fingerprint,
        dataset_size=dataset.size,
        points=ranked,
        gamma=gammas,
        gamma_tilde=gammas_tilde,
    )


def extreme_points(report: PdpReport, count: int) -> Tuple[Tuple[PointLeakage, ...], Tuple[PointLeakage, ...]]:
    """(most sensitive, most private) points of a ranked report."""
    if count < 0:
        raise PdpInputError("count must be non-negative.")
    most_private = tuple(reversed(report.points[-count:])) if count else ()
    return report.points[:count], most_private


def similarity_correlation(dataset: CategoricalDataset, report: PdpReport, t: int, schedule: DiffusionSchedule) -> float:
    """Spearman ρ between δ and Sim(v, V₀ minus v) at ratio R̄_t across audited points."""
    schedule.check_step(t)
    ratio = float(schedule.ratio_bar[t])
    deltas, sims = [], []
    for point in report.points:
        table = neighbor_counts(dataset, as_row(point.row))
        deltas.append(point.delta)
        sims.append(table.similarity(ratio))
    if len(deltas) < 3:
        raise PdpInputError("A correlation needs at least three audited points.")
    rho, _ = spearmanr(deltas, sims)
    return float(rho)


__all__ = [
    "AuditMode",
    "BoundOptions",
    "DIVERGENT",
    "PdpReport",
    "PointLeakage",
    "REPORT_SCHEMA",
    "RadiusScan",
    "RadiusTrace",
    "SUPPORT_ISOLATED",
    "StepBreakdown",
    "audit_all",
    "binomial_tail_kappa",
    "default_threads",
    "error_term",
    "evaluate_table",
    "extreme_points",
    "find_c_star",
    "finite_or_none",
    "find_eta",
    "kl_to_pdp",
    "per_instance_delta",
    "psi_term",
    "select_radius",
    "similarity_correlation",
    "vartheta",
]
