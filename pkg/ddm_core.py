from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple, Union

import numpy as np
from scipy.special import rel_entr

from categorical_dataset import CategoricalDataset, RowLike, as_row
from diffusion_schedule import DiffusionSchedule
from privacy_errors import EnumerationLimitError, PdpInputError

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 4096
STATE_ENCODING = "row-major mixed radix over k^n states, column 0 most significant"
GENERATION_BLOCK = 1024
_WORK_BUDGET = 4_000_000


def enumeration_cap() -> int:
    return int(os.getenv("PDP_ENUMERATION_CAP", str(DEFAULT_ENUMERATION_CAP)))


def forward_marginal_prob(source: int, target: int, t: int, schedule: DiffusionSchedule) -> float:
    """q(v_tⁱ = target | v_0ⁱ = source)."""
    schedule.check_step(t)
    return float(schedule.mu_bar_plus[t] if source == target else schedule.mu_bar_minus[t])


@dataclass(frozen=True)
class PosteriorCase:
    """The five values of q(v_{t−1}ⁱ | v_tⁱ, v_0ⁱ), keyed by which of the three coincide."""

    keep_at_origin: float
    keep_away: float
    leave_origin: float
    return_to_origin: float
    wander: float


def posterior_cases(t: int, schedule: DiffusionSchedule) -> PosteriorCase:
    schedule.check_step(t)
    mu_plus, mu_minus = schedule.mu_plus[t], schedule.mu_minus[t]
    prev_plus, prev_minus = schedule.mu_bar_plus[t - 1], schedule.mu_bar_minus[t - 1]
    cum_plus, cum_minus = schedule.mu_bar_plus[t], schedule.mu_bar_minus[t]
    return PosteriorCase(
        keep_at_origin=float(mu_plus * prev_plus / cum_plus),
        keep_away=float(mu_plus * prev_minus / cum_minus),
        leave_origin=float(mu_minus * prev_minus / cum_plus),
        return_to_origin=float(mu_minus * prev_plus / cum_minus),
        wander=float(mu_minus * prev_minus / cum_minus),
    )


def posterior_tensor(t: int, schedule: DiffusionSchedule) -> np.ndarray:
    """P[v_t, v_0, a] = q(v_{t−1} = a | v_t, v_0) for one column."""
    schedule.check_step(t)
    same = np.eye(schedule.num_categories, dtype=bool)
    step = np.where(same, schedule.mu_plus[t], schedule.mu_minus[t])
    previous = np.where(same, schedule.mu_bar_plus[t - 1], schedule.mu_bar_minus[t - 1])
    cumulative = np.where(same, schedule.mu_bar_plus[t], schedule.mu_bar_minus[t])
    return step.T[:, None, :] * previous[None, :, :] / cumulative.T[:, :, None]


def posterior(current: int, origin: int, t: int, schedule: DiffusionSchedule) -> np.ndarray:
    k = schedule.num_categories
    if not (0 <= current < k and 0 <= origin < k):
        raise PdpInputError(f"Categories must lie in [0, {k}).")
    return posterior_tensor(t, schedule)[current, origin].copy()


class EmpiricalDenoiser:
    """Exact Bayes posterior q(v_0ⁱ | v_t) under a uniform prior over the rows of a dataset."""

    def __init__(self, dataset: CategoricalDataset, schedule: DiffusionSchedule) -> None:
        if dataset.num_categories > schedule.num_categories:
            raise PdpInputError(
                f"Dataset uses k={dataset.num_categories} but the schedule was built for k={schedule.num_categories}."
            )
        self.dataset = dataset
        self.schedule = schedule
        rows = dataset.unique_rows
        distinct, n = rows.shape
        k = schedule.num_categories
        self._rows = rows
        self._log_counts = np.log(dataset.unique_counts.astype(float))
        one_hot = np.zeros((distinct, n, k))
        one_hot[np.arange(distinct)[:, None], np.arange(n)[None, :], rows] = 1.0
        self._one_hot = one_hot.reshape(distinct, n * k)
        self._block = max(1, _WORK_BUDGET // max(1, distinct * n))

    def _check_states(self, states: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(np.asarray(states, dtype=np.int64))
        if values.shape[1] != self.dataset.num_features:
            raise PdpInputError(f"States must have {self.dataset.num_features} entries.")
        if values.min() < 0 or values.max() >= self.schedule.num_categories:
            raise PdpInputError(f"State entries must lie in [0, {self.schedule.num_categories}).")
        return values

    def _posteriors(self, states: np.ndarray, t: int) -> np.ndarray:
        log_ratio = self.schedule.log_ratio_bar[t]
        distances = np.count_nonzero(states[:, None, :] != self._rows[None, :, :], axis=2)
        log_weights = self._log_counts[None, :] - distances * log_ratio
        log_weights -= log_weights.max(axis=1, keepdims=True)
        weights = np.exp(log_weights)
        weights /= weights.sum(axis=1, keepdims=True)
        n, k = self.dataset.num_features, self.schedule.num_categories
        return (weights @ self._one_hot).reshape(states.shape[0], n, k)

    def column_posteriors(self, states: np.ndarray, t: int) -> np.ndarray:
        """Shape (b, n, k): P(v_0ⁱ = l | v_t) for every state, column and category."""
        self.schedule.check_step(t)
        values = self._check_states(states)
        parts = [self._posteriors(values[i : i + self._block], t) for i in range(0, values.shape[0], self._block)]
        return np.concatenate(parts, axis=0)

    def reverse_distributions(self, states: np.ndarray, t: int) -> np.ndarray:
        """Shape (b, n, k): P(v_{t−1}ⁱ = a | v_t) as in the dimension-wise reverse step."""
        values = self._check_states(states)
        denoised = self.column_posteriors(values, t)
        gathered = posterior_tensor(t, self.schedule)[values]
        return np.einsum("bnl,bnla->bna", denoised, gathered)


def empirical_denoiser(dataset: CategoricalDataset, current: RowLike, t: int, column: int, schedule: DiffusionSchedule) -> np.ndarray:
    state = as_row(current, dataset.num_features)
    if not 0 <= column < dataset.num_features:
        raise PdpInputError(f"Column {column} is outside [0, {dataset.num_features}).")
    return EmpiricalDenoiser(dataset, schedule).column_posteriors(state[None, :], t)[0, column]


def reverse_step(dataset: CategoricalDataset, current: RowLike, t: int, schedule: DiffusionSchedule) -> np.ndarray:
    state = as_row(current, dataset.num_features)
    return EmpiricalDenoiser(dataset, schedule).reverse_distributions(state[None, :], t)[0]


def _draw(probabilities: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probabilities, axis=-1)
    choice = np.count_nonzero(cdf <= uniforms[..., None], axis=-1)
    return np.minimum(choice, probabilities.shape[-1] - 1).astype(np.int64)


def generate(
    dataset: CategoricalDataset,
    count: int,
    release_step: int,
    schedule: DiffusionSchedule,
    seed: int | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Draw ``count`` samples at ``release_step``; each sample owns one child seed stream."""
    if count < 0:
        raise PdpInputError("The number of samples must be non-negative.")
    schedule.check_step(release_step, allow_zero=True)
    n, k = dataset.num_features, schedule.num_categories
    if count == 0:
        return np.zeros((0, n), dtype=np.int64)
    model = EmpiricalDenoiser(dataset, schedule)
    children = np.random.SeedSequence(seed).spawn(count)
    steps = list(range(schedule.steps, release_step, -1))

    def run_block(start: int) -> np.ndarray:
        streams = children[start : start + GENERATION_BLOCK]
        uniforms = np.stack([np.random.default_rng(child).random((len(steps) + 1, n)) for child in streams])
        states = np.minimum((uniforms[:, 0, :] * k).astype(np.int64), k - 1)
        for offset, t in enumerate(steps, start=1):
            states = _draw(model.reverse_distributions(states, t), uniforms[:, offset, :])
        return states

    starts = range(0, count, GENERATION_BLOCK)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        blocks = list(pool.map(run_block, starts))
    return np.concatenate(blocks, axis=0)


@dataclass(frozen=True, eq=False)
class ExactChainDistribution:
    """Probability of every state of X^n at one step of the generation chain."""

    release_step: int
    probabilities: np.ndarray
    num_features: int
    num_categories: int
    dataset_fingerprint: str

    def state_index(self, row: RowLike) -> int:
        values = as_row(row, self.num_features)
        return int(np.ravel_multi_index(tuple(values), (self.num_categories,) * self.num_features))

    def probability_of(self, row: RowLike) -> float:
        return float(self.probabilities[self.state_index(row)])

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "release_step": self.release_step,
            "num_features": self.num_features,
            "num_categories": self.num_categories,
            "dataset_fingerprint": self.dataset_fingerprint,
            "encoding": STATE_ENCODING,
            "probabilities": {str(index): float(value) for index, value in enumerate(self.probabilities)},
        }


def _check_enumerable(num_features: int, num_categories: int, cap: int | None) -> int:
    limit = enumeration_cap() if cap is None else cap
    states = num_categories**num_features
    if states > limit:
        logger.warning("Refusing exact enumeration of %d states (cap %d)", states, limit)
        raise EnumerationLimitError(
            f"Exact enumeration needs k^n = {num_categories}^{num_features} = {states} states, above the cap of {limit}."
        )
    return states


def all_states(num_features: int, num_categories: int) -> np.ndarray:
    shape = (num_categories,) * num_features
    return np.stack(np.unravel_index(np.arange(num_categories**num_features), shape), axis=1).astype(np.int64)


def _transition_rows(distributions: np.ndarray, states: np.ndarray) -> np.ndarray:
    block = np.ones((distributions.shape[0], states.shape[0]))
    for column in range(states.shape[1]):
        block *= distributions[:, column, :][:, states[:, column]]
    return block


def transition_matrix(dataset: CategoricalDataset, t: int, schedule: DiffusionSchedule, cap: int | None = None) -> np.ndarray:
    """Row v_t holds the product reverse-step distribution over all states v_{t−1}."""
    _check_enumerable(dataset.num_features, schedule.num_categories, cap)
    states = all_states(dataset.num_features, schedule.num_categories)
    distributions = EmpiricalDenoiser(dataset, schedule).reverse_distributions(states, t)
    return _transition_rows(distributions, states)


def exact_generated_distribution(
    dataset: CategoricalDataset,
    release_step: int,
    schedule: DiffusionSchedule,
    cap: int | None = None,
) -> ExactChainDistribution:
    total = _check_enumerable(dataset.num_features, schedule.num_categories, cap)
    schedule.check_step(release_step, allow_zero=True)
    states = all_states(dataset.num_features, schedule.num_categories)
    model = EmpiricalDenoiser(dataset, schedule)
    probabilities = np.full(total, 1.0 / total)
    block = max(1, _WORK_BUDGET // max(1, total))
    for t in range(schedule.steps, release_step, -1):
        distributions = model.reverse_distributions(states, t)
        following = np.zeros(total)
        for start in range(0, total, block):
            rows = _transition_rows(distributions[start : start + block], states)
            following += probabilities[start : start + block] @ rows
        probabilities = following
    return ExactChainDistribution(
        release_step=release_step,
        probabilities=probabilities,
        num_features=dataset.num_features,
        num_categories=schedule.num_categories,
        dataset_fingerprint=dataset.fingerprint,
    )


def forward_marginal(dataset: CategoricalDataset, t: int, schedule: DiffusionSchedule, cap: int | None = None) -> np.ndarray:
    """q(v_t) over every state when v_0 is drawn uniformly from the rows of ``dataset``."""
    _check_enumerable(dataset.num_features, schedule.num_categories, cap)
    schedule.check_step(t, allow_zero=True)
    states = all_states(dataset.num_features, schedule.num_categories)
    n = dataset.num_features
    distances = np.count_nonzero(states[:, None, :] != dataset.unique_rows[None, :, :], axis=2)
    kernel = schedule.mu_bar_plus[t] ** (n - distances) * schedule.mu_bar_minus[t] ** distances
    return kernel @ dataset.unique_counts.astype(float) / dataset.size


ProbabilityVector = Union[ExactChainDistribution, np.ndarray]


def _vector(distribution: ProbabilityVector) -> np.ndarray:
    if isinstance(distribution, ExactChainDistribution):
        return distribution.probabilities
    return np.asarray(distribution, dtype=float)


def symmetric_kl(first: ProbabilityVector, second: ProbabilityVector) -> float:
    p, q = _vector(first), _vector(second)
    if p.shape != q.shape:
        raise PdpInputError("Distributions live on different state spaces.")
    return float(rel_entr(p, q).sum() + rel_entr(q, p).sum())


def exact_pdp_delta(first: ProbabilityVector, second: ProbabilityVector, epsilon: float) -> float:
    """Smallest δ for which both directions of the (ε, δ) inequality hold on every event."""
    if epsilon <= 0:
        raise PdpInputError("epsilon must be positive.")
    if isinstance(first, ExactChainDistribution) and isinstance(second, ExactChainDistribution):
        if (first.num_features, first.num_categories) != (second.num_features, second.num_categories):
            raise PdpInputError("Distributions live on different state spaces.")
    p, q = _vector(first), _vector(second)
    if p.shape != q.shape:
        raise PdpInputError("Distributions live on different state spaces.")
    scale = np.exp(epsilon)
    forward = np.clip(p - scale * q, 0.0, None).sum()
    backward = np.clip(q - scale * p, 0.0, None).sum()
    return float(max(forward, backward))


def coupled_conditional_kl(
    first: CategoricalDataset,
    second: CategoricalDataset,
    t: int,
    schedule: DiffusionSchedule,
    cap: int | None = None,
) -> Tuple[float, float]:
    """Exact (𝔅₁, 𝔅₂) at step t for the reverse conditionals of two datasets.

    𝔅₁ = E_{q₀}[Σ_i KL(p₀‖p₁) + KL(p₁‖p₀)] and 𝔅₂ = E_{q₁ − q₀}[Σ_i KL(p₁‖p₀)], with q the
    forward marginals at step t and p the per-column reverse conditionals.
    """
    if first.num_features != second.num_features:
        raise PdpInputError("Datasets must share the feature count.")
    _check_enumerable(first.num_features, schedule.num_categories, cap)
    states = all_states(first.num_features, schedule.num_categories)
    q0 = forward_marginal(first, t, schedule, cap)
    q1 = forward_marginal(second, t, schedule, cap)
    p0 = EmpiricalDenoiser(first, schedule).reverse_distributions(states, t)
    p1 = EmpiricalDenoiser(second, schedule).reverse_distributions(states, t)
    forward = rel_entr(p0, p1).sum(axis=(1, 2))
    backward = rel_entr(p1, p0).sum(axis=(1, 2))
    if not (np.all(np.isfinite(forward)) and np.all(np.isfinite(backward))):
        return float("inf"), 0.0
    first_term = float(q0 @ (forward + backward))
    second_term = float((q1 - q0) @ backward)
    return first_term, second_term


def marginal_gap(dataset: CategoricalDataset, t: int, schedule: DiffusionSchedule, cap: int | None = None) -> float:
    """Total variation between the forward marginal and the generation chain at step t."""
    forward = forward_marginal(dataset, t, schedule, cap)
    backward = exact_generated_distribution(dataset, t, schedule, cap).probabilities
    return float(0.5 * np.abs(forward - backward).sum())


def total_variation_to_uniform(distribution: np.ndarray) -> float:
    values = np.asarray(distribution, dtype=float)
    return float(0.5 * np.abs(values - 1.0 / values.shape[0]).sum())


__all__: List[str] = [
    "DEFAULT_ENUMERATION_CAP",
    "EmpiricalDenoiser",
    "ExactChainDistribution",
    "PosteriorCase",
    "STATE_ENCODING",
    "all_states",
    "coupled_conditional_kl",
    "empirical_denoiser",
    "enumeration_cap",
    "exact_generated_distribution",
    "exact_pdp_delta",
    "forward_marginal",
    "forward_marginal_prob",
    "generate",
    "marginal_gap",
    "posterior",
    "posterior_cases",
    "posterior_tensor",
    "reverse_step",
    "symmetric_kl",
    "total_variation_to_uniform",
    "transition_matrix",
]
