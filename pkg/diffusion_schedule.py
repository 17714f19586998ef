from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from privacy_errors import PdpInputError

ALPHA_FLOOR = 1e-9
ALPHA_CEILING = 1.0 - 1e-9
DEFAULT_COSINE_OFFSET = 0.008


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    """Retention coefficients α_1..α_T of a uniform kernel over k categories.

    Arrays are indexed by timestep with index 0 standing for the clean data
    (α_0 = ᾱ_0 = 1, R̄_0 = +∞).
    """

    alpha: np.ndarray
    num_categories: int
    name: str = "custom"

    def __post_init__(self) -> None:
        values = np.asarray(self.alpha, dtype=float).reshape(-1)
        if values.size < 1:
            raise PdpInputError("A schedule needs at least one step.")
        if self.num_categories < 2:
            raise PdpInputError("A schedule needs k >= 2 categories.")
        if not np.all(np.isfinite(values)):
            raise PdpInputError("Schedule coefficients must be finite.")
        padded = np.concatenate([[1.0], np.clip(values, ALPHA_FLOOR, ALPHA_CEILING)])
        padded.setflags(write=False)
        object.__setattr__(self, "alpha", padded)

    @property
    def steps(self) -> int:
        return int(self.alpha.shape[0] - 1)

    def check_step(self, t: int, allow_zero: bool = False) -> None:
        lowest = 0 if allow_zero else 1
        if not lowest <= t <= self.steps:
            raise PdpInputError(f"Timestep {t} is outside [{lowest}, {self.steps}].")

    @cached_property
    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(self.alpha)

    @cached_property
    def mu_plus(self) -> np.ndarray:
        k = self.num_categories
        return (1.0 + (k - 1) * self.alpha) / k

    @cached_property
    def mu_minus(self) -> np.ndarray:
        return (1.0 - self.alpha) / self.num_categories

    @cached_property
    def mu_bar_plus(self) -> np.ndarray:
        k = self.num_categories
        return (1.0 + (k - 1) * self.alpha_bar) / k

    @cached_property
    def mu_bar_minus(self) -> np.ndarray:
        return (1.0 - self.alpha_bar) / self.num_categories

    @cached_property
    def ratio(self) -> np.ndarray:
        return _safe_ratio(self.mu_plus, self.mu_minus)

    @cached_property
    def ratio_bar(self) -> np.ndarray:
        return _safe_ratio(self.mu_bar_plus, self.mu_bar_minus)

    @cached_property
    def log_ratio_bar(self) -> np.ndarray:
        return np.log(self.ratio_bar)

    def coefficient(self, t: int) -> float:
        """(ᾱ_{t−1} − ᾱ_t)/(k μ̄_t^+ μ̄_t^−)."""
        self.check_step(t)
        gap = self.alpha_bar[t - 1] - self.alpha_bar[t]
        return float(gap / (self.num_categories * self.mu_bar_plus[t] * self.mu_bar_minus[t]))

    def relaxed_coefficient(self, t: int) -> float:
        """μ_t^+ (μ̄_{t−1}^+/μ̄_t^+ − μ̄_{t−1}^−/μ̄_t^−)."""
        self.check_step(t)
        keep = self.mu_bar_plus[t - 1] / self.mu_bar_plus[t]
        leave = self.mu_bar_minus[t - 1] / self.mu_bar_minus[t]
        return float(self.mu_plus[t] * (keep - leave))

    def table(self) -> pd.DataFrame:
        index = slice(1, None)
        return pd.DataFrame(
            {
                "t": np.arange(1, self.steps + 1),
                "alpha": self.alpha[index],
                "alpha_bar": self.alpha_bar[index],
                "mu_plus": self.mu_plus[index],
                "mu_minus": self.mu_minus[index],
                "mu_bar_plus": self.mu_bar_plus[index],
                "mu_bar_minus": self.mu_bar_minus[index],
                "ratio": self.ratio[index],
                "ratio_bar": self.ratio_bar[index],
            }
        )


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    positive = denominator > 0
    return np.where(positive, numerator / np.where(positive, denominator, 1.0), np.inf)


def _check_shape(steps: int, num_categories: int) -> None:
    if steps < 1:
        raise PdpInputError("T must be a positive integer.")
    if num_categories < 2:
        raise PdpInputError("k must be at least 2.")


def linear(steps: int, num_categories: int, decay: float = 1.0) -> DiffusionSchedule:
    _check_shape(steps, num_categories)
    if not 0.0 < decay <= 1.0:
        raise PdpInputError(f"Linear decay must lie in (0, 1], got {decay}.")
    t = np.arange(1, steps + 1)
    return DiffusionSchedule(alpha=1.0 - decay * t / steps, num_categories=num_categories, name=f"linear(decay={decay:g})")


def sigmoid(steps: int, num_categories: int, decay: float = 1.0) -> DiffusionSchedule:
    _check_shape(steps, num_categories)
    if decay <= 0.0:
        raise PdpInputError(f"Sigmoid decay must be positive, got {decay}.")
    t = np.arange(1, steps + 1)
    top = expit(3.0 * decay)
    alpha = (top - expit(3.0 * t / steps * decay)) / (top - 0.5)
    return DiffusionSchedule(alpha=alpha, num_categories=num_categories, name=f"sigmoid(decay={decay:g})")


def cosine(steps: int, num_categories: int, offset: float = DEFAULT_COSINE_OFFSET) -> DiffusionSchedule:
    """α_t = f(t)/f(t − 1) with f(t) = cos²(((t/T + offset)/(1 + offset))·π/2).

    The schedule clips α_t to [ALPHA_FLOOR, ALPHA_CEILING]; f(T) is numerically zero, so
    α_T sits at ALPHA_FLOOR and ᾱ_T = ᾱ_{T−1}·ALPHA_FLOOR, slightly above f(T)/f(0).
    """
    _check_shape(steps, num_categories)
    if offset <= 0.0:
        raise PdpInputError(f"Cosine offset must be positive, got {offset}.")
    t = np.arange(0, steps + 1)
    f = np.cos(((t / steps + offset) / (1.0 + offset)) * math.pi / 2.0) ** 2
    alpha_bar = f / f[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(alpha_bar[:-1] > 0, alpha_bar[1:] / np.where(alpha_bar[:-1] > 0, alpha_bar[:-1], 1.0), 0.0)
    return DiffusionSchedule(alpha=alpha, num_categories=num_categories, name=f"cosine(offset={offset:g})")


def from_alphas(alphas: Sequence[float], num_categories: int) -> DiffusionSchedule:
    return DiffusionSchedule(alpha=np.asarray(alphas, dtype=float), num_categories=num_categories)


def load_alphas(path: str | Path, num_categories: int) -> DiffusionSchedule:
    """Read α_1..α_T from a one-column CSV without a header."""
    source = Path(path)
    if not source.is_file():
        raise PdpInputError(f"Schedule file {source} does not exist.")
    try:
        frame = pd.read_csv(source, header=None)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise PdpInputError(f"Could not parse schedule file {source}: {exc}") from exc
    if frame.shape[1] != 1:
        raise PdpInputError(f"Schedule file {source} must hold exactly one column.")
    values = pd.to_numeric(frame.iloc[:, 0], errors="coerce")
    if values.isna().any():
        raise PdpInputError(f"Schedule file {source} holds non-numeric coefficients.")
    return DiffusionSchedule(alpha=values.to_numpy(dtype=float), num_categories=num_categories, name=f"custom({source.name})")


def build(kind: str, steps: int, num_categories: int, decay: float = 1.0, offset: float = DEFAULT_COSINE_OFFSET, path: str | None = None) -> DiffusionSchedule:
    if kind == "linear":
        return linear(steps, num_categories, decay)
    if kind == "sigmoid":
        return sigmoid(steps, num_categories, decay)
    if kind == "cosine":
        return cosine(steps, num_categories, offset)
    if kind == "custom":
        if not path:
            raise PdpInputError("A custom schedule needs --alpha-file.")
        return load_alphas(path, num_categories)
    raise PdpInputError(f"Unknown schedule {kind!r}.")


__all__ = [
    "ALPHA_CEILING",
    "ALPHA_FLOOR",
    "DEFAULT_COSINE_OFFSET",
    "DiffusionSchedule",
    "build",
    "cosine",
    "from_alphas",
    "linear",
    "load_alphas",
    "sigmoid",
]
