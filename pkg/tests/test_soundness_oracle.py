"""Compare the analytic leakage bounds with exact enumeration on tiny datasets."""

from __future__ import annotations

import unittest
from typing import Tuple

import numpy as np

from categorical_dataset import CategoricalDataset
from ddm_core import coupled_conditional_kl, exact_generated_distribution, exact_pdp_delta, symmetric_kl
from diffusion_schedule import DiffusionSchedule, linear, sigmoid
from pdp_bound import AuditMode, BoundOptions, audit_all, kl_to_pdp, per_instance_delta

EPSILON = 1.0
INSTANCES = 120


def _tiny() -> CategoricalDataset:
    rows = [[0, 0]] * 6 + [[0, 1]] * 3 + [[1, 0]] * 2 + [[1, 1]]
    return CategoricalDataset.from_rows(rows, num_categories=2)


def _random_instance(rng: np.random.Generator) -> Tuple[CategoricalDataset, Tuple[int, ...], DiffusionSchedule]:
    """Two columns, k in {2, 3}, s in [5, 50], T in [3, 10]."""
    k = int(rng.integers(2, 4))
    size = int(rng.integers(5, 51))
    steps = int(rng.integers(3, 11))
    schedule = sigmoid(steps, k) if rng.random() < 0.5 else linear(steps, k)
    dataset = CategoricalDataset.from_rows(rng.integers(0, k, size=(size, 2)), num_categories=k)
    return dataset, tuple(int(value) for value in dataset.rows[int(rng.integers(0, size))]), schedule


class ExactOracleTest(unittest.TestCase):
    def _exact_pair(self, dataset: CategoricalDataset, row, schedule):
        with_row = exact_generated_distribution(dataset, 0, schedule)
        without_row = exact_generated_distribution(dataset.without_one(row), 0, schedule)
        return with_row, without_row

    def test_exact_delta_respects_divergence_conversion(self) -> None:
        dataset = _tiny()
        schedule = sigmoid(10, 2)
        for row in dataset.unique_rows:
            first, second = self._exact_pair(dataset, row, schedule)
            divergence = symmetric_kl(first, second)
            for epsilon in (0.1, 1.0, 10.0):
                self.assertLessEqual(exact_pdp_delta(first, second, epsilon), kl_to_pdp(divergence, epsilon) + 1e-12)

    def test_bound_dominates_exact_leakage(self) -> None:
        dataset = _tiny()
        for schedule in (sigmoid(10, 2), linear(10, 2)):
            for mode in AuditMode:
                report = audit_all(dataset, EPSILON, 1, 0, schedule, BoundOptions(mode=mode))
                for point in report.points:
                    first, second = self._exact_pair(dataset, point.row, schedule)
                    with self.subTest(schedule=schedule.name, mode=mode.value, row=point.row):
                        self.assertLessEqual(exact_pdp_delta(first, second, EPSILON), point.delta + 1e-12)

    def test_step_terms_cover_coupled_divergence(self) -> None:
        rng = np.random.default_rng(2024)
        for instance in range(INSTANCES):
            dataset, row, schedule = _random_instance(rng)
            reduced = dataset.without_one(row)
            coupled = {t: coupled_conditional_kl(dataset, reduced, t, schedule) for t in range(1, schedule.steps + 1)}
            for mode in AuditMode:
                point = per_instance_delta(dataset, row, EPSILON, 1, 0, schedule, BoundOptions(mode=mode))
                for step in point.trace.steps:
                    first, second = coupled[step.t]
                    with self.subTest(instance=instance, mode=mode.value, t=step.t):
                        self.assertGreaterEqual(step.main_term, first + second - 1e-12)

    def test_exact_delta_respects_conversion_on_random_instances(self) -> None:
        rng = np.random.default_rng(7)
        for instance in range(INSTANCES):
            dataset, row, schedule = _random_instance(rng)
            first, second = self._exact_pair(dataset, row, schedule)
            divergence = symmetric_kl(first, second)
            for epsilon in (0.1, 1.0, 10.0):
                with self.subTest(instance=instance, epsilon=epsilon):
                    self.assertLessEqual(exact_pdp_delta(first, second, epsilon), kl_to_pdp(divergence, epsilon) + 1e-12)
            for mode in AuditMode:
                point = per_instance_delta(dataset, row, EPSILON, 1, 0, schedule, BoundOptions(mode=mode))
                with self.subTest(instance=instance, mode=mode.value):
                    self.assertLessEqual(exact_pdp_delta(first, second, EPSILON), point.delta + 1e-12)

    def test_rare_rows_leak_more_than_common_rows(self) -> None:
        dataset = _tiny()
        schedule = sigmoid(10, 2)
        rare = exact_pdp_delta(*self._exact_pair(dataset, [1, 1], schedule), EPSILON)
        common = exact_pdp_delta(*self._exact_pair(dataset, [0, 0], schedule), EPSILON)
        self.assertGreater(rare, common)


if __name__ == "__main__":  # pragma: no cover
    unittest.main()
