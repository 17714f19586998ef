from __future__ import annotations

import tempfile
import unittest
from pathlib import Path

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from diffusion_schedule import ALPHA_FLOOR, build, cosine, from_alphas, linear, load_alphas, sigmoid
from privacy_errors import PdpInputError


class ScheduleQuantitiesTest(unittest.TestCase):
    def test_index_zero_is_clean_data(self) -> None:
        schedule = linear(10, 3)
        self.assertEqual(schedule.steps, 10)
        self.assertEqual(schedule.alpha[0], 1.0)
        self.assertEqual(schedule.alpha_bar[0], 1.0)
        self.assertTrue(np.isinf(schedule.ratio_bar[0]))

    def test_linear_coefficients_are_clipped(self) -> None:
        schedule = linear(4, 2)
        np.testing.assert_allclose(schedule.alpha[1:4], [0.75, 0.5, 0.25])
        self.assertEqual(schedule.alpha[4], ALPHA_FLOOR)

    @given(
        st.sampled_from(["linear", "sigmoid", "cosine"]),
        st.integers(min_value=1, max_value=60),
        st.integers(min_value=2, max_value=9),
    )
    @settings(max_examples=60, deadline=None)
    def test_kernel_rows_are_distributions(self, kind, steps, k) -> None:
        schedule = build(kind, steps, k)
        np.testing.assert_allclose(schedule.mu_plus + (k - 1) * schedule.mu_minus, 1.0)
        np.testing.assert_allclose(schedule.mu_bar_plus + (k - 1) * schedule.mu_bar_minus, 1.0)
        self.assertTrue(np.all(np.diff(schedule.alpha_bar) <= 0))
        self.assertTrue(np.all(schedule.ratio_bar[1:] >= 1.0))
        self.assertTrue(np.all(np.diff(schedule.ratio_bar[1:]) <= 1e-9 * schedule.ratio_bar[1:-1]))

    def test_relaxed_coefficient_scales_coefficient(self) -> None:
        schedule = sigmoid(12, 4)
        for t in range(1, schedule.steps + 1):
            self.assertAlmostEqual(
                schedule.relaxed_coefficient(t),
                schedule.mu_plus[t] * schedule.coefficient(t),
                places=9,
            )

    def test_coefficient_rejects_step_zero(self) -> None:
        with self.assertRaises(PdpInputError):
            linear(5, 2).coefficient(0)

    def test_table_lists_every_step(self) -> None:
        table = cosine(7, 3).table()
        self.assertEqual(table["t"].tolist(), list(range(1, 8)))
        self.assertIn("ratio_bar", table.columns)


class ScheduleFamiliesTest(unittest.TestCase):
    def test_sigmoid_starts_near_one_and_ends_near_zero(self) -> None:
        schedule = sigmoid(50, 2)
        self.assertGreater(schedule.alpha[1], 0.9)
        self.assertLess(schedule.alpha_bar[-1], 1e-6)

    def test_cosine_final_step_is_clipped(self) -> None:
        schedule = cosine(30, 5)
        f = np.cos(((np.arange(31) / 30 + 0.008) / 1.008) * np.pi / 2.0) ** 2
        self.assertEqual(schedule.alpha[-1], ALPHA_FLOOR)
        self.assertAlmostEqual(schedule.alpha_bar[-1], schedule.alpha_bar[-2] * ALPHA_FLOOR)
        self.assertGreater(schedule.alpha_bar[-1], f[-1] / f[0])

    def test_larger_decay_injects_more_noise(self) -> None:
        gentle = linear(20, 2, decay=0.3)
        harsh = linear(20, 2, decay=0.9)
        self.assertTrue(np.all(harsh.alpha_bar[1:] < gentle.alpha_bar[1:]))

    def test_cosine_alpha_bar_decreases_to_zero(self) -> None:
        schedule = cosine(30, 5)
        self.assertTrue(np.all(np.diff(schedule.alpha_bar) <= 0))
        self.assertLess(schedule.alpha_bar[-1], 1e-6)

    def test_invalid_parameters(self) -> None:
        with self.assertRaises(PdpInputError):
            linear(10, 2, decay=1.5)
        with self.assertRaises(PdpInputError):
            sigmoid(10, 2, decay=0.0)
        with self.assertRaises(PdpInputError):
            linear(0, 2)
        with self.assertRaises(PdpInputError):
            linear(10, 1)
        with self.assertRaises(PdpInputError):
            build("quadratic", 10, 2)
        with self.assertRaises(PdpInputError):
            build("custom", 10, 2)

    def test_from_alphas_rejects_non_finite(self) -> None:
        with self.assertRaises(PdpInputError):
            from_alphas([0.5, float("nan")], 2)


class AlphaFileTest(unittest.TestCase):
    def test_load_alphas_reads_single_column(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "alphas.csv"
            path.write_text("0.9\n0.5\n0.1\n", encoding="utf-8")
            schedule = load_alphas(path, 3)
        np.testing.assert_allclose(schedule.alpha[1:], [0.9, 0.5, 0.1])
        self.assertEqual(schedule.num_categories, 3)
        self.assertIn("alphas.csv", schedule.name)

    def test_load_alphas_rejects_bad_files(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            wide = Path(directory) / "wide.csv"
            wide.write_text("0.9,0.8\n0.5,0.4\n", encoding="utf-8")
            words = Path(directory) / "words.csv"
            words.write_text("0.9\nhigh\n", encoding="utf-8")
            with self.assertRaises(PdpInputError):
                load_alphas(wide, 2)
            with self.assertRaises(PdpInputError):
                load_alphas(words, 2)
        with self.assertRaises(PdpInputError):
            load_alphas("/nonexistent/alphas.csv", 2)


if __name__ == "__main__":  # pragma: no cover
    unittest.main()
