from __future__ import annotations

import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from categorical_dataset import CategoricalDataset
from ddm_core import (
    EmpiricalDenoiser,
    all_states,
    coupled_conditional_kl,
    empirical_denoiser,
    exact_generated_distribution,
    exact_pdp_delta,
    forward_marginal,
    forward_marginal_prob,
    generate,
    marginal_gap,
    posterior,
    posterior_cases,
    posterior_tensor,
    reverse_step,
    symmetric_kl,
    total_variation_to_uniform,
    transition_matrix,
)
from diffusion_schedule import linear, sigmoid
from privacy_errors import EnumerationLimitError, PdpInputError


def _small_dataset() -> CategoricalDataset:
    return CategoricalDataset.from_rows([[0, 0], [0, 1], [1, 1], [0, 0]], num_categories=2)


class KernelTest(unittest.TestCase):
    @given(st.integers(min_value=2, max_value=6), st.integers(min_value=1, max_value=15), st.data())
    @settings(max_examples=50, deadline=None)
    def test_posterior_is_a_distribution(self, k, steps, data) -> None:
        schedule = sigmoid(steps, k)
        t = data.draw(st.integers(min_value=1, max_value=steps))
        tensor = posterior_tensor(t, schedule)
        self.assertEqual(tensor.shape, (k, k, k))
        np.testing.assert_allclose(tensor.sum(axis=2), 1.0, atol=1e-9)
        self.assertTrue(np.all(tensor >= 0.0))

    def test_posterior_cases_match_tensor(self) -> None:
        schedule = linear(10, 3)
        cases = posterior_cases(4, schedule)
        self.assertAlmostEqual(posterior(0, 0, 4, schedule)[0], cases.keep_at_origin)
        self.assertAlmostEqual(posterior(0, 0, 4, schedule)[1], cases.leave_origin)
        self.assertAlmostEqual(posterior(0, 1, 4, schedule)[0], cases.keep_away)
        self.assertAlmostEqual(posterior(0, 1, 4, schedule)[1], cases.return_to_origin)
        self.assertAlmostEqual(posterior(0, 1, 4, schedule)[2], cases.wander)

    def test_first_step_posterior_returns_to_origin(self) -> None:
        schedule = linear(10, 3)
        np.testing.assert_allclose(posterior(2, 1, 1, schedule), [0.0, 1.0, 0.0], atol=1e-12)

    def test_forward_marginal_prob_uses_cumulative_kernel(self) -> None:
        schedule = linear(10, 4)
        self.assertAlmostEqual(forward_marginal_prob(1, 1, 3, schedule), schedule.mu_bar_plus[3])
        self.assertAlmostEqual(forward_marginal_prob(1, 2, 3, schedule), schedule.mu_bar_minus[3])

    def test_posterior_rejects_out_of_range_category(self) -> None:
        with self.assertRaises(PdpInputError):
            posterior(3, 0, 1, linear(5, 3))


class DenoiserTest(unittest.TestCase):
    def test_single_row_dataset_denoises_to_that_row(self) -> None:
        dataset = CategoricalDataset.from_rows([[1, 0, 2]], num_categories=3)
        schedule = linear(10, 3)
        for column, value in enumerate([1, 0, 2]):
            np.testing.assert_allclose(
                empirical_denoiser(dataset, [0, 0, 0], 6, column, schedule),
                np.eye(3)[value],
                atol=1e-12,
            )

    def test_reverse_distributions_are_normalised(self) -> None:
        dataset = _small_dataset()
        schedule = linear(8, 2)
        states = all_states(2, 2)
        distributions = EmpiricalDenoiser(dataset, schedule).reverse_distributions(states, 5)
        np.testing.assert_allclose(distributions.sum(axis=2), 1.0, atol=1e-12)
        np.testing.assert_allclose(reverse_step(dataset, [1, 0], 5, schedule), distributions[2])

    def test_duplicates_weigh_the_posterior(self) -> None:
        schedule = linear(8, 2)
        single = CategoricalDataset.from_rows([[0], [1]], num_categories=2)
        doubled = CategoricalDataset.from_rows([[0], [0], [1]], num_categories=2)
        once = empirical_denoiser(single, [1], 8, 0, schedule)
        twice = empirical_denoiser(doubled, [1], 8, 0, schedule)
        self.assertGreater(twice[0], once[0])

    def test_transition_rows_sum_to_one(self) -> None:
        matrix = transition_matrix(_small_dataset(), 3, linear(8, 2))
        self.assertEqual(matrix.shape, (4, 4))
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-12)

    def test_dataset_wider_than_schedule_is_rejected(self) -> None:
        dataset = CategoricalDataset.from_rows([[0, 2]], num_categories=3)
        with self.assertRaises(PdpInputError):
            EmpiricalDenoiser(dataset, linear(5, 2))


class GenerationTest(unittest.TestCase):
    def test_seeded_generation_is_reproducible_across_threads(self) -> None:
        dataset = _small_dataset()
        schedule = linear(6, 2)
        first = generate(dataset, 50, 0, schedule, seed=3, threads=1)
        second = generate(dataset, 50, 0, schedule, seed=3, threads=4)
        self.assertEqual(first.shape, (50, 2))
        np.testing.assert_array_equal(first, second)

    def test_prefix_of_larger_run_matches_smaller_run(self) -> None:
        dataset = _small_dataset()
        schedule = linear(6, 2)
        np.testing.assert_array_equal(
            generate(dataset, 10, 0, schedule, seed=9),
            generate(dataset, 30, 0, schedule, seed=9)[:10],
        )

    def test_zero_samples(self) -> None:
        self.assertEqual(generate(_small_dataset(), 0, 0, linear(4, 2), seed=1).shape, (0, 2))

    def test_release_step_outside_chain_is_rejected(self) -> None:
        with self.assertRaises(PdpInputError):
            generate(_small_dataset(), 5, 9, linear(4, 2), seed=1)

    def test_sampler_matches_exact_distribution(self) -> None:
        dataset = _small_dataset()
        schedule = linear(5, 2)
        exact = exact_generated_distribution(dataset, 0, schedule)
        samples = generate(dataset, 6000, 0, schedule, seed=21)
        indices = np.ravel_multi_index(tuple(samples.T), (2, 2))
        empirical = np.bincount(indices, minlength=4) / samples.shape[0]
        self.assertLess(0.5 * np.abs(empirical - exact.probabilities).sum(), 0.05)


class ExactDistributionTest(unittest.TestCase):
    def test_generated_distribution_sums_to_one(self) -> None:
        exact = exact_generated_distribution(_small_dataset(), 0, sigmoid(10, 2))
        self.assertAlmostEqual(float(exact.probabilities.sum()), 1.0, places=9)
        self.assertEqual(exact.state_index([1, 0]), 2)
        self.assertEqual(exact.to_json_dict()["num_features"], 2)

    def test_release_at_last_step_is_uniform(self) -> None:
        exact = exact_generated_distribution(_small_dataset(), 5, linear(5, 2))
        self.assertAlmostEqual(total_variation_to_uniform(exact.probabilities), 0.0, places=12)

    def test_chain_starts_from_noise_at_last_step(self) -> None:
        self.assertLess(marginal_gap(_small_dataset(), 5, linear(5, 2)), 1e-6)

    def test_forward_marginal_is_a_distribution(self) -> None:
        marginal = forward_marginal(_small_dataset(), 3, linear(8, 2))
        self.assertAlmostEqual(float(marginal.sum()), 1.0, places=12)
        np.testing.assert_allclose(forward_marginal(_small_dataset(), 0, linear(8, 2)), [0.5, 0.25, 0.0, 0.25])

    def test_enumeration_cap_is_enforced(self) -> None:
        with self.assertRaises(EnumerationLimitError):
            exact_generated_distribution(_small_dataset(), 0, linear(5, 2), cap=3)


class DivergenceTest(unittest.TestCase):
    def test_identical_distributions(self) -> None:
        p = np.array([0.2, 0.3, 0.5])
        self.assertEqual(exact_pdp_delta(p, p, 0.5), 0.0)
        self.assertAlmostEqual(symmetric_kl(p, p), 0.0)

    def test_disjoint_distributions_leak_everything(self) -> None:
        self.assertAlmostEqual(exact_pdp_delta([1.0, 0.0], [0.0, 1.0], 2.0), 1.0)

    def test_delta_takes_worse_direction(self) -> None:
        p = np.array([0.9, 0.1])
        q = np.array([0.5, 0.5])
        scale = np.exp(0.1)
        expected = max(0.9 - scale * 0.5, 0.5 - scale * 0.1)
        self.assertAlmostEqual(exact_pdp_delta(p, q, 0.1), expected)

    def test_delta_shrinks_with_epsilon(self) -> None:
        p = np.array([0.7, 0.2, 0.1])
        q = np.array([0.4, 0.4, 0.2])
        self.assertGreaterEqual(exact_pdp_delta(p, q, 0.1), exact_pdp_delta(p, q, 0.5))

    def test_epsilon_must_be_positive(self) -> None:
        with self.assertRaises(PdpInputError):
            exact_pdp_delta([0.5, 0.5], [0.5, 0.5], 0.0)

    def test_coupled_kl_vanishes_for_identical_datasets(self) -> None:
        first, second = coupled_conditional_kl(_small_dataset(), _small_dataset(), 3, linear(6, 2))
        self.assertAlmostEqual(first, 0.0)
        self.assertAlmostEqual(second, 0.0)

    def test_coupled_kl_is_positive_for_neighbours(self) -> None:
        dataset = _small_dataset()
        first, _ = coupled_conditional_kl(dataset, dataset.without_one([1, 1]), 3, linear(6, 2))
        self.assertGreater(first, 0.0)


if __name__ == "__main__":  # pragma: no cover
    unittest.main()
