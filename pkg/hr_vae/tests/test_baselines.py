# -*- coding: utf-8 -*-
import unittest

import numpy as np

from hr_vae.exceptions import ContractError
from hr_vae.models.baselines import AnnealSchedule, anneal_weight, encode_last_state
from hr_vae.models.hr_vae import HrVae, ModelConfig, kl_diag_gaussian_vs_standard
from hr_vae.models.training import forward_loss
from hr_vae.models.vocab import EOS, Batch


class TestAnnealSchedule(unittest.TestCase):
    """KL weight schedules of the last-state baseline."""

    def test_01_sigmoid_midpoint(self):
        """The sigmoid schedule is exactly one half at its midpoint."""
        self.assertEqual(anneal_weight(AnnealSchedule(), 2000), 0.5)

    def test_02_sigmoid_asymptote_and_start(self):
        """The weight starts near 4.5e-5 and approaches 1."""
        schedule = AnnealSchedule(midpoint_step=2000, steepness=0.005)
        self.assertAlmostEqual(anneal_weight(schedule, 0), 1.0 / (1.0 + np.exp(10.0)), places=15)
        self.assertLess(anneal_weight(schedule, 0), 0.01)
        self.assertGreater(anneal_weight(schedule, 100000), 1.0 - 1e-12)

    def test_03_sigmoid_is_monotone(self):
        """Weights never decrease with the step and stay inside [0, 1]."""
        schedule = AnnealSchedule(midpoint_step=500, steepness=0.05)
        weights = [anneal_weight(schedule, step) for step in range(0, 3000, 7)]
        self.assertEqual(weights, sorted(weights))
        self.assertTrue(all(0.0 <= weight <= 1.0 for weight in weights))
        self.assertEqual(anneal_weight(AnnealSchedule(midpoint_step=10 ** 6, steepness=1.0), 0), 0.0)

    def test_04_constant(self):
        """The constant schedule returns its value at every step."""
        schedule = AnnealSchedule(kind='constant', constant_value=1.0)
        self.assertEqual({anneal_weight(schedule, step) for step in (0, 1, 5000)}, {1.0})

    def test_05_validation(self):
        """Unknown kinds, out-of-range constants and negative steps are rejected."""
        with self.assertRaises(ContractError):
            AnnealSchedule(kind='cyclical')
        with self.assertRaises(ContractError):
            AnnealSchedule(kind='constant', constant_value=1.5)
        with self.assertRaises(ContractError):
            anneal_weight(AnnealSchedule(), -1)


class TestLastStateEncoder(unittest.TestCase):
    """The single-posterior encoder of the baseline."""

    @classmethod
    def setUpClass(cls):
        cls.config = ModelConfig(vocab_size=20, embed_dim=8, hidden_dim=8, latent_dim=4,
                                 variant='last_state_baseline')
        cls.batch = Batch.from_sequences([[5, 6, EOS], [7, 8, 9, 10, EOS]])

    def setUp(self):
        self.model = HrVae(self.config, np.random.default_rng(3))

    def test_01_one_step_sentence_matches_hr(self):
        """On a one-token sentence the baseline posterior equals the hr posterior."""
        batch = Batch.from_sequences([[EOS]])
        hr_trace = self.model.encode(batch)
        base_trace = encode_last_state(self.model, batch)
        np.testing.assert_array_equal(base_trace.final.mu.data, hr_trace.posteriors[0].mu.data)
        np.testing.assert_array_equal(base_trace.final.log_var.data, hr_trace.posteriors[0].log_var.data)

    def test_02_posterior_at_each_last_step(self):
        """Lengths 3 and 5 take the posterior at steps 3 and 5."""
        hr_trace = self.model.encode(self.batch)
        base_trace = encode_last_state(self.model, self.batch)
        self.assertEqual(len(base_trace.posteriors), 1)
        self.assertFalse(base_trace.per_timestep)
        np.testing.assert_allclose(base_trace.final.mu.data[0], hr_trace.posteriors[2].mu.data[0], rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(base_trace.final.mu.data[1], hr_trace.posteriors[4].mu.data[1], rtol=1e-12, atol=1e-14)

    def test_03_kl_is_single_posterior_kl(self):
        """The loss KL is the closed-form KL of that one posterior."""
        breakdown = forward_loss(self.model, self.batch, 1.0)
        trace = encode_last_state(self.model, self.batch)
        self.assertEqual(breakdown.kl_mean.item(), kl_diag_gaussian_vs_standard(trace.final).item())
        self.assertEqual(breakdown.kl_per_timestep, [breakdown.kl_mean.item()])
