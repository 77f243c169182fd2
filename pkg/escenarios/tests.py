import math
import tempfile
from pathlib import Path

import joblib
import numpy as np
import pandas as pd
import torch
from django.test import SimpleTestCase

from escenarios.services.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from escenarios.services.losses import critic_input_gradient, gradient_penalty, losses
from escenarios.services.networks import (
    MlpSpec,
    critic_forward,
    critic_spec,
    generator_forward,
    generator_spec,
    init_networks,
)
from escenarios.services.sampling import sample_scenarios, scenario_noise
from escenarios.services.training import TrainConfig, TrainingDivergedError, train


def _set_params(model, *arrays):
    with torch.no_grad():
        for parameter, values in zip(model.parameters(), arrays):
            parameter.copy_(torch.as_tensor(np.asarray(values, dtype=float)))


def _zero(model, bias=0.0):
    with torch.no_grad():
        for layer in model.layers:
            layer.weight.zero_()
            layer.bias.fill_(bias)


def _numpy_scores(model, samples, conditions, logistic=False):
    """Per-sample loop oracle independent of torch."""
    weights = [(layer.weight.detach().numpy(), layer.bias.detach().numpy()) for layer in model.layers]
    scores = []
    for sample, condition in zip(samples, conditions):
        hidden = np.concatenate([sample, condition])
        for index, (w, b) in enumerate(weights):
            hidden = w @ hidden + b
            if index < len(weights) - 1:
                hidden = np.maximum(hidden, 0.0)
        value = float(hidden[0]) if hidden.shape == (1,) else hidden
        if logistic:
            value = 1.0 / (1.0 + math.exp(-value))
        scores.append(value)
    return scores


class InitNetworksTests(SimpleTestCase):
    def test_default_generator_shapes(self):
        generator = init_networks(generator_spec(), seed=0)
        shapes = [tuple(p.shape) for p in generator.parameters()]
        self.assertEqual(shapes, [(256, 802), (256,), (48, 256), (48,)])
        bound = math.sqrt(6 / (802 + 256))
        self.assertLessEqual(float(generator.layers[0].weight.abs().max()), bound)
        self.assertEqual(float(generator.layers[0].bias.abs().max()), 0.0)
        self.assertEqual(generator.layers[0].weight.dtype, torch.float64)

    def test_default_critic_shapes(self):
        critic = init_networks(critic_spec(), seed=0)
        shapes = [tuple(p.shape) for p in critic.parameters()]
        self.assertEqual(shapes, [(128, 338), (128,), (1, 128), (1,)])

    def test_same_seed_same_parameters(self):
        first = init_networks(critic_spec(), seed=7).weights()
        second = init_networks(critic_spec(), seed=7).weights()
        for name in first:
            np.testing.assert_array_equal(first[name], second[name])

    def test_zero_size_layer(self):
        with self.assertRaises(ValueError):
            MlpSpec((10, 0, 1), condition_dim=2)


class ForwardTests(SimpleTestCase):
    def test_zero_generator_outputs_zero(self):
        generator = init_networks(generator_spec(), seed=1)
        _zero(generator)
        out = generator_forward(generator, np.random.default_rng(0).normal(size=512), np.ones(290))
        self.assertTrue((out == 0).all())

    def test_generator_is_pure(self):
        generator = init_networks(generator_spec(), seed=1)
        z = np.random.default_rng(0).normal(size=512)
        c = np.random.default_rng(1).uniform(size=290)
        torch.testing.assert_close(generator_forward(generator, z, c), generator_forward(generator, z, c), rtol=0, atol=0)

    def test_toy_generator_affine(self):
        generator = init_networks(MlpSpec((3, 2), condition_dim=2), seed=0)
        _set_params(generator, [[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]], [0.5, -1.0])
        out = generator_forward(generator, [2.0], [3.0, 4.0])
        self.assertEqual(out.tolist(), [2.5, 6.0])

    def test_toy_critic_scores(self):
        spec = MlpSpec((3, 1), condition_dim=1)
        critic = init_networks(spec, seed=0)
        _set_params(critic, [[1.0, -2.0, 0.5]], [0.25])
        self.assertAlmostEqual(float(critic_forward(critic, [1.0, 1.0], [2.0])), 0.25)
        vanilla = init_networks(MlpSpec((3, 1), output_activation="logistic", condition_dim=1), seed=0)
        _set_params(vanilla, [[1.0, -2.0, 0.5]], [0.25])
        self.assertAlmostEqual(float(critic_forward(vanilla, [1.0, 1.0], [2.0])), 1 / (1 + math.exp(-0.25)))

    def test_zero_critic_scores(self):
        vanilla = init_networks(critic_spec("vanilla"), seed=0)
        wgan = init_networks(critic_spec("wgan_gp"), seed=0)
        _zero(vanilla)
        _zero(wgan)
        sample, condition = np.ones(48), np.ones(290)
        self.assertEqual(float(critic_forward(vanilla, sample, condition)), 0.5)
        self.assertEqual(float(critic_forward(wgan, sample, condition)), 0.0)

    def test_dimension_mismatch(self):
        generator = init_networks(generator_spec(), seed=0)
        with self.assertRaises(ValueError):
            generator_forward(generator, np.zeros(500), np.zeros(290))
        critic = init_networks(critic_spec(), seed=0)
        with self.assertRaises(ValueError):
            critic_forward(critic, np.zeros(48), np.zeros(289))


class LossTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(3)
        self.real = rng.normal(size=(6, 48))
        self.noise = rng.normal(size=(6, 512))
        self.conditions = rng.uniform(size=(6, 290))
        self.generator = init_networks(generator_spec(), seed=4)

    def test_constant_critic_cancels(self):
        critic = init_networks(critic_spec("wgan_gp"), seed=0)
        _zero(critic, bias=1.7)
        terms = losses(self.generator, critic, self.real, self.noise, self.conditions, mode="wgan_gp", gp_weight=0.0)
        self.assertAlmostEqual(float(terms.critic), 0.0, places=14)
        self.assertAlmostEqual(float(terms.generator), -1.7, places=14)

    def test_vanilla_half_everywhere(self):
        critic = init_networks(critic_spec("vanilla"), seed=0)
        _zero(critic)
        terms = losses(self.generator, critic, self.real, self.noise, self.conditions, mode="vanilla")
        self.assertAlmostEqual(float(terms.critic), -2 * math.log(0.5), places=12)
        self.assertAlmostEqual(float(terms.critic), 1.3863, places=4)

    def test_matches_per_sample_loop(self):
        fake = generator_forward(self.generator, self.noise, self.conditions).detach().numpy()
        for mode in ("wgan_clip", "vanilla"):
            critic = init_networks(critic_spec(mode), seed=5)
            terms = losses(self.generator, critic, self.real, self.noise, self.conditions, mode=mode)
            logistic = mode == "vanilla"
            real_scores = _numpy_scores(critic, self.real, self.conditions, logistic)
            fake_scores = _numpy_scores(critic, fake, self.conditions, logistic)
            if logistic:
                expected_d = -np.mean(np.log(real_scores)) - np.mean(np.log(1 - np.array(fake_scores)))
                expected_g = np.mean(np.log(1 - np.array(fake_scores)))
            else:
                expected_d = -np.mean(real_scores) + np.mean(fake_scores)
                expected_g = -np.mean(fake_scores)
            self.assertAlmostEqual(float(terms.critic), expected_d, delta=1e-12)
            self.assertAlmostEqual(float(terms.generator), expected_g, delta=1e-12)

    def test_empty_batch(self):
        critic = init_networks(critic_spec(), seed=0)
        with self.assertRaises(ValueError):
            losses(self.generator, critic, np.zeros((0, 48)), np.zeros((0, 512)), np.zeros((0, 290)))


class GradientPenaltyTests(SimpleTestCase):
    def test_unit_norm_linear_critic(self):
        rng = np.random.default_rng(0)
        critic = init_networks(MlpSpec((338, 1)), seed=0)
        direction = rng.normal(size=48)
        direction /= np.linalg.norm(direction)
        _set_params(critic, [np.concatenate([direction, rng.normal(size=290)])], [0.3])
        penalty = gradient_penalty(critic, rng.normal(size=(8, 48)), rng.normal(size=(8, 48)),
                                   rng.uniform(size=(8, 290)), gp_weight=10.0, seed=1)
        self.assertAlmostEqual(float(penalty), 0.0, places=12)

    def test_constant_critic(self):
        rng = np.random.default_rng(1)
        critic = init_networks(critic_spec(), seed=0)
        _zero(critic, bias=-0.4)
        penalty = gradient_penalty(critic, rng.normal(size=(8, 48)), rng.normal(size=(8, 48)),
                                   rng.uniform(size=(8, 290)), gp_weight=10.0, seed=1)
        self.assertAlmostEqual(float(penalty), 10.0, places=12)

    def test_input_gradient_matches_finite_differences(self):
        step = 1e-5
        for draw in range(100):
            rng = np.random.default_rng(100 + draw)
            critic = init_networks(critic_spec(), seed=draw)
            with torch.no_grad():
                for layer in critic.layers:
                    layer.bias.copy_(torch.as_tensor(rng.normal(scale=0.1, size=layer.bias.shape)))
            sample = rng.normal(size=48)
            condition = rng.uniform(size=290)
            analytic = critic_input_gradient(critic, sample[None, :], condition[None, :]).numpy()[0]
            numeric = np.empty(48)
            with torch.no_grad():
                for k in range(48):
                    up, down = sample.copy(), sample.copy()
                    up[k] += step
                    down[k] -= step
                    numeric[k] = (float(critic_forward(critic, up, condition))
                                  - float(critic_forward(critic, down, condition))) / (2 * step)
            relative = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), 1e-12)
            self.assertLessEqual(relative, 1e-6, msg=f"draw {draw}")

    def test_penalty_is_seeded(self):
        rng = np.random.default_rng(2)
        critic = init_networks(critic_spec(), seed=3)
        args = (rng.normal(size=(8, 48)), rng.normal(size=(8, 48)), rng.uniform(size=(8, 290)))
        first = gradient_penalty(critic, *args, gp_weight=10.0, seed=9)
        second = gradient_penalty(critic, *args, gp_weight=10.0, seed=9)
        self.assertEqual(float(first), float(second))


def _toy_task(n_rows=2000, seed=0):
    rng = np.random.default_rng(seed)
    sigma = np.where(np.arange(48) < 24, 0.1, 0.5)
    residuals = rng.normal(size=(n_rows, 48)) * sigma
    conditions = np.tile(np.array([0.2, 0.4, 0.6, 0.8]), (n_rows, 1))
    return residuals, conditions, sigma


class TrainingTests(SimpleTestCase):
    def test_clip_mode_bounds_critic_weights(self):
        residuals, conditions, _ = _toy_task(200)
        config = TrainConfig(noise_dim=8, iterations=15, batch_size=16, mode="wgan_clip", gp_weight=0.0,
                             clip_bound=0.01, generator_hidden=16, critic_hidden=16, seed=3)
        steps = []

        def check(iteration, critic):
            steps.append(iteration)
            for parameter in critic.parameters():
                self.assertLessEqual(float(parameter.detach().abs().max()), 0.01)

        train(residuals, conditions, config, on_critic_step=check)
        self.assertEqual(len(steps), 15 * 5)

    def test_fixed_seed_gives_identical_history(self):
        residuals, conditions, _ = _toy_task(200)
        config = TrainConfig(noise_dim=8, iterations=25, batch_size=16, generator_hidden=16, critic_hidden=16, seed=5)
        first = train(residuals, conditions, config)
        second = train(residuals, conditions, config)
        pd.testing.assert_frame_equal(first.history, second.history)
        self.assertEqual(list(first.history.columns), ["iteration", "L_G", "L_D", "GP"])
        self.assertEqual(len(first.history), 25)

    def test_non_finite_loss_aborts(self):
        residuals = np.full((10, 48), np.inf)
        config = TrainConfig(noise_dim=8, iterations=5, batch_size=4, generator_hidden=8, critic_hidden=8)
        with self.assertRaises(TrainingDivergedError):
            train(residuals, np.zeros((10, 4)), config)

    def test_toy_task_learns_slot_spread(self):
        residuals, conditions, sigma = _toy_task()
        config = TrainConfig(noise_dim=16, iterations=4000, batch_size=64, generator_hidden=64, critic_hidden=64,
                             learning_rate=5e-4, seed=0, log_every=0)
        result = train(residuals, conditions, config)
        scenarios = sample_scenarios(result.generator, conditions[0], 4000, seed=1).scenarios
        std = scenarios.std(axis=0, ddof=1)
        within = np.abs(std - sigma) <= 0.2 * sigma
        self.assertGreaterEqual(within.mean(), 0.9)
        self.assertLessEqual(np.abs(scenarios.mean(axis=0)).mean(), 0.05)
        critic_losses = result.history["L_D"].abs()
        self.assertLess(critic_losses.tail(500).mean(), critic_losses.head(500).mean())


class SamplingTests(SimpleTestCase):
    def test_fixed_seed_is_deterministic(self):
        generator = init_networks(generator_spec(), seed=2)
        condition = np.random.default_rng(0).uniform(size=290)
        first = sample_scenarios(generator, condition, 1000, seed=42)
        second = sample_scenarios(generator, condition, 1000, seed=42)
        self.assertEqual(first.scenarios.shape, (1000, 48))
        np.testing.assert_array_equal(first.scenarios, second.scenarios)

    def test_rows_follow_recorded_noise(self):
        generator = init_networks(generator_spec(), seed=2)
        condition = np.random.default_rng(0).uniform(size=290)
        scenario_set = sample_scenarios(generator, condition, 5, seed=8)
        noise = scenario_noise(8, 5, 512)
        for index in range(5):
            expected = generator_forward(generator, noise[index], condition).detach().numpy()
            np.testing.assert_allclose(scenario_set.scenarios[index], expected, rtol=0, atol=1e-12)
        tail = scenario_noise(8, 2, 512, offset=3)
        torch.testing.assert_close(tail, noise[3:], rtol=0, atol=0)

    def test_zero_generator_gives_zero_scenarios(self):
        generator = init_networks(generator_spec(), seed=2)
        _zero(generator)
        scenario_set = sample_scenarios(generator, np.ones(290), 10, seed=0)
        self.assertTrue((scenario_set.scenarios == 0).all())


class CheckpointTests(SimpleTestCase):
    def test_checkpoint_restores_networks(self):
        generator = init_networks(generator_spec(noise_dim=16, hidden=32), seed=1)
        critic = init_networks(critic_spec(hidden=16), seed=2)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / "cgan.joblib", generator, critic, "wgan_gp", 1, 100)
            restored_g, restored_c, meta = load_checkpoint(path)
            self.assertEqual(meta["iterations"], 100)
            z, c = np.ones(16), np.full(290, 0.5)
            torch.testing.assert_close(generator_forward(restored_g, z, c), generator_forward(generator, z, c))
            self.assertEqual(restored_c.spec, critic.spec)

            payload = joblib.load(path)
            payload["version"] = "otro"
            joblib.dump(payload, path)
            with self.assertRaises(CheckpointError):
                load_checkpoint(path)
