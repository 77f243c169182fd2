import math
from datetime import date

import numpy as np
from django.test import SimpleTestCase
from scipy.integrate import quad

from metricas.services.evaluation import REPORT_COLUMNS, evaluate_forecasts
from metricas.services.gaussian import NodalForecast, fit_gaussian, GaussianForecast
from metricas.services.scores import crps, crps_ensemble, pinball, quantile


def _crps_by_integration(ensemble, y):
    members = np.sort(np.asarray(ensemble, dtype=float))

    def integrand(x):
        cdf = np.searchsorted(members, x, side="right") / len(members)
        return (cdf - (1.0 if x >= y else 0.0)) ** 2

    breakpoints = sorted(set(members.tolist() + [y]))
    low, high = breakpoints[0], breakpoints[-1]
    if high == low:
        return 0.0
    total = 0.0
    for left, right in zip(breakpoints[:-1], breakpoints[1:]):
        value, _ = quad(integrand, left, right, epsabs=1e-13, epsrel=1e-13)
        total += value
    return total


def _pinball_plugin(y_hat, y, q):
    if y < y_hat:
        return (1 - q) * (y_hat - y)
    return q * (y - y_hat)


class CrpsTests(SimpleTestCase):
    def test_point_mass_at_observation(self):
        self.assertEqual(crps([3.2], 3.2), 0.0)
        self.assertEqual(crps([3.2] * 10, 3.2), 0.0)

    def test_two_member_ensemble(self):
        self.assertAlmostEqual(crps([0.0, 2.0], 1.0), _crps_by_integration([0.0, 2.0], 1.0), delta=1e-6)
        self.assertAlmostEqual(crps([0.0, 2.0], 1.0), 0.5, places=12)

    def test_random_ensembles_match_integration(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 30))
            ensemble = rng.normal(size=n) * rng.uniform(0.1, 3.0)
            y = float(rng.normal())
            self.assertAlmostEqual(crps(ensemble, y), _crps_by_integration(ensemble, y), delta=1e-6)

    def test_vectorised_over_slots(self):
        rng = np.random.default_rng(1)
        members = rng.normal(size=(48, 25))
        observed = rng.normal(size=48)
        values = crps_ensemble(members, observed)
        self.assertEqual(values.shape, (48,))
        self.assertTrue((values >= 0).all())
        self.assertAlmostEqual(values[7], crps(members[7], observed[7]), places=14)

    def test_empty_ensemble(self):
        with self.assertRaises(ValueError):
            crps([], 1.0)


class PinballTests(SimpleTestCase):
    def test_upper_quantile_over_forecast(self):
        self.assertAlmostEqual(pinball(12.0, 10.0, 0.9), 0.2, places=12)

    def test_median_is_half_absolute_error(self):
        rng = np.random.default_rng(2)
        for y_hat, y in rng.normal(size=(50, 2)):
            self.assertAlmostEqual(pinball(y_hat, y, 0.5), 0.5 * abs(y_hat - y), places=14)

    def test_exact_forecast_is_free(self):
        for q in (0.01, 0.3, 0.99):
            self.assertEqual(pinball(4.0, 4.0, q), 0.0)

    def test_random_triples_match_plugin(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            y_hat, y = (float(v) for v in rng.normal(size=2) * 5)
            q = float(rng.uniform(0.001, 0.999))
            self.assertEqual(pinball(y_hat, y, q), _pinball_plugin(y_hat, y, q))

    def test_convex_in_forecast(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            a, b, y = rng.normal(size=3)
            q = rng.uniform(0.05, 0.95)
            self.assertLessEqual(pinball((a + b) / 2, y, q), (pinball(a, y, q) + pinball(b, y, q)) / 2 + 1e-15)

    def test_quantile_out_of_range(self):
        for q in (0.0, 1.0, -0.1, 1.5):
            with self.assertRaises(ValueError):
                pinball(1.0, 2.0, q)


class QuantileTests(SimpleTestCase):
    def test_median_of_three(self):
        self.assertEqual(quantile([3.0, 1.0, 2.0], 0.5), 2.0)

    def test_lower_limit_is_minimum(self):
        self.assertAlmostEqual(quantile([5.0, -2.0, 7.0], 1e-12), -2.0, places=9)

    def test_uniform_grid_interpolates(self):
        grid = np.linspace(0.0, 1.0, 11)
        for q in (0.37, 0.5, 0.93):
            self.assertAlmostEqual(quantile(grid, q), q, places=12)

    def test_out_of_range(self):
        with self.assertRaises(ValueError):
            quantile([1.0, 2.0], 1.0)


class FitGaussianTests(SimpleTestCase):
    def test_identical_scenarios(self):
        scenarios = np.tile(np.linspace(-1, 1, 48), (20, 1))
        forecast = fit_gaussian(scenarios, np.zeros(48))
        self.assertTrue((forecast.sigma == 0).all())

    def test_two_scenarios_by_hand(self):
        scenarios = np.array([[-1.0] * 48, [1.0] * 48])
        forecast = fit_gaussian(scenarios, np.full(48, 5.0))
        np.testing.assert_allclose(forecast.mu, 5.0)
        np.testing.assert_allclose(forecast.sigma, math.sqrt(2.0))

    def test_large_sample_recovers_sigma(self):
        draws = np.random.default_rng(5).normal(0.0, 0.5, size=(10000, 1))
        forecast = fit_gaussian(draws, np.zeros(1))
        self.assertLessEqual(abs(forecast.sigma[0] - 0.5), 0.01)

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(6)
        scenarios = rng.normal(size=(37, 48)) * 2 + 1
        point = rng.uniform(0, 3, size=48)
        forecast = fit_gaussian(scenarios, point)
        for t in range(48):
            column = [float(v) for v in scenarios[:, t]]
            mean = sum(column) / len(column)
            variance = sum((v - mean) ** 2 for v in column) / (len(column) - 1)
            self.assertAlmostEqual(forecast.mu[t], point[t] + mean, delta=1e-12)
            self.assertAlmostEqual(forecast.sigma[t], math.sqrt(variance), delta=1e-12)

    def test_single_scenario_rejected(self):
        with self.assertRaises(ValueError):
            fit_gaussian(np.zeros((1, 48)), np.zeros(48))

    def test_nodal_forecast_frame_round_trip(self):
        rng = np.random.default_rng(7)
        days = (date(2011, 8, 7),) * 48 + (date(2011, 8, 14),) * 48
        forecast = NodalForecast(
            prosumers=(1, 2),
            demand=GaussianForecast(rng.uniform(size=(2, 96)), rng.uniform(size=(2, 96))),
            pv=GaussianForecast(rng.uniform(size=(2, 96)), rng.uniform(size=(2, 96))),
            slot_dates=days,
        )
        frame = forecast.to_frame()
        self.assertEqual(len(frame), 2 * 2 * 96)
        again = NodalForecast.from_frame(frame)
        np.testing.assert_array_equal(again.pv.sigma, forecast.pv.sigma)
        self.assertEqual(again.slot_dates, days)


class EvaluationTests(SimpleTestCase):
    def test_report_columns_and_pooled_means(self):
        rng = np.random.default_rng(8)
        records = []
        for prosumer in (1, 2):
            for day in (date(2011, 8, 7), date(2011, 8, 14)):
                actual = rng.uniform(0, 2, size=48)
                records.append((prosumer, "demand", day, actual + rng.normal(size=(50, 48)), actual, actual + 0.1))
        report = evaluate_forecasts(records)
        self.assertEqual(list(report.rows.columns), REPORT_COLUMNS)
        self.assertEqual(len(report.rows), 4 * 48)
        self.assertAlmostEqual(report.summary["demand"]["crps"], report.rows["crps"].mean(), places=12)
        self.assertAlmostEqual(report.summary["demand"]["mae"], 0.1, places=12)
        self.assertEqual(len(report.per_slot), 48)
