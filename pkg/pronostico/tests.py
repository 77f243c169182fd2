import tempfile
from datetime import date, timedelta
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from sklearn.dummy import DummyRegressor

from pronostico.services.conditions import (
    CONDITION_DIM,
    ConditionScaler,
    MissingLagError,
    build_condition_vector,
    calendar_features,
)
from pronostico.services.point_model import (
    PointForecastModel,
    fit_point_model,
    point_forecast,
    predict_day_profiles,
)
from pronostico.services.residuals import compute_residuals
from pronostico.services.series import (
    DatasetError,
    SeriesFrame,
    read_series_csv,
    split_dataset,
    write_series_csv,
)
from pronostico.services.synthetic import synthesize_series


def _constant_frame(start, n_days, value=3.0, prosumers=1):
    cube = np.full((prosumers, n_days, 48), value)
    return SeriesFrame.from_profiles(start, cube, cube.copy())


def _weekly_frame(start, n_days, seed=0):
    rng = np.random.default_rng(seed)
    week = rng.uniform(0.5, 4.0, size=(7, 48))
    cube = np.stack([week[(start + timedelta(days=d)).weekday()] for d in range(n_days)])[None]
    return SeriesFrame.from_profiles(start, cube, np.zeros_like(cube))


class SplitDatasetTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.frame = synthesize_series(seed=3, years=2, prosumers=2)

    def test_two_years_yield_36_test_days(self):
        split = split_dataset(self.frame)
        self.assertEqual(len(split.t3), 36)
        self.assertEqual(split.t1[0], date(2010, 7, 1))
        self.assertEqual(split.t1[-1], date(2011, 6, 30))
        self.assertTrue(all(day.day in (7, 14, 28) for day in split.t3))

    def test_partition_covers_every_day_once(self):
        split = split_dataset(self.frame)
        everything = list(split.t1) + list(split.t2) + list(split.t3)
        self.assertEqual(len(everything), len(set(everything)))
        self.assertEqual(sorted(everything), self.frame.days)

    def test_single_year_is_rejected(self):
        frame = _constant_frame(date(2010, 7, 1), 365)
        with self.assertRaises(DatasetError):
            split_dataset(frame)

    def test_incomplete_days_are_listed(self):
        data = self.frame.data
        hole = (data["timestamp"] >= "2011-02-03 10:00") & (data["timestamp"] < "2011-02-03 11:00")
        frame = SeriesFrame(data[~hole])
        with self.assertRaisesMessage(DatasetError, "2011-02-03"):
            split_dataset(frame)


class ConditionVectorTests(SimpleTestCase):
    def test_dimension(self):
        frame = _weekly_frame(date(2011, 1, 1), 40)
        vector = build_condition_vector(frame, date(2011, 2, 1), "demand", prosumer=1)
        self.assertEqual(vector.values.shape, (CONDITION_DIM,))
        self.assertEqual(CONDITION_DIM, 290)

    def test_constant_series_normalises_to_midpoint(self):
        frame = _constant_frame(date(2011, 1, 1), 30, value=3.0)
        scaler = ConditionScaler({(1, "demand"): 0.0}, {(1, "demand"): 6.0})
        vector = build_condition_vector(frame, date(2011, 1, 25), "demand", prosumer=1, scaler=scaler)
        np.testing.assert_array_equal(vector.values[:-2], np.full(288, 0.5))

    def test_first_monday_of_september(self):
        self.assertEqual(date(2014, 9, 1).weekday(), 0)
        frame = _constant_frame(date(2014, 8, 1), 40)
        vector = build_condition_vector(frame, date(2014, 9, 1), "pv", prosumer=1)
        self.assertEqual(vector.weekday, 0.0)
        self.assertAlmostEqual(vector.season_day, 1 / 92)

    def test_calendar_wraps_summer_across_new_year(self):
        weekday, season_day = calendar_features(date(2015, 1, 1))
        self.assertAlmostEqual(weekday, 3 / 6)
        self.assertAlmostEqual(season_day, 32 / 92)

    def test_lag_blocks_follow_fixed_order(self):
        start = date(2011, 1, 1)
        n_days = 30
        cube = np.arange(n_days, dtype=float)[None, :, None] * np.ones((1, 1, 48))
        frame = SeriesFrame.from_profiles(start, cube, cube.copy())
        scaler = ConditionScaler({(1, "demand"): 0.0}, {(1, "demand"): 100.0})
        day = start + timedelta(days=25)
        vector = build_condition_vector(frame, day, "demand", prosumer=1, scaler=scaler)
        for lag in (1, 2, 3, 7, 14, 21):
            np.testing.assert_allclose(vector.lag_block(lag), (25 - lag) / 100.0)

    def test_missing_lag_names_the_date(self):
        frame = _constant_frame(date(2011, 1, 1), 30)
        with self.assertRaisesMessage(MissingLagError, "2010-12-28"):
            build_condition_vector(frame, date(2011, 1, 11), "demand", prosumer=1)

    def test_translation_shifts_lags_by_scaled_constant(self):
        base = _weekly_frame(date(2011, 1, 1), 40)
        shifted_cube = base.profiles("demand") + 0.7
        shifted = SeriesFrame.from_profiles(date(2011, 1, 1), shifted_cube, base.profiles("pv"))
        scaler = ConditionScaler({(1, "demand"): 0.0}, {(1, "demand"): 5.0})
        day = date(2011, 2, 5)
        original = build_condition_vector(base, day, "demand", prosumer=1, scaler=scaler).values
        moved = build_condition_vector(shifted, day, "demand", prosumer=1, scaler=scaler).values
        np.testing.assert_allclose(moved[:-2] - original[:-2], 0.7 / 5.0, atol=1e-12)
        np.testing.assert_array_equal(moved[-2:], original[-2:])


class PointModelTests(SimpleTestCase):
    def test_weekly_periodic_series_is_learned(self):
        start = date(2011, 3, 1)
        frame = _weekly_frame(start, 150)
        days = frame.days
        model = fit_point_model(frame, days[:110], "demand")
        held_out = days[110:]
        predicted = predict_day_profiles(model, frame, held_out)[0]
        actual = frame.profiles("demand")[0, 110:, :]
        value_range = actual.max() - actual.min()
        self.assertLessEqual(np.abs(predicted - actual).mean(), 0.01 * value_range)

    def test_all_zero_channel_predicts_zero(self):
        frame = _weekly_frame(date(2011, 3, 1), 100)
        with self.assertLogs("pronostico.services.point_model", level="WARNING"):
            model = fit_point_model(frame, frame.days[:80], "pv")
        self.assertTrue(model.degenerate)
        vector = build_condition_vector(frame, frame.days[90], "pv", prosumer=1, scaler=model.scaler)
        np.testing.assert_array_equal(point_forecast(model, vector), np.zeros(48))

    def test_fit_is_reproducible(self):
        frame = synthesize_series(seed=11, years=2, prosumers=2)
        t1 = split_dataset(frame).t1
        first = fit_point_model(frame, t1, "demand")
        second = fit_point_model(frame, t1, "demand")
        np.testing.assert_array_equal(first.regressor.coef_, second.regressor.coef_)
        np.testing.assert_array_equal(first.regressor.intercept_, second.regressor.intercept_)
        self.assertGreater(first.in_sample_mae, 0.0)

    def test_negative_extrapolation_is_clamped(self):
        frame = _weekly_frame(date(2011, 3, 1), 40)
        scaler = ConditionScaler.fit(frame, frame.days)
        regressor = DummyRegressor(strategy="constant", constant=-np.ones(48))
        regressor.fit(np.zeros((2, CONDITION_DIM)), -np.ones((2, 48)))
        model = PointForecastModel(channel="demand", scaler=scaler, regressor=regressor)
        vector = build_condition_vector(frame, frame.days[30], "demand", prosumer=1, scaler=scaler)
        profile = point_forecast(model, vector)
        self.assertEqual(profile.shape, (48,))
        self.assertTrue((profile == 0.0).all())

    def test_short_training_set_is_rejected(self):
        frame = _weekly_frame(date(2011, 3, 1), 40)
        with self.assertRaises(DatasetError):
            fit_point_model(frame, frame.days, "demand")


class ResidualTests(SimpleTestCase):
    def test_equal_inputs_give_zero(self):
        values = np.random.default_rng(0).uniform(0, 3, size=(2, 5, 48))
        self.assertTrue((compute_residuals(values, values).residual == 0).all())

    def test_constant_offset(self):
        predicted = np.random.default_rng(1).uniform(0, 3, size=(4, 48))
        frame = compute_residuals(predicted + 1.0, predicted)
        np.testing.assert_allclose(frame.residual, 1.0, atol=1e-12)

    def test_closure(self):
        rng = np.random.default_rng(2)
        actual = rng.uniform(0, 5, size=(3, 7, 48))
        predicted = rng.uniform(0, 5, size=(3, 7, 48))
        frame = compute_residuals(actual, predicted)
        np.testing.assert_allclose(frame.reconstruct(), actual, rtol=0, atol=1e-14)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            compute_residuals(np.zeros((2, 48)), np.zeros((3, 48)))


class SyntheticSeriesTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.frame = synthesize_series(seed=5)

    def test_default_size(self):
        n_days = (date(2012, 7, 1) - date(2010, 7, 1)).days
        self.assertEqual(len(self.frame.data), 25 * n_days * 48)
        self.assertEqual(self.frame.prosumers, list(range(1, 26)))
        self.assertEqual(self.frame.incomplete_days(), [])

    def test_pv_is_zero_at_night(self):
        pv = self.frame.profiles("pv")
        self.assertTrue((pv[:, :, :10] == 0.0).all())
        self.assertTrue((pv[:, :, 40:] == 0.0).all())
        self.assertGreater(pv[:, :, 24].mean(), 0.5)

    def test_seeded_files_are_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = write_series_csv(synthesize_series(seed=9, prosumers=2), Path(tmp) / "a.csv")
            second = write_series_csv(synthesize_series(seed=9, prosumers=2), Path(tmp) / "b.csv")
            self.assertEqual(first.read_bytes(), second.read_bytes())
            header = first.read_text().splitlines()[0]
            self.assertEqual(header, "prosumer_id,timestamp_iso8601,demand_kw,pv_kw")
            again = read_series_csv(first)
            np.testing.assert_allclose(again.profiles("demand"), synthesize_series(seed=9, prosumers=2).profiles("demand"))

    def test_fewer_than_two_years_is_rejected(self):
        with self.assertRaises(ValueError):
            synthesize_series(seed=1, years=1)
