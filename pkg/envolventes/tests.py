import dataclasses
import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings
from django.test import SimpleTestCase
from scipy.special import ndtr

from envolventes.services.chance import ChanceLevels, Margins, UncertaintySpec, build_margins, normal_quantile
from envolventes.services.envelopes import (
    ENVELOPE_COLUMNS,
    EnvelopeError,
    extract_envelopes,
    maxmin_certificate,
    verify_relaxation,
    write_envelopes_csv,
)
from envolventes.services.montecarlo import VALIDATION_COLUMNS, monte_carlo_validate
from envolventes.services.powerflow import ac_power_flow
from envolventes.services.problem import OpfSettings, ProblemAssemblyError, assemble_problem, build_program
from envolventes.services.solver import OpfSolution, solve
from metricas.services.gaussian import GaussianForecast, NodalForecast
from red.services.network import ingest_network, network_from_dict
from red.services.topology import path_sensitivities

KAPPA = math.tan(math.acos(0.9))


def _assets(pv_cap=20.0, battery=0.0, soc=(0.0, 0.0, 0.0), power_factor=0.9):
    return {
        "pv_cap_kw": pv_cap,
        "batt_p_max_kw": battery,
        "batt_p_min_kw": -battery,
        "soc_min_kwh": soc[0],
        "soc_max_kwh": soc[1],
        "soc_init_kwh": soc[2],
        "eta": 0.95,
        "power_factor": power_factor,
    }


def _feeder(lines, prosumers, base_mva=0.1, base_kv=0.4, order=None):
    """``lines``: (from, to, r_ohm, x_ohm, s_max_kva); ``prosumers``: bus id -> assets."""
    bus_ids = sorted({0} | {a for a, *_ in lines} | {b for _, b, *_ in lines})
    if order is not None:
        bus_ids = list(order)
    buses = []
    for bus_id in bus_ids:
        item = {"id": bus_id, "v_min_pct": 94, "v_max_pct": 106}
        if bus_id == 0:
            item["slack"] = True
        if bus_id in prosumers:
            item["prosumer"] = prosumers[bus_id]
        buses.append(item)
    return network_from_dict(
        {
            "base_mva": base_mva,
            "base_kv": base_kv,
            "slack_v": 1.0,
            "buses": buses,
            "lines": [
                {"from": a, "to": b, "r_ohm": r, "x_ohm": x, "s_max_kva": s} for a, b, r, x, s in lines
            ],
        }
    )


def _forecast(prosumers, demand, pv, sigma_demand=0.0, sigma_pv=0.0):
    demand = np.atleast_2d(np.asarray(demand, dtype=float))
    pv = np.atleast_2d(np.asarray(pv, dtype=float))
    return NodalForecast(
        prosumers=tuple(prosumers),
        demand=GaussianForecast(demand, np.broadcast_to(sigma_demand, demand.shape).astype(float)),
        pv=GaussianForecast(pv, np.broadcast_to(sigma_pv, pv.shape).astype(float)),
    )


def _margins(network, forecast, levels=None):
    levels = levels or ChanceLevels()
    unc = UncertaintySpec.from_forecast(network, forecast)
    power_factors = [network.buses[network.index_of(p)].prosumer.power_factor for p in forecast.prosumers]
    return build_margins(unc, path_sensitivities(network), levels, power_factors)


def _solve(network, forecast, settings_=None, levels=None, strategy="round", margins=None):
    levels = levels or ChanceLevels()
    margins = margins if margins is not None else _margins(network, forecast, levels)
    problem = assemble_problem(network, forecast, margins, levels, settings_ or OpfSettings())
    return problem, solve(problem, binary_strategy=strategy)


def _two_bus(r_ohm=0.01, x_ohm=0.005, s_max_kva=100.0, assets=None):
    return _feeder([(0, 1, r_ohm, x_ohm, s_max_kva)], {1: assets or _assets()})


def _bundled_day_forecast(network):
    slots = np.arange(48)
    bell = np.clip(np.sin(np.pi * (slots - 12) / 26.0), 0.0, None)
    bell[(slots < 12) | (slots > 38)] = 0.0
    evening = np.exp(-0.5 * ((slots - 38) / 3.0) ** 2)
    prosumers = tuple(network.prosumer_buses)
    demand = np.tile(0.4 + 0.9 * evening, (len(prosumers), 1))
    pv = np.tile(5.5 * bell, (len(prosumers), 1))
    return NodalForecast(
        prosumers=prosumers,
        demand=GaussianForecast(demand, 0.15 + 0.1 * demand),
        pv=GaussianForecast(pv, np.where(pv > 0, 0.1 + 0.15 * pv, 0.0)),
    )


class NormalQuantileTests(SimpleTestCase):
    def test_median(self):
        self.assertAlmostEqual(normal_quantile(0.5), 0.0, delta=1e-15)

    def test_upper_five_percent(self):
        self.assertAlmostEqual(normal_quantile(0.95), 1.6449, delta=1e-4)

    def test_round_trip_through_cdf(self):
        rng = np.random.default_rng(0)
        for p in rng.uniform(1e-6, 1 - 1e-6, size=1000):
            self.assertLessEqual(abs(float(ndtr(normal_quantile(p))) - p), 1e-9)

    def test_out_of_range(self):
        for p in (0.0, 1.0, -0.2, 1.5):
            with self.assertRaises(ValueError):
                normal_quantile(p)

    def test_chance_levels_bounds(self):
        with self.assertRaises(ValueError):
            ChanceLevels(xi_v=0.5)
        with self.assertRaises(ValueError):
            ChanceLevels(xi_l=0.0)


class MarginTests(SimpleTestCase):
    def setUp(self):
        # base 1 MVA / 1 kV: ohms equal per unit and 1 pu = 1000 kW
        self.network = _feeder([(0, 1, 0.02, 0.01, 500.0)], {1: _assets(power_factor=1.0)}, base_mva=1.0, base_kv=1.0)
        self.sens = path_sensitivities(self.network)

    def _spec(self, sigma_kw):
        return UncertaintySpec(
            sigma_demand=np.zeros((1, 1)),
            sigma_pv=np.full((1, 1), sigma_kw),
            bus_index=(1,),
            base_kw=1000.0,
        )

    def test_hand_formula_single_bus(self):
        margins = build_margins(self._spec(100.0), self.sens, ChanceLevels(), [1.0])
        self.assertAlmostEqual(margins.voltage[1, 0], 6.58e-3, delta=1e-5)
        self.assertAlmostEqual(margins.voltage[1, 0], normal_quantile(0.95) * 2 * 0.02 * 0.1, places=12)
        self.assertEqual(margins.voltage[0, 0], 0.0)
        self.assertAlmostEqual(margins.flow[0, 0], normal_quantile(0.95) * 0.1, places=12)

    def test_implied_violation_rate(self):
        margins = build_margins(self._spec(100.0), self.sens, ChanceLevels(), [1.0])
        deviations = 2 * 0.02 * np.random.default_rng(1).normal(0.0, 0.1, size=100000)
        rate = float((deviations > margins.voltage[1, 0]).mean())
        self.assertLessEqual(abs(rate - 0.05), 0.01)

    def test_zero_sigma_gives_zero_margins(self):
        margins = build_margins(self._spec(0.0), self.sens, ChanceLevels(), [1.0])
        self.assertFalse(margins.voltage.any())
        self.assertFalse(margins.flow.any())

    def test_positive_homogeneity_and_monotonicity(self):
        network = ingest_network(settings.ENVELOPES_NETWORK_PATH)
        forecast = _bundled_day_forecast(network)
        unc = UncertaintySpec.from_forecast(network, forecast)
        sens = path_sensitivities(network)
        pf = [0.9] * len(forecast.prosumers)
        full = build_margins(unc, sens, ChanceLevels(), pf)
        half = build_margins(unc.scaled(0.5), sens, ChanceLevels(), pf)
        np.testing.assert_allclose(half.voltage, full.voltage / 2, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(half.flow, full.flow / 2, rtol=1e-12, atol=1e-15)
        looser = build_margins(unc, sens, ChanceLevels(xi_v=0.2, xi_l=0.2), pf)
        self.assertTrue((looser.voltage <= full.voltage + 1e-15).all())
        self.assertTrue((looser.flow <= full.flow + 1e-15).all())

    def test_diagonal_covariance_matches_independent_model(self):
        network = ingest_network(settings.ENVELOPES_NETWORK_PATH)
        forecast = _bundled_day_forecast(network).select(20, 24)
        unc = UncertaintySpec.from_forecast(network, forecast)
        variance = unc.sigma_demand**2 + unc.sigma_pv**2
        covariance = np.stack([np.diag(variance[:, t]) for t in range(unc.horizon)])
        correlated = UncertaintySpec.from_forecast(network, forecast, covariance=covariance)
        sens = path_sensitivities(network)
        pf = [0.9] * len(forecast.prosumers)
        independent = build_margins(unc, sens, ChanceLevels(), pf)
        joint = build_margins(correlated, sens, ChanceLevels(), pf)
        np.testing.assert_allclose(joint.voltage, independent.voltage, rtol=1e-10)
        np.testing.assert_allclose(joint.flow, independent.flow, rtol=1e-10)


class PowerFlowTests(SimpleTestCase):
    def test_two_bus_matches_complex_voltage_solution(self):
        network = _two_bus(r_ohm=0.4, x_ohm=0.2)
        line = network.lines[0]
        for p, q in ((0.05, 0.02), (-0.08, -0.03), (0.12, 0.0)):
            flow = ac_power_flow(network, np.array([0.0, p]), np.array([0.0, q]))
            # Oracle: fixed point on the complex receiving voltage.
            z = complex(line.r, line.x)
            v1 = 1.0 + 0j
            for _ in range(200):
                v1 = 1.0 + z * np.conj(complex(p, q) / v1)
            self.assertTrue(flow.converged)
            self.assertAlmostEqual(flow.v[1], abs(v1) ** 2, delta=1e-9)

    def test_zero_injection(self):
        network = ingest_network(settings.ENVELOPES_NETWORK_PATH)
        flow = ac_power_flow(network, np.zeros(26), np.zeros(26))
        np.testing.assert_allclose(flow.v, network.slack_v)
        np.testing.assert_allclose(flow.P, 0.0)
        self.assertTrue(flow.converged)

    def test_batch_and_divergence(self):
        network = _two_bus(r_ohm=2.0, x_ohm=0.5)
        p = np.array([[0.0, 0.02], [0.0, -50.0]])
        flow = ac_power_flow(network, p, np.zeros_like(p))
        self.assertEqual(flow.v.shape, (2, 2))
        self.assertTrue(flow.converged[0])
        self.assertFalse(flow.converged[1])


class AssemblyTests(SimpleTestCase):
    def test_bundled_counts(self):
        network = ingest_network(settings.ENVELOPES_NETWORK_PATH)
        forecast = _bundled_day_forecast(network)
        problem = assemble_problem(network, forecast, _margins(network, forecast), ChanceLevels())
        self.assertEqual(problem.binary_count, 25 * 48)
        counts = problem.variable_count()
        self.assertEqual(counts["continuous"], 48 * (26 + 3 * 25 + 2 * 25 + 3 * 25 + 1))
        program = build_program(problem)
        counted = sum(v.size for v in program.problem.variables() if v.name() != "b")
        binaries = sum(v.size for v in program.problem.variables() if v.name() == "b")
        self.assertEqual(counted, counts["continuous"])
        self.assertEqual(binaries, counts["binary"])

    def test_soc_init_outside_bounds(self):
        network = _two_bus(assets=_assets(battery=3.0, soc=(2.0, 8.0, 5.0)))
        bus = network.buses[1]
        broken = dataclasses.replace(bus, prosumer=dataclasses.replace(bus.prosumer, soc_init=9.0))
        network = dataclasses.replace(network, buses=(network.buses[0], broken))
        forecast = _forecast((1,), [[1.0]], [[0.0]])
        with self.assertRaises(ProblemAssemblyError) as ctx:
            assemble_problem(network, forecast, Margins.zeros(2, 1, 1), ChanceLevels())
        self.assertEqual(ctx.exception.family, "battery")

    def test_flow_margin_exhausts_line(self):
        network = _two_bus(s_max_kva=10.0)
        forecast = _forecast((1,), [[1.0]], [[3.0]])
        margins = Margins(voltage=np.zeros((2, 1)), flow=np.array([[0.2]]))
        with self.assertRaises(ProblemAssemblyError) as ctx:
            assemble_problem(network, forecast, margins, ChanceLevels())
        self.assertEqual(ctx.exception.family, "flow")

    def test_prosumer_mismatch(self):
        network = _two_bus()
        forecast = _forecast((7,), [[1.0]], [[3.0]])
        with self.assertRaises(ProblemAssemblyError) as ctx:
            assemble_problem(network, forecast, Margins.zeros(2, 1, 1), ChanceLevels())
        self.assertEqual(ctx.exception.family, "dimensions")

    def test_leaf_permutation_leaves_canonical_form_unchanged(self):
        lines = [(0, 1, 0.05, 0.02, 20.0), (0, 2, 0.05, 0.02, 20.0), (0, 3, 0.05, 0.02, 20.0)]
        assets = _assets(battery=2.0, soc=(1.0, 5.0, 3.0))
        first = _feeder(lines, {1: assets, 2: assets, 3: assets})
        relabelled = _feeder(
            [(0, 9, 0.05, 0.02, 20.0), (0, 4, 0.05, 0.02, 20.0), (0, 6, 0.05, 0.02, 20.0)],
            {9: assets, 4: assets, 6: assets},
            order=[6, 0, 9, 4],
        )
        profile_d = [[0.5, 1.0, 0.7]] * 3
        profile_pv = [[0.0, 4.0, 2.0]] * 3
        a = _forecast((1, 2, 3), profile_d, profile_pv, 0.2, 0.3)
        b = _forecast((4, 6, 9), profile_d, profile_pv, 0.2, 0.3)
        problem_a = assemble_problem(first, a, _margins(first, a), ChanceLevels())
        problem_b = assemble_problem(relabelled, b, _margins(relabelled, b), ChanceLevels())
        self.assertEqual(problem_a.canonical_form(), problem_b.canonical_form())
        self.assertEqual(json.loads(problem_a.canonical_form())["header"]["counts"]["binary"], 9)

    def test_canonical_form_sees_data_changes(self):
        lines = [(0, 1, 0.05, 0.02, 20.0), (0, 2, 0.05, 0.02, 20.0)]
        network = _feeder(lines, {1: _assets(), 2: _assets()})
        a = _forecast((1, 2), [[0.5], [0.5]], [[3.0], [3.0]])
        b = _forecast((1, 2), [[0.5], [0.6]], [[3.0], [3.0]])
        zeros = Margins.zeros(3, 2, 1)
        self.assertNotEqual(
            assemble_problem(network, a, zeros, ChanceLevels()).canonical_form(),
            assemble_problem(network, b, zeros, ChanceLevels()).canonical_form(),
        )


class SolveTests(SimpleTestCase):
    def test_two_bus_family_matches_grid_search(self):
        rng = np.random.default_rng(10)
        for case in range(20):
            pv_kw = float(rng.uniform(0.5, 14.0))
            cap_kw = float(rng.choice([6.0, 10.0, 12.0]))
            r_ohm = float(rng.uniform(0.05, 1.5))
            s_kva = float(rng.uniform(5.0, 30.0))
            network = _two_bus(r_ohm=r_ohm, x_ohm=0.4 * r_ohm, s_max_kva=s_kva)
            forecast = _forecast((1,), [[0.0]], [[pv_kw]])
            _, solution = _solve(network, forecast, OpfSettings(export_cap_kw=cap_kw))
            with self.subTest(case=case):
                self.assertEqual(solution.status, "optimal")
                self.assertLessEqual(solution.backend.max_violation, 1e-6)
                line = network.lines[0]
                grid = np.arange(0.0, min(pv_kw, cap_kw) + 1e-9, 0.001) / 100.0
                v_hat = 1.0 + 2 * (line.r + KAPPA * line.x) * grid
                apparent = np.sqrt(1 + KAPPA**2) * grid
                feasible = grid[(v_hat <= 1.06**2) & (apparent <= line.s_max)]
                self.assertAlmostEqual(solution.objective, float(feasible.max()), delta=1e-4)

    def test_voltage_cap_matches_linearised_inverse(self):
        network = _two_bus(r_ohm=2.0, x_ohm=0.5)
        forecast = _forecast((1,), [[0.0]], [[8.0]])
        problem, solution = _solve(network, forecast)
        line = network.lines[0]
        expected = (1.06**2 - 1.0) / (2 * (line.r + KAPPA * line.x))
        self.assertLess(expected, 0.08)
        self.assertAlmostEqual(solution.values["p_exp"][0, 0], expected, delta=1e-4)
        self.assertTrue(verify_relaxation(solution, problem).exact)

    def test_envelope_is_pv_surplus_when_limits_are_slack(self):
        network = _two_bus()
        forecast = _forecast((1,), [[0.0]], [[4.0]])
        problem, solution = _solve(network, forecast)
        schedule = extract_envelopes(solution, problem)
        self.assertAlmostEqual(schedule.export_limit_kw[0, 0], 4.0, delta=1e-2)

    def test_night_floor_is_battery_discharge(self):
        network = _two_bus(assets=_assets(battery=3.5, soc=(4.0, 10.0, 7.0)))
        forecast = _forecast((1,), [[1.0]], [[0.0]])
        problem, solution = _solve(network, forecast)
        schedule = extract_envelopes(solution, problem)
        self.assertAlmostEqual(schedule.export_limit_kw[0, 0], 2.5, delta=1e-2)

    def test_zero_inputs_without_batteries(self):
        lines = [(0, 1, 0.05, 0.02, 20.0), (1, 2, 0.05, 0.02, 20.0)]
        network = _feeder(lines, {1: _assets(battery=2.0, soc=(1.0, 5.0, 3.0)), 2: _assets()})
        forecast = _forecast((1, 2), np.zeros((2, 4)), np.zeros((2, 4)))
        _, solution = _solve(network, forecast, OpfSettings(batteries=False))
        self.assertEqual(solution.status, "optimal")
        self.assertAlmostEqual(solution.objective, 0.0, delta=1e-6)
        self.assertLessEqual(np.abs(solution.values["P"]).max(), 1e-6)
        self.assertLessEqual(np.abs(solution.values["Q"]).max(), 1e-6)

    def test_sigma_monotonicity(self):
        lines = [(0, 1, 0.05, 0.02, 12.0), (1, 2, 0.2, 0.08, 12.0)]
        assets = _assets(battery=2.0, soc=(1.0, 5.0, 3.0))
        network = _feeder(lines, {1: assets, 2: assets})
        demand = [[0.4, 0.6, 1.2], [0.3, 0.5, 1.0]]
        pv = [[3.0, 7.0, 0.5], [3.5, 7.5, 0.2]]
        objectives = []
        for scale in (0.0, 0.5, 1.0, 2.0):
            forecast = _forecast((1, 2), demand, pv, 0.3 * scale, 0.8 * scale)
            _, solution = _solve(network, forecast)
            self.assertEqual(solution.status, "optimal")
            objectives.append(solution.objective)
        for looser, tighter in zip(objectives, objectives[1:]):
            self.assertLessEqual(tighter, looser + 1e-7)
        deterministic = _solve(network, _forecast((1, 2), demand, pv), margins=Margins.zeros(3, 2, 3))[1]
        self.assertAlmostEqual(objectives[0], deterministic.objective, places=10)

    def test_symmetric_star_is_fair(self):
        lines = [(0, 1, 0.3, 0.1, 5.0), (0, 2, 0.3, 0.1, 5.0), (0, 3, 0.3, 0.1, 5.0)]
        network = _feeder(lines, {1: _assets(), 2: _assets(), 3: _assets()})
        forecast = _forecast((1, 2, 3), [[0.5, 0.5, 1.0]] * 3, [[2.0, 6.0, 9.0]] * 3, 0.2, 0.5)
        problem, solution = _solve(network, forecast, OpfSettings(batteries=False))
        schedule = extract_envelopes(solution, problem)
        self.assertLessEqual(float(schedule.spread_kw.max()), network.pu_to_kw(1e-4))
        self.assertTrue(maxmin_certificate(solution, problem).ok)
        self.assertLessEqual(schedule.gamma_gap_kw, 1e-3)

    def test_rounding_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for case in range(50):
            horizon = int(rng.integers(3, 7))
            soc_init = float(rng.uniform(4.0, 10.0))
            network = _two_bus(assets=_assets(pv_cap=8.0, battery=3.5, soc=(4.0, 10.0, soc_init)))
            forecast = _forecast((1,), [rng.uniform(0.2, 2.0, horizon)], [rng.uniform(0.0, 8.0, horizon)])
            heuristic = _solve(network, forecast, strategy="round")[1]
            oracle = _solve(network, forecast, strategy="exhaustive")[1]
            with self.subTest(case=case):
                self.assertEqual(heuristic.status, "optimal")
                self.assertEqual(oracle.status, "optimal")
                self.assertAlmostEqual(heuristic.objective, oracle.objective, delta=1e-3)

    def test_exhaustive_limit(self):
        network = _two_bus(assets=_assets(battery=3.5, soc=(4.0, 10.0, 7.0)))
        forecast = _forecast((1,), [np.full(9, 0.5)], [np.full(9, 2.0)])
        problem = assemble_problem(network, forecast, Margins.zeros(2, 1, 9), ChanceLevels())
        with self.assertRaises(ValueError):
            solve(problem, binary_strategy="exhaustive")

    def test_infeasible_names_voltage_family(self):
        network = _two_bus(r_ohm=2.0, x_ohm=0.5)
        forecast = _forecast((1,), [[3.0]], [[0.0]])
        margins = Margins(voltage=np.array([[0.0], [0.05]]), flow=np.zeros((1, 1)))
        _, solution = _solve(network, forecast, margins=margins)
        self.assertEqual(solution.status, "infeasible")
        self.assertEqual(solution.hint, "voltage")

    def test_extract_requires_optimal(self):
        network = _two_bus()
        forecast = _forecast((1,), [[0.0]], [[1.0]])
        problem = assemble_problem(network, forecast, Margins.zeros(2, 1, 1), ChanceLevels())
        with self.assertRaises(EnvelopeError):
            extract_envelopes(OpfSolution(status="infeasible", objective=float("nan")), problem)


class RelaxationTests(SimpleTestCase):
    def test_reversed_loss_objective_is_flagged(self):
        network = _two_bus(s_max_kva=50.0)
        forecast = _forecast((1,), [[0.0]], [[4.0]])
        problem, solution = _solve(network, forecast, OpfSettings(loss_weight=-1.0), strategy="relax")
        self.assertEqual(solution.status, "optimal")
        report = verify_relaxation(solution, problem)
        self.assertFalse(report.exact)
        self.assertGreater(report.max_residual, 1e-5)

    def test_zero_flow_residual_is_zero(self):
        network = _two_bus()
        forecast = _forecast((1,), [[0.0]], [[0.0]])
        problem, solution = _solve(network, forecast, OpfSettings(batteries=False))
        report = verify_relaxation(solution, problem)
        self.assertLessEqual(abs(report.max_residual), 1e-6)
        self.assertTrue(report.exact)


class BundledDayTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.network = ingest_network(settings.ENVELOPES_NETWORK_PATH)
        cls.forecast = _bundled_day_forecast(cls.network)
        cls.problem, cls.solution = _solve(cls.network, cls.forecast)
        cls.schedule = extract_envelopes(cls.solution, cls.problem)

    def test_solution_is_optimal_and_conic_feasible(self):
        self.assertEqual(self.solution.status, "optimal")
        self.assertLessEqual(self.solution.backend.max_violation, 1e-6)
        self.assertGreaterEqual(float(self.solution.soc_residuals.min()), -1e-8)

    def test_relaxation_is_exact(self):
        report = verify_relaxation(self.solution, self.problem)
        self.assertLessEqual(report.max_residual, 1e-5)
        self.assertTrue(report.exact)
        self.assertTrue(report.ac_converged)
        self.assertLessEqual(report.ac_voltage_gap, 1e-5)

    def test_schedule_shape_and_caps(self):
        self.assertEqual(self.schedule.export_limit_kw.shape, (25, 48))
        self.assertTrue((self.schedule.export_limit_kw <= 10.0 + 1e-4).all())
        np.testing.assert_allclose(self.schedule.gamma_kw, self.schedule.export_limit_kw.min(axis=0))
        self.assertLessEqual(self.schedule.gamma_gap_kw, 1e-3)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_envelopes_csv(self.schedule, Path(tmp) / "envelopes.csv")
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ENVELOPE_COLUMNS)
        self.assertEqual(len(frame), 25 * 48)

    def test_binaries_are_complementary(self):
        charge = self.solution.values["charge"]
        discharge = self.solution.values["discharge"]
        self.assertLessEqual(float(np.minimum(charge, discharge).max()), 1e-6)

    def test_monte_carlo_calibration(self):
        summary = monte_carlo_validate(self.schedule, self.forecast, self.network, n=10000, seed=3)
        self.assertEqual(list(summary.rows.columns), VALIDATION_COLUMNS)
        self.assertEqual(len(summary.rows), 3 * 48)
        for name in ("voltage_upper", "voltage_lower", "flow"):
            self.assertLessEqual(summary.max_rate(name), 0.06, name)
        self.assertEqual(summary.total_diverged, 0)

    def test_monte_carlo_without_uncertainty(self):
        certain = self.forecast.scaled(0.0)
        summary = monte_carlo_validate(self.schedule, certain, self.network, n=1000, seed=4)
        self.assertEqual(float(summary.rows["violation_rate"].max()), 0.0)

    def test_inflated_envelopes_violate_more(self):
        base = monte_carlo_validate(self.schedule, self.forecast, self.network, n=2000, seed=5)
        inflated = monte_carlo_validate(self.schedule.inflated(1.5), self.forecast, self.network, n=2000, seed=5)
        self.assertGreater(inflated.max_rate("flow"), base.max_rate("flow"))
        self.assertGreater(inflated.rows["violation_rate"].sum(), base.rows["violation_rate"].sum())

    def test_too_few_draws(self):
        with self.assertRaises(ValueError):
            monte_carlo_validate(self.schedule, self.forecast, self.network, n=999)
