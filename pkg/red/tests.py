import io
import itertools
import tempfile
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from red.services.network import (
    NetworkFormatError,
    ingest_network,
    serialize_network,
    write_network,
)
from red.services.topology import (
    NonRadialNetworkError,
    path_sensitivities,
    tree_layout,
    validate_radial,
)


def _doc(lines, n_buses=None, base_kv=1.0, base_mva=1.0):
    if n_buses is None:
        n_buses = 1 + max(max(a, b) for a, b, *_ in lines)
    return {
        "base_mva": base_mva,
        "base_kv": base_kv,
        "slack_v": 1.0,
        "buses": [{"id": i, "v_min_pct": 94, "v_max_pct": 106} for i in range(n_buses)],
        "lines": [
            {"from": a, "to": b, "r_ohm": r, "x_ohm": x, "s_max_kva": 500.0}
            for a, b, r, x in lines
        ],
    }


def _dfs_paths(network):
    """Independent oracle: set of line indexes on the slack→bus path, by DFS."""
    adjacency = {bus_id: [] for bus_id in network.bus_ids}
    for index, line in enumerate(network.lines):
        adjacency[line.from_bus].append((line.to_bus, index))
        adjacency[line.to_bus].append((line.from_bus, index))
    paths = {network.slack_bus: frozenset()}
    stack = [network.slack_bus]
    while stack:
        bus = stack.pop()
        for neighbour, index in adjacency[bus]:
            if neighbour not in paths:
                paths[neighbour] = paths[bus] | {index}
                stack.append(neighbour)
    return paths


class IngestNetworkTests(SimpleTestCase):
    def setUp(self):
        self.network = ingest_network(settings.ENVELOPES_NETWORK_PATH)

    def test_bundled_network_prosumers(self):
        prosumers = [bus.prosumer for bus in self.network.buses if bus.prosumer is not None]
        self.assertEqual(len(prosumers), 25)
        for assets in prosumers:
            self.assertEqual(assets.pv_cap, 6.0)
            self.assertEqual(assets.batt_p_max, 3.5)
            self.assertEqual(assets.batt_p_min, -3.5)
            self.assertEqual((assets.soc_min, assets.soc_max), (4.0, 10.0))

    def test_voltage_bounds_are_squared(self):
        for bus in self.network.buses:
            self.assertAlmostEqual(bus.v_min, 0.8836, places=12)
            self.assertAlmostEqual(bus.v_max, 1.1236, places=12)

    def test_per_unit_conversion(self):
        line = self.network.lines[0]
        self.assertAlmostEqual(line.r, 0.01 / 1.6, places=14)
        self.assertAlmostEqual(line.s_max, 1.0, places=14)
        self.assertAlmostEqual(self.network.kw_to_pu(6.0), 0.06, places=14)

    def test_missing_lines_key(self):
        document = _doc([(0, 1, 0.01, 0.01)])
        del document["lines"]
        with self.assertRaises(NetworkFormatError) as ctx:
            ingest_network(document)
        self.assertEqual(ctx.exception.field_path, "lines")
        self.assertIn("lines", str(ctx.exception))

    def test_non_positive_base(self):
        document = _doc([(0, 1, 0.01, 0.01)], base_mva=0.0)
        with self.assertRaises(NetworkFormatError) as ctx:
            ingest_network(document)
        self.assertEqual(ctx.exception.field_path, "base_mva")

    def test_invalid_json_reports_line(self):
        with self.assertRaises(NetworkFormatError) as ctx:
            ingest_network(io.StringIO('{\n  "base_mva": 1,\n  oops\n}'))
        self.assertEqual(ctx.exception.line, 3)

    def test_bad_prosumer_field_is_named(self):
        document = _doc([(0, 1, 0.01, 0.01)])
        document["buses"][1]["prosumer"] = {
            "pv_cap_kw": 5, "batt_p_max_kw": 1, "batt_p_min_kw": -1,
            "soc_min_kwh": 2, "soc_max_kwh": 4, "soc_init_kwh": 9,
        }
        with self.assertRaises(NetworkFormatError) as ctx:
            ingest_network(document)
        self.assertEqual(ctx.exception.field_path, "buses[1].prosumer.soc_init_kwh")

    def test_defaults_for_eta_and_power_factor(self):
        document = _doc([(0, 1, 0.01, 0.01)])
        document["buses"][1]["prosumer"] = {
            "pv_cap_kw": 5, "batt_p_max_kw": 1, "batt_p_min_kw": -1,
            "soc_min_kwh": 2, "soc_max_kwh": 4, "soc_init_kwh": 3,
        }
        assets = ingest_network(document).buses[1].prosumer
        self.assertEqual(assets.eta, 0.95)
        self.assertEqual(assets.power_factor, 0.9)

    def test_round_trip(self):
        again = ingest_network(serialize_network(self.network))
        self.assertEqual(again, self.network)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_network(self.network, Path(tmp) / "red.json")
            self.assertEqual(ingest_network(path), self.network)


class ValidateRadialTests(SimpleTestCase):
    def test_bundled_network_has_no_defects(self):
        report = validate_radial(ingest_network(settings.ENVELOPES_NETWORK_PATH))
        self.assertTrue(report.ok)

    def test_duplicated_line_is_a_cycle(self):
        network = ingest_network(_doc([(0, 1, 0.01, 0.0), (1, 2, 0.01, 0.0), (1, 2, 0.01, 0.0)]))
        report = validate_radial(network)
        self.assertEqual(report.kinds(), ["cycle"])
        self.assertEqual(report.defects[0].lines, (1, 2))

    def test_disconnected_buses(self):
        network = ingest_network(_doc([], n_buses=2))
        report = validate_radial(network)
        self.assertEqual(report.kinds(), ["disconnected"])
        self.assertEqual(report.defects[0].buses, (1,))

    def test_two_slack_buses(self):
        document = _doc([(0, 1, 0.01, 0.0)])
        document["buses"][0]["slack"] = True
        document["buses"][1]["slack"] = True
        report = validate_radial(ingest_network(document))
        self.assertEqual(report.kinds(), ["slack"])

    def test_path_sensitivities_reject_meshed_input(self):
        network = ingest_network(_doc([(0, 1, 0.01, 0.0), (1, 2, 0.01, 0.0), (2, 0, 0.01, 0.0)]))
        with self.assertRaises(NonRadialNetworkError):
            path_sensitivities(network)


class PathSensitivityTests(SimpleTestCase):
    def test_chain(self):
        sens = path_sensitivities(ingest_network(_doc([(0, 1, 0.01, 0.0), (1, 2, 0.01, 0.0)])))
        self.assertAlmostEqual(sens.R[2, 2], 0.02, places=15)
        self.assertAlmostEqual(sens.R[1, 2], 0.01, places=15)
        self.assertEqual(sens.R[0].tolist(), [0.0, 0.0, 0.0])
        self.assertEqual(sens.downstream[0], frozenset({1, 2}))
        self.assertEqual(sens.downstream[1], frozenset({2}))

    def test_star_leaves_share_nothing(self):
        sens = path_sensitivities(
            ingest_network(_doc([(0, 1, 0.02, 0.01), (0, 2, 0.03, 0.01), (0, 3, 0.04, 0.01)]))
        )
        for i, k in itertools.permutations([1, 2, 3], 2):
            self.assertEqual(sens.R[i, k], 0.0)
            self.assertEqual(sens.X[i, k], 0.0)

    def test_bundled_network_matches_path_enumeration(self):
        network = ingest_network(settings.ENVELOPES_NETWORK_PATH)
        sens = path_sensitivities(network)
        paths = _dfs_paths(network)
        for i, bus_i in enumerate(network.bus_ids):
            for k, bus_k in enumerate(network.bus_ids):
                shared = paths[bus_i] & paths[bus_k]
                expected_r = sum(network.lines[index].r for index in shared)
                expected_x = sum(network.lines[index].x for index in shared)
                self.assertAlmostEqual(sens.R[i, k], expected_r, places=12)
                self.assertAlmostEqual(sens.X[i, k], expected_x, places=12)

    def test_downstream_sizes_sum_to_depths(self):
        network = ingest_network(settings.ENVELOPES_NETWORK_PATH)
        sens = path_sensitivities(network)
        depths = {bus: len(path) for bus, path in _dfs_paths(network).items()}
        self.assertEqual(sum(len(s) for s in sens.downstream), sum(depths.values()))

    def test_symmetry_and_dominance(self):
        sens = path_sensitivities(ingest_network(settings.ENVELOPES_NETWORK_PATH))
        np.testing.assert_array_equal(sens.R, sens.R.T)
        np.testing.assert_array_equal(sens.X, sens.X.T)
        self.assertTrue((sens.R >= 0).all())
        diag = np.diag(sens.R)
        self.assertTrue((sens.R <= np.minimum.outer(diag, diag) + 1e-15).all())

    def test_layout_orients_lines_from_slack(self):
        network = ingest_network(_doc([(1, 0, 0.01, 0.0), (2, 1, 0.01, 0.0)]))
        layout = tree_layout(network)
        self.assertEqual(layout.line_parent.tolist(), [0, 1])
        self.assertEqual(layout.line_child.tolist(), [1, 2])
        self.assertEqual(layout.depth.tolist(), [0, 1, 2])
