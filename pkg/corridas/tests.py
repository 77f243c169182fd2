import json
import shutil
import tempfile
from datetime import date
from io import StringIO
from pathlib import Path

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from bitacora.models import BitacoraEntry
from corridas.services.config import ConfigError, RunConfig, parse_horizon, parse_tariff
from corridas.services.manifest import MANIFEST_FILENAME, read_manifest
from corridas.services.pipeline import run_pipeline
from corridas.services.plotdata import build_plot_data
from corridas.services.stages import (
    ENVELOPES_FILE,
    GAUSSIAN_FILE,
    STAGE_ORDER,
    RunContext,
    StageError,
    file_digest,
    run_stage,
)
from envolventes.services.envelopes import ENVELOPE_COLUMNS
from metricas.services.evaluation import REPORT_COLUMNS
from pronostico.services.series import read_series_csv

PV_ASSETS = {
    "pv_cap_kw": 6.0,
    "batt_p_max_kw": 3.5,
    "batt_p_min_kw": -3.5,
    "soc_min_kwh": 4.0,
    "soc_max_kwh": 10.0,
    "soc_init_kwh": 7.0,
    "eta": 0.95,
    "power_factor": 0.9,
}

SMALL_RUN = {
    "HORIZON_DAYS": "1",
    "SCENARIOS": "20",
    "NOISE_DIM": "8",
    "ITERATIONS": "3",
    "BATCH_SIZE": "8",
    "LOG_EVERY": "0",
    "MC_DRAWS": "1000",
}


def _write_network(directory: Path) -> Path:
    document = {
        "name": "feeder-test-2",
        "base_mva": 0.1,
        "base_kv": 0.4,
        "slack_v": 1.0,
        "buses": [
            {"id": 0, "v_min_pct": 94, "v_max_pct": 106, "slack": True},
            {"id": 1, "v_min_pct": 94, "v_max_pct": 106, "prosumer": PV_ASSETS},
            {"id": 2, "v_min_pct": 94, "v_max_pct": 106, "prosumer": PV_ASSETS},
        ],
        "lines": [
            {"from": 0, "to": 1, "r_ohm": 0.01, "x_ohm": 0.005, "s_max_kva": 100.0},
            {"from": 1, "to": 2, "r_ohm": 0.01, "x_ohm": 0.005, "s_max_kva": 100.0},
        ],
    }
    path = directory / "network.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def _write_config(directory: Path, name: str = "run.env", **overrides) -> Path:
    values = dict(SMALL_RUN, **overrides)
    path = directory / name
    path.write_text("".join(f"{key}={value}\n" for key, value in values.items()), encoding="utf-8")
    return path


class TariffTests(SimpleTestCase):
    def test_default_table_partitions_the_day(self):
        tariff = parse_tariff("0-7:15.96,7-15:25.96,15-21:57.76,21-22:25.96,22-24:15.96", "9")
        self.assertEqual([block.cents_per_kwh for block in tariff.tou], [15.96, 25.96, 57.76, 25.96, 15.96])
        self.assertEqual(tariff.fit, 9.0)

    def test_gap_is_rejected(self):
        with self.assertRaises(ConfigError):
            parse_tariff("0-7:15.96,8-24:25.96", "9")

    def test_short_day_is_rejected(self):
        with self.assertRaises(ConfigError):
            parse_tariff("0-7:15.96,7-22:25.96", "9")

    def test_malformed_block(self):
        with self.assertRaises(ConfigError):
            parse_tariff("0-7=15.96", "9")


class RunConfigTests(SimpleTestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, True)

    def test_defaults_without_file(self):
        config = RunConfig.from_file(out=self.tmp)
        self.assertEqual(config.scenarios, 1000)
        self.assertEqual(config.levels.xi_v, 0.05)
        self.assertEqual(config.train.noise_dim, 512)
        self.assertEqual(config.train.critic_steps_per_gen, 5)
        self.assertEqual(config.opf.export_cap_kw, 10.0)
        self.assertEqual(config.series_path, self.tmp / "series.csv")
        self.assertEqual(config.tariff.as_dict()["fit_c_per_kwh"], 9.0)

    def test_file_values_and_command_line_precedence(self):
        path = _write_config(self.tmp, XI_V="0.2", SEED="5")
        config = RunConfig.from_file(path, seed=11, out=self.tmp / "out")
        self.assertEqual(config.levels.xi_v, 0.2)
        self.assertEqual(config.seed, 11)
        self.assertEqual(config.train.iterations, 3)
        self.assertEqual(config.output_dir, self.tmp / "out")

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_file(self.tmp / "nope.env")

    def test_invalid_chance_level(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_file(_write_config(self.tmp, XI_V="0.7"))

    def test_unparsable_number(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_file(_write_config(self.tmp, SCENARIOS="muchos"))

    def test_missing_network(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_file(_write_config(self.tmp, NETWORK_PATH=str(self.tmp / "missing.json")))

    def test_hash_depends_on_values_not_on_output_dir(self):
        path = _write_config(self.tmp)
        first = RunConfig.from_file(path, out=self.tmp / "a")
        second = RunConfig.from_file(path, out=self.tmp / "b")
        third = RunConfig.from_file(path, seed=99, out=self.tmp / "a")
        self.assertEqual(first.config_hash, second.config_hash)
        self.assertNotEqual(first.config_hash, third.config_hash)

    def test_horizon_forms(self):
        self.assertEqual(parse_horizon("7"), 7)
        self.assertEqual(parse_horizon("2011-07-07, 2011-07-14"), (date(2011, 7, 7), date(2011, 7, 14)))
        for bad in ("0", "", "2011-13-01", "2011-07-07,2011-07-07"):
            with self.assertRaises(ConfigError):
                parse_horizon(bad)


class PipelineTests(TestCase):
    @classmethod
    def setUpTestData(cls):
        cls.tmp = Path(tempfile.mkdtemp())
        cls.network = _write_network(cls.tmp)
        cls.config_path = _write_config(cls.tmp, NETWORK_PATH=str(cls.network))
        cls.config = RunConfig.from_file(cls.config_path, seed=7, out=cls.tmp / "run")
        cls.manifest = run_pipeline(cls.config)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)
        super().tearDownClass()

    def test_all_outputs_present(self):
        run = self.config.output_dir
        for name in ("series.csv", "split.json", GAUSSIAN_FILE, ENVELOPES_FILE, "validation.csv", "evaluation.csv"):
            self.assertTrue((run / name).is_file(), name)
        self.assertTrue((run / MANIFEST_FILENAME).is_file())
        self.assertEqual(set(self.manifest.stages), set(STAGE_ORDER))
        for name, digest in self.manifest.outputs.items():
            self.assertEqual(file_digest(run / name), digest)

    def test_series_matches_network_prosumers(self):
        frame = read_series_csv(self.config.series_path)
        self.assertEqual(frame.prosumers, [1, 2])

    def test_envelope_schema(self):
        frame = pd.read_csv(self.config.output_dir / ENVELOPES_FILE)
        self.assertEqual(list(frame.columns), ENVELOPE_COLUMNS)
        self.assertEqual(len(frame), 2 * 48)
        self.assertTrue((frame["export_limit_kw"] <= 10.0 + 1e-6).all())

    def test_evaluation_schema(self):
        frame = pd.read_csv(self.config.output_dir / "evaluation.csv")
        self.assertEqual(list(frame.columns), REPORT_COLUMNS)
        self.assertEqual(len(frame), 2 * 2 * 48)
        self.assertTrue((frame["crps"] >= 0).all())

    def test_tariff_is_echoed_in_manifest(self):
        manifest = read_manifest(self.config.output_dir)
        prices = [block["c_per_kwh"] for block in manifest["tariff"]["tou_c_per_kwh"]]
        self.assertEqual(prices, [15.96, 25.96, 57.76, 25.96, 15.96])
        self.assertEqual(manifest["tariff"]["fit_c_per_kwh"], 9.0)
        self.assertEqual(manifest["config_hash"], self.config.config_hash)

    def test_rerun_uses_cache(self):
        context = RunContext(config=self.config)
        manifest = run_pipeline(self.config, context=context)
        self.assertEqual(set(manifest.stages.values()), {"cache"})
        self.assertEqual(manifest.outputs, self.manifest.outputs)
        self.assertTrue(BitacoraEntry.objects.filter(corrida=context.run_id, estado=BitacoraEntry.ESTADO_CACHE).exists())

    def test_deleting_downstream_reruns_only_that_stage(self):
        (self.config.output_dir / ENVELOPES_FILE).unlink()
        context = RunContext(config=self.config)
        run_pipeline(self.config, context=context)
        self.assertEqual(context.statuses["solve_envelopes"], "ok")
        for name in ("split", "fit_point", "residuals", "train_cgan", "sample", "fit_gauss", "validate", "evaluate"):
            self.assertEqual(context.statuses[name], "cache", name)
        self.assertEqual(file_digest(self.config.output_dir / ENVELOPES_FILE), self.manifest.outputs[ENVELOPES_FILE])

    def test_same_seed_reproduces_every_output(self):
        other = RunConfig.from_file(self.config_path, seed=7, out=self.tmp / "again")
        manifest = run_pipeline(other)
        self.assertEqual(manifest.outputs, self.manifest.outputs)

    def test_looser_chance_levels_do_not_shrink_envelopes(self):
        loose_dir = self.tmp / "loose"
        loose_dir.mkdir()
        shutil.copy(self.config.output_dir / GAUSSIAN_FILE, loose_dir / GAUSSIAN_FILE)
        loose = RunConfig.from_file(
            _write_config(self.tmp, "loose.env", NETWORK_PATH=str(self.network), XI_V="0.2", XI_L="0.2"),
            seed=7,
            out=loose_dir,
        )
        run_stage(RunContext(config=loose), "solve_envelopes")
        tight = pd.read_csv(self.config.output_dir / ENVELOPES_FILE)
        relaxed = pd.read_csv(loose_dir / ENVELOPES_FILE)
        tight_total = tight.groupby("slot")["gamma_kw"].first().sum()
        relaxed_total = relaxed.groupby("slot")["gamma_kw"].first().sum()
        self.assertGreaterEqual(relaxed_total, tight_total - 1e-3)

    def test_audit_rows_per_stage(self):
        stages = set(BitacoraEntry.objects.values_list("etapa", flat=True))
        self.assertTrue(set(STAGE_ORDER) <= stages)

    def test_plot_data(self):
        written = build_plot_data(self.config.output_dir, self.config.series_path)
        loss = pd.read_csv(written["loss_demand"])
        self.assertEqual(list(loss.columns), ["iteration", "L_G", "L_D", "GP"])
        self.assertEqual(len(loss), 3)
        gaussian = pd.read_csv(written["gaussian"])
        self.assertEqual(len(gaussian), 48 * 2)
        envelopes = pd.read_csv(written["envelopes_week"])
        self.assertEqual(len(envelopes), 2 * 48)
        scenarios = pd.read_csv(written["scenarios"])
        self.assertTrue({"actual", "point", "s0"} <= set(scenarios["series"]))


class CommandExitCodeTests(TestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, True)

    def test_config_error_exits_with_two(self):
        with self.assertRaises(CommandError) as caught:
            call_command("split", config=str(self.tmp / "missing.env"), out=str(self.tmp))
        self.assertEqual(caught.exception.returncode, 2)

    def test_missing_artifact_exits_with_three(self):
        with self.assertRaises(CommandError) as caught:
            call_command("fit_gauss", out=str(self.tmp))
        self.assertEqual(caught.exception.returncode, 3)
        self.assertIn("sample", str(caught.exception))

    def test_stage_error_names_the_stage(self):
        config = RunConfig.from_file(out=self.tmp)
        with self.assertRaises(StageError) as caught:
            run_stage(RunContext(config=config), "validate")
        self.assertEqual(caught.exception.stage, "validate")

    def test_synthgen_rejects_one_year(self):
        with self.assertRaises(CommandError) as caught:
            call_command("synthgen", years=1, out=str(self.tmp))
        self.assertEqual(caught.exception.returncode, 2)

    def test_synthgen_is_seeded(self):
        network = _write_network(self.tmp)
        config = _write_config(self.tmp, NETWORK_PATH=str(network))
        call_command("synthgen", config=str(config), seed=3, out=str(self.tmp / "a"), stdout=StringIO())
        call_command("synthgen", config=str(config), seed=3, out=str(self.tmp / "b"), stdout=StringIO())
        first = self.tmp / "a" / "series.csv"
        self.assertEqual(file_digest(first), file_digest(self.tmp / "b" / "series.csv"))
        frame = read_series_csv(first)
        self.assertEqual(frame.prosumers, [1, 2])
        self.assertEqual(len(frame.days), 731)
