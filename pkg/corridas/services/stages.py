import hashlib
import json
import logging
import time
import uuid
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import joblib
import numpy as np

from bitacora.models import BitacoraEntry
from bitacora.utils import registrar_evento
from envolventes.services.chance import UncertaintySpec, build_margins
from envolventes.services.envelopes import (
    EnvelopeSchedule,
    extract_envelopes,
    maxmin_certificate,
    verify_relaxation,
    write_envelopes_csv,
)
from envolventes.services.montecarlo import CONSTRAINTS, monte_carlo_validate, write_validation_csv
from envolventes.services.problem import ProblemAssemblyError, assemble_problem
from envolventes.services.solver import solve
from escenarios.services.checkpoint import load_checkpoint, save_checkpoint
from escenarios.services.sampling import sample_scenarios
from escenarios.services.training import train, write_loss_history
from metricas.services.evaluation import evaluate_forecasts
from metricas.services.gaussian import (
    GaussianForecast,
    NodalForecast,
    fit_gaussian,
    read_gaussian_csv,
    write_gaussian_csv,
)
from pronostico.services.conditions import condition_matrix, usable_days
from pronostico.services.point_model import fit_point_model, load_point_model, predict_day_profiles, save_point_model
from pronostico.services.residuals import compute_residuals, load_residuals, save_residuals
from pronostico.services.series import (
    CHANNELS,
    SLOTS_PER_DAY,
    DatasetSplit,
    SeriesFrame,
    read_series_csv,
    split_dataset,
    write_series_csv,
)
from pronostico.services.synthetic import synthesize_series
from red.services.network import Network, ingest_network
from red.services.topology import path_sensitivities

from .config import ConfigError, RunConfig

logger = logging.getLogger(__name__)

CACHE_FILENAME = "stage_cache.json"
SPLIT_FILE = "split.json"
GAUSSIAN_FILE = "gaussian.csv"
ENVELOPES_FILE = "envelopes.csv"
SCHEDULE_FILE = "envelopes.joblib"
SOLVER_REPORT_FILE = "solver_report.json"
VALIDATION_FILE = "validation.csv"
EVALUATION_FILE = "evaluation.csv"
EVALUATION_SUMMARY_FILE = "evaluation_summary.json"

NETWORK_INPUT = "@network"
SERIES_INPUT = "@series"


def _per_channel(pattern: str) -> Tuple[str, ...]:
    return tuple(pattern.format(channel=channel) for channel in CHANNELS)


POINT_FILES = _per_channel("point_{channel}.pkl")
POINT_META_FILES = _per_channel("point_{channel}.json")
RESIDUAL_FILES = _per_channel("residuals_{channel}.joblib")
CHECKPOINT_FILES = _per_channel("cgan_{channel}.joblib")
HISTORY_FILES = _per_channel("history_{channel}.csv")
SCENARIO_FILES = _per_channel("scenarios_{channel}.joblib")


class StageError(RuntimeError):
    """Raised when a pipeline stage fails; artefacts of earlier stages stay on disk."""

    def __init__(self, stage: str, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"La etapa '{stage}' falló: {cause}")


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def derived_seed(*entropy: int) -> int:
    """Independent 31-bit seed for a sub-stream of the run seed."""
    state = np.random.SeedSequence([int(value) for value in entropy]).generate_state(1, dtype=np.uint64)[0]
    return int(state % (2**31 - 1))


@dataclass
class RunContext:
    """Shared state of one invocation: config, audit id and lazily loaded inputs."""

    config: RunConfig
    run_id: str = field(default_factory=lambda: uuid.uuid4().hex[:16])
    timings: Dict[str, float] = field(default_factory=dict)
    statuses: Dict[str, str] = field(default_factory=dict)
    details: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    _series: Optional[SeriesFrame] = None
    _network: Optional[Network] = None

    @property
    def out(self) -> Path:
        return self.config.output_dir

    def path(self, name: str) -> Path:
        if name == NETWORK_INPUT:
            return self.config.network_path
        if name == SERIES_INPUT:
            return self.config.series_path
        return self.out / name

    @property
    def series(self) -> SeriesFrame:
        if self._series is None:
            self._series = read_series_csv(self.config.require_series())
        return self._series

    @property
    def network(self) -> Network:
        if self._network is None:
            self._network = ingest_network(self.config.network_path)
        return self._network

    def split(self) -> DatasetSplit:
        return DatasetSplit.from_dict(json.loads(self.path(SPLIT_FILE).read_text(encoding="utf-8")))

    def horizon_days(self) -> List[date]:
        test_days = list(self.split().t3)
        horizon = self.config.horizon
        if isinstance(horizon, int):
            if horizon > len(test_days):
                raise ValueError(f"HORIZON_DAYS={horizon} supera los {len(test_days)} días de prueba (T3).")
            return test_days[:horizon]
        outside = [day.isoformat() for day in horizon if day not in set(test_days)]
        if outside:
            raise ValueError(f"Fechas fuera del conjunto de prueba T3: {', '.join(outside)}.")
        return sorted(horizon)


# ---------------------------------------------------------------------------
# Etapas
# ---------------------------------------------------------------------------


def _stage_split(ctx: RunContext) -> Dict[str, Any]:
    split = split_dataset(ctx.series)
    _write_json(ctx.path(SPLIT_FILE), split.as_dict())
    return {"t1": len(split.t1), "t2": len(split.t2), "t3": len(split.t3)}


def _stage_fit_point(ctx: RunContext) -> Dict[str, Any]:
    split = ctx.split()
    detail = {}
    for channel in CHANNELS:
        model = fit_point_model(ctx.series, split.t1, channel, alpha=ctx.config.ridge_alpha)
        save_point_model(model, ctx.out)
        detail[channel] = {"mae_kw": round(model.in_sample_mae, 6), "degenerate": model.degenerate}
    return detail


def _stage_residuals(ctx: RunContext) -> Dict[str, Any]:
    frame = ctx.series
    days = usable_days(frame, ctx.split().t2)
    positions = [frame.day_index(day) for day in days]
    detail = {}
    for channel, target in zip(CHANNELS, RESIDUAL_FILES):
        model = load_point_model(ctx.out, channel)
        actual = frame.profiles(channel)[:, positions, :]
        residuals = compute_residuals(
            actual,
            predict_day_profiles(model, frame, days),
            channel=channel,
            prosumers=frame.prosumers,
            days=days,
        )
        save_residuals(residuals, ctx.path(target))
        detail[channel] = {"days": len(days), "residual_std_kw": round(float(residuals.residual.std()), 6)}
    return detail


def _stage_train_cgan(ctx: RunContext) -> Dict[str, Any]:
    frame = ctx.series
    detail = {}
    for index, channel in enumerate(CHANNELS):
        model = load_point_model(ctx.out, channel)
        residuals = load_residuals(ctx.path(RESIDUAL_FILES[index]))
        conditions = np.vstack(
            [condition_matrix(frame, residuals.days, channel, prosumer, model.scaler) for prosumer in residuals.prosumers]
        )
        config = replace(ctx.config.train, seed=derived_seed(ctx.config.seed, index))
        result = train(residuals.day_rows(), conditions, config)
        save_checkpoint(
            ctx.path(CHECKPOINT_FILES[index]),
            result.generator,
            result.critic,
            config.mode,
            config.seed,
            config.iterations,
        )
        write_loss_history(result.history, ctx.path(HISTORY_FILES[index]))
        last = result.history.iloc[-1] if len(result.history) else None
        detail[channel] = {
            "rows": int(conditions.shape[0]),
            "L_D": None if last is None else round(float(last["L_D"]), 6),
            "L_G": None if last is None else round(float(last["L_G"]), 6),
        }
    return detail


def _stage_sample(ctx: RunContext) -> Dict[str, Any]:
    frame = ctx.series
    days = ctx.horizon_days()
    n = ctx.config.scenarios
    for index, channel in enumerate(CHANNELS):
        model = load_point_model(ctx.out, channel)
        generator, _, meta = load_checkpoint(ctx.path(CHECKPOINT_FILES[index]))
        point = predict_day_profiles(model, frame, days)
        residuals = np.empty((len(frame.prosumers), len(days), n, SLOTS_PER_DAY))
        for row, prosumer in enumerate(frame.prosumers):
            conditions = condition_matrix(frame, days, channel, prosumer, model.scaler)
            for column, day in enumerate(days):
                seed = derived_seed(ctx.config.seed, index, prosumer, day.toordinal())
                residuals[row, column] = sample_scenarios(generator, conditions[column], n, seed).scenarios
        payload = {
            "channel": channel,
            "prosumers": list(frame.prosumers),
            "days": [day.isoformat() for day in days],
            "point": point,
            "residuals": residuals,
            "checkpoint": meta,
        }
        joblib.dump(payload, ctx.path(SCENARIO_FILES[index]))
    return {"days": [day.isoformat() for day in days], "scenarios": n}


def _load_scenarios(ctx: RunContext, index: int) -> Dict[str, Any]:
    payload = joblib.load(ctx.path(SCENARIO_FILES[index]))
    payload["days"] = [date.fromisoformat(day) for day in payload["days"]]
    return payload


def _stage_fit_gauss(ctx: RunContext) -> Dict[str, Any]:
    fits = {}
    for index, channel in enumerate(CHANNELS):
        payload = _load_scenarios(ctx, index)
        gaussian = fit_gaussian(payload["residuals"], payload["point"])
        rows = len(payload["prosumers"])
        fits[channel] = GaussianForecast(
            mu=gaussian.mu.reshape(rows, -1),
            sigma=gaussian.sigma.reshape(rows, -1),
        )
    slot_dates = tuple(day for day in payload["days"] for _ in range(SLOTS_PER_DAY))
    forecast = NodalForecast(
        prosumers=tuple(payload["prosumers"]),
        demand=fits["demand"],
        pv=fits["pv"],
        slot_dates=slot_dates,
    )
    write_gaussian_csv(forecast, ctx.path(GAUSSIAN_FILE))
    return {
        channel: {"sigma_mean_kw": round(float(fit.sigma.mean()), 6), "sigma_max_kw": round(float(fit.sigma.max()), 6)}
        for channel, fit in fits.items()
    }


def _concat_schedules(schedules: List[EnvelopeSchedule], slot_dates) -> EnvelopeSchedule:
    return EnvelopeSchedule(
        prosumers=schedules[0].prosumers,
        export_limit_kw=np.hstack([item.export_limit_kw for item in schedules]),
        gamma_kw=np.concatenate([item.gamma_kw for item in schedules]),
        reactive_kw=np.hstack([item.reactive_kw for item in schedules]),
        export_cap_kw=schedules[0].export_cap_kw,
        slot_dates=tuple(slot_dates),
        gamma_gap_kw=max(item.gamma_gap_kw for item in schedules),
    )


def _stage_solve_envelopes(ctx: RunContext) -> Dict[str, Any]:
    """One chance-constrained program per horizon day; batteries restart from soc_init each day."""
    config = ctx.config
    network = ctx.network
    forecast = read_gaussian_csv(ctx.path(GAUSSIAN_FILE))
    sensitivities = path_sensitivities(network)
    power_factors = [network.buses[network.index_of(p)].prosumer.power_factor for p in forecast.prosumers]

    schedules, report = [], []
    for start in range(0, forecast.horizon, SLOTS_PER_DAY):
        day_forecast = forecast.select(start, start + SLOTS_PER_DAY)
        label = day_forecast.slot_dates[0].isoformat() if day_forecast.slot_dates else str(start // SLOTS_PER_DAY)
        margins = build_margins(
            UncertaintySpec.from_forecast(network, day_forecast),
            sensitivities,
            config.levels,
            power_factors,
        )
        try:
            problem = assemble_problem(network, day_forecast, margins, config.levels, config.opf)
        except ProblemAssemblyError as exc:
            raise StageError("solve_envelopes", f"{label}: {exc}") from exc
        solution = solve(problem, backend=config.solver, binary_strategy=config.binary_strategy)
        if not solution.optimal:
            raise StageError(
                "solve_envelopes",
                f"{label}: estado '{solution.status}' (familia señalada: {solution.hint or 'n/d'})",
            )
        relaxation = verify_relaxation(solution, problem)
        certificate = maxmin_certificate(solution, problem)
        schedules.append(extract_envelopes(solution, problem))
        report.append(
            {
                "date": label,
                "status": solution.status,
                "objective_kw": round(float(network.pu_to_kw(solution.objective)), 6),
                "strategy": solution.strategy,
                "passes": solution.passes,
                "iterations": solution.backend.iterations if solution.backend else None,
                "max_soc_residual": float(f"{relaxation.max_residual:.3e}"),
                "relaxation_exact": relaxation.exact,
                "ac_voltage_gap": float(f"{relaxation.ac_voltage_gap:.3e}"),
                "maxmin_certificate": certificate.ok,
            }
        )

    schedule = _concat_schedules(schedules, forecast.slot_dates)
    write_envelopes_csv(schedule, ctx.path(ENVELOPES_FILE))
    joblib.dump(schedule, ctx.path(SCHEDULE_FILE))
    _write_json(ctx.path(SOLVER_REPORT_FILE), report)
    return {
        "days": len(report),
        "objective_kw": round(sum(item["objective_kw"] for item in report), 6),
        "relaxation_exact": all(item["relaxation_exact"] for item in report),
    }


def _stage_validate(ctx: RunContext) -> Dict[str, Any]:
    schedule = joblib.load(ctx.path(SCHEDULE_FILE))
    forecast = read_gaussian_csv(ctx.path(GAUSSIAN_FILE))
    summary = monte_carlo_validate(schedule, forecast, ctx.network, n=ctx.config.mc_draws, seed=ctx.config.seed)
    write_validation_csv(summary, ctx.path(VALIDATION_FILE))
    levels = ctx.config.levels
    allowed = {"voltage_upper": levels.xi_v, "voltage_lower": levels.xi_v, "flow": levels.xi_l}
    for name in CONSTRAINTS:
        if summary.max_rate(name) > allowed[name] + 0.01:
            logger.warning("Violación empírica de '%s' = %.4f supera el nivel %.2f", name, summary.max_rate(name), allowed[name])
    return {
        "max_rate": {name: round(summary.max_rate(name), 6) for name in CONSTRAINTS},
        "diverged": summary.total_diverged,
    }


def _stage_evaluate(ctx: RunContext) -> Dict[str, Any]:
    frame = ctx.series
    records = []
    for index, channel in enumerate(CHANNELS):
        payload = _load_scenarios(ctx, index)
        for row, prosumer in enumerate(payload["prosumers"]):
            for column, day in enumerate(payload["days"]):
                point = payload["point"][row, column]
                ensemble = point[None, :] + payload["residuals"][row, column]
                actual = frame.day_profile(prosumer, day, channel)
                records.append((prosumer, channel, day, ensemble, actual, point))
    report = evaluate_forecasts(records)
    report.rows.to_csv(ctx.path(EVALUATION_FILE), index=False, float_format="%.6f", lineterminator="\n")
    summary = {
        channel: {key: round(value, 6) for key, value in values.items()} for channel, values in report.summary.items()
    }
    _write_json(ctx.path(EVALUATION_SUMMARY_FILE), summary)
    return summary


@dataclass(frozen=True)
class Stage:
    name: str
    runner: Callable[[RunContext], Dict[str, Any]]
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    params: Tuple[str, ...] = ()


STAGES: Dict[str, Stage] = {
    stage.name: stage
    for stage in (
        Stage("split", _stage_split, (SERIES_INPUT,), (SPLIT_FILE,)),
        Stage(
            "fit_point",
            _stage_fit_point,
            (SERIES_INPUT, SPLIT_FILE),
            POINT_FILES + POINT_META_FILES,
            ("RIDGE_ALPHA",),
        ),
        Stage("residuals", _stage_residuals, (SERIES_INPUT, SPLIT_FILE) + POINT_FILES, RESIDUAL_FILES),
        Stage(
            "train_cgan",
            _stage_train_cgan,
            (SERIES_INPUT,) + POINT_FILES + RESIDUAL_FILES,
            CHECKPOINT_FILES + HISTORY_FILES,
            ("SEED", "TRAIN"),
        ),
        Stage(
            "sample",
            _stage_sample,
            (SERIES_INPUT, SPLIT_FILE) + POINT_FILES + CHECKPOINT_FILES,
            SCENARIO_FILES,
            ("SEED", "SCENARIOS", "HORIZON_DAYS"),
        ),
        Stage("fit_gauss", _stage_fit_gauss, SCENARIO_FILES, (GAUSSIAN_FILE,)),
        Stage(
            "solve_envelopes",
            _stage_solve_envelopes,
            (NETWORK_INPUT, GAUSSIAN_FILE),
            (ENVELOPES_FILE, SCHEDULE_FILE, SOLVER_REPORT_FILE),
            (
                "XI_V",
                "XI_L",
                "XI_P",
                "EXPORT_CAP_KW",
                "DELTA_T_H",
                "LOSS_WEIGHT",
                "FILL_WEIGHT",
                "TERMINAL_SOC",
                "BINARY_STRATEGY",
                "SOLVER",
            ),
        ),
        Stage(
            "validate",
            _stage_validate,
            (NETWORK_INPUT, GAUSSIAN_FILE, SCHEDULE_FILE),
            (VALIDATION_FILE,),
            ("SEED", "MC_DRAWS", "XI_V", "XI_L"),
        ),
        Stage("evaluate", _stage_evaluate, (SERIES_INPUT,) + SCENARIO_FILES, (EVALUATION_FILE, EVALUATION_SUMMARY_FILE)),
    )
}
STAGE_ORDER = tuple(STAGES)


# ---------------------------------------------------------------------------
# Caché de etapas
# ---------------------------------------------------------------------------


def _producer_of(name: str) -> Optional[str]:
    for stage in STAGES.values():
        if name in stage.outputs:
            return stage.name
    return None


def _load_cache(ctx: RunContext) -> Dict[str, Any]:
    path = ctx.out / CACHE_FILENAME
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError):
        logger.warning("Caché de etapas ilegible en %s; se recalcula todo.", path)
        return {}


def stage_key(ctx: RunContext, stage: Stage) -> str:
    """sha256 over the stage name, its configuration slice and the digests of its inputs."""
    settings_slice = {key: ctx.config.as_dict()[key] for key in stage.params}
    digests = {}
    for name in stage.inputs:
        path = ctx.path(name)
        if not path.is_file():
            if name == SERIES_INPUT:
                raise ConfigError(f"No existe la serie {path}; ejecute 'synthgen' o defina SERIES_PATH.")
            producer = _producer_of(name)
            hint = f"; ejecute antes '{producer}'" if producer else ""
            raise StageError(stage.name, f"falta el artefacto {name}{hint}")
        digests[name] = file_digest(path)
    canonical = json.dumps({"stage": stage.name, "params": settings_slice, "inputs": digests}, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _cache_hit(ctx: RunContext, stage: Stage, key: str, cache: Dict[str, Any]) -> bool:
    entry = cache.get(stage.name)
    if not entry or entry.get("key") != key:
        return False
    for name, digest in entry.get("outputs", {}).items():
        path = ctx.path(name)
        if not path.is_file() or file_digest(path) != digest:
            return False
    return set(entry.get("outputs", {})) == set(stage.outputs)


def run_stage(ctx: RunContext, name: str, force: bool = False) -> Dict[str, Any]:
    """
    Runs one stage unless the cache shows identical inputs and intact outputs.
    Failures are re-raised as ``StageError``; configuration problems keep
    their ``ConfigError`` type.
    """

    if name not in STAGES:
        raise ValueError(f"Etapa desconocida '{name}'. Opciones: {', '.join(STAGE_ORDER)}.")
    stage = STAGES[name]
    ctx.out.mkdir(parents=True, exist_ok=True)
    key = stage_key(ctx, stage)
    cache = _load_cache(ctx)

    if not force and _cache_hit(ctx, stage, key, cache):
        logger.info("Etapa %s sin cambios; se reutilizan sus artefactos.", name)
        ctx.statuses[name] = "cache"
        ctx.timings[name] = 0.0
        ctx.details[name] = cache[name].get("detail", {})
        registrar_evento(ctx.run_id, name, "Artefactos reutilizados", estado=BitacoraEntry.ESTADO_CACHE)
        return ctx.details[name]

    registrar_evento(ctx.run_id, name, "Inicio de etapa", estado=BitacoraEntry.ESTADO_INICIO)
    logger.info("Etapa %s: inicio", name)
    started = time.perf_counter()
    try:
        detail = stage.runner(ctx) or {}
    except (ConfigError, StageError) as exc:
        registrar_evento(ctx.run_id, name, str(exc)[:255], estado=BitacoraEntry.ESTADO_ERROR)
        raise
    except Exception as exc:
        registrar_evento(ctx.run_id, name, str(exc)[:255], estado=BitacoraEntry.ESTADO_ERROR)
        logger.exception("Etapa %s falló", name)
        raise StageError(name, exc) from exc
    elapsed = time.perf_counter() - started

    cache[name] = {
        "key": key,
        "outputs": {output: file_digest(ctx.path(output)) for output in stage.outputs},
        "detail": detail,
    }
    _write_json(ctx.out / CACHE_FILENAME, cache)
    ctx.statuses[name] = "ok"
    ctx.timings[name] = round(elapsed, 3)
    ctx.details[name] = detail
    registrar_evento(ctx.run_id, name, "Etapa completada", duracion_s=elapsed, detalle=detail)
    logger.info("Etapa %s completada en %.2f s", name, elapsed)
    return detail


def generate_series(config: RunConfig, years: int = 2, prosumers: Optional[int] = None, start: Optional[date] = None) -> Path:
    """Synthetic demand/PV series for the prosumers of the configured network, written to SERIES_PATH."""
    if prosumers is None:
        prosumers = len(ingest_network(config.network_path).prosumer_buses)
    options = {"start": start} if start is not None else {}
    frame = synthesize_series(seed=config.seed, years=years, prosumers=prosumers, **options)
    return write_series_csv(frame, config.series_path)


__all__ = [
    "RunContext",
    "STAGES",
    "STAGE_ORDER",
    "Stage",
    "StageError",
    "derived_seed",
    "file_digest",
    "generate_series",
    "run_stage",
    "stage_key",
]
