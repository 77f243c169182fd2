"""
Data behind the figures of a run, one CSV per figure. Nothing is rendered.

* ``loss_<channel>.csv``: iteration, L_G, L_D, GP
* ``scenarios.csv``: prosumer_id, channel, date, slot, series, value_kw
  (``series`` is ``actual``, ``point`` or ``s<k>`` for the first scenarios)
* ``gaussian.csv``: prosumer_id, channel, date, slot, mu_kw, sigma_kw, q05_kw, q95_kw
* ``envelopes_week.csv``: prosumer_id, date, slot, export_limit_kw, gamma_kw, mean_net_kw
"""

import logging
from datetime import date
from pathlib import Path
from typing import Dict, Optional, Union

import joblib
import numpy as np
import pandas as pd

from envolventes.services.chance import normal_quantile
from escenarios.services.training import HISTORY_COLUMNS
from metricas.services.gaussian import read_gaussian_csv
from pronostico.services.series import CHANNELS, SLOTS_PER_DAY, read_series_csv

from .stages import (
    GAUSSIAN_FILE,
    HISTORY_FILES,
    SCENARIO_FILES,
    SCHEDULE_FILE,
    StageError,
)

logger = logging.getLogger(__name__)

PLOT_DIR = "plots"
PLOT_SCENARIOS = 20
SCENARIO_COLUMNS = ["prosumer_id", "channel", "date", "slot", "series", "value_kw"]
GAUSSIAN_PLOT_COLUMNS = ["prosumer_id", "channel", "date", "slot", "mu_kw", "sigma_kw", "q05_kw", "q95_kw"]
ENVELOPE_PLOT_COLUMNS = ["prosumer_id", "date", "slot", "export_limit_kw", "gamma_kw", "mean_net_kw"]


def _require(run_dir: Path, name: str) -> Path:
    path = run_dir / name
    if not path.is_file():
        raise StageError("plot_data", f"falta el artefacto {name} en {run_dir}")
    return path


def _write(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    return path


def _scenario_frame(run_dir: Path, series_path: Path, prosumer: Optional[int]) -> pd.DataFrame:
    frame = read_series_csv(series_path)
    parts = []
    for channel, name in zip(CHANNELS, SCENARIO_FILES):
        payload = joblib.load(_require(run_dir, name))
        prosumers = list(payload["prosumers"])
        chosen = prosumers[0] if prosumer is None else prosumer
        if chosen not in prosumers:
            raise StageError("plot_data", f"el prosumidor {chosen} no está en los escenarios")
        row = prosumers.index(chosen)
        slots = np.arange(SLOTS_PER_DAY)
        for column, day in enumerate(payload["days"]):
            point = payload["point"][row, column]
            members = point[None, :] + payload["residuals"][row, column, :PLOT_SCENARIOS]
            series = {"actual": frame.day_profile(chosen, date.fromisoformat(day), channel), "point": point}
            series.update({f"s{k}": member for k, member in enumerate(members)})
            for label, values in series.items():
                parts.append(
                    pd.DataFrame(
                        {
                            "prosumer_id": chosen,
                            "channel": channel,
                            "date": day,
                            "slot": slots,
                            "series": label,
                            "value_kw": values,
                        }
                    )
                )
    return pd.concat(parts, ignore_index=True)[SCENARIO_COLUMNS]


def _gaussian_frame(run_dir: Path, prosumer: Optional[int]) -> pd.DataFrame:
    forecast = read_gaussian_csv(_require(run_dir, GAUSSIAN_FILE))
    chosen = forecast.prosumers[0] if prosumer is None else prosumer
    if chosen not in forecast.prosumers:
        raise StageError("plot_data", f"el prosumidor {chosen} no está en el pronóstico gaussiano")
    frame = forecast.to_frame()
    frame = frame[frame["prosumer_id"] == chosen].reset_index(drop=True)
    z = normal_quantile(0.95)
    frame["q05_kw"] = frame["mu_kw"] - z * frame["sigma_kw"]
    frame["q95_kw"] = frame["mu_kw"] + z * frame["sigma_kw"]
    return frame[GAUSSIAN_PLOT_COLUMNS]


def _envelope_frame(run_dir: Path) -> pd.DataFrame:
    schedule = joblib.load(_require(run_dir, SCHEDULE_FILE))
    forecast = read_gaussian_csv(_require(run_dir, GAUSSIAN_FILE))
    if tuple(forecast.prosumers) != tuple(schedule.prosumers) or forecast.horizon != schedule.horizon:
        raise StageError("plot_data", "envolventes y pronóstico gaussiano no están alineados")
    mean_net = forecast.pv.mu - forecast.demand.mu
    slots = np.arange(schedule.horizon)
    dates = [day.isoformat() for day in schedule.slot_dates] if schedule.slot_dates else [""] * schedule.horizon
    parts = [
        pd.DataFrame(
            {
                "prosumer_id": prosumer,
                "date": dates,
                "slot": slots % SLOTS_PER_DAY,
                "export_limit_kw": schedule.export_limit_kw[row],
                "gamma_kw": schedule.gamma_kw,
                "mean_net_kw": mean_net[row],
            }
        )
        for row, prosumer in enumerate(schedule.prosumers)
    ]
    return pd.concat(parts, ignore_index=True)[ENVELOPE_PLOT_COLUMNS]


def build_plot_data(
    run_dir: Union[str, Path],
    series_path: Union[str, Path],
    prosumer: Optional[int] = None,
) -> Dict[str, Path]:
    """Writes the plot CSVs under ``<run_dir>/plots`` and returns them by name."""
    run_dir = Path(run_dir)
    target = run_dir / PLOT_DIR
    target.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Path] = {}

    for channel, name in zip(CHANNELS, HISTORY_FILES):
        history = pd.read_csv(_require(run_dir, name))
        written[f"loss_{channel}"] = _write(history[HISTORY_COLUMNS], target / f"loss_{channel}.csv")

    series_path = Path(series_path)
    if not series_path.is_file():
        raise StageError("plot_data", f"no existe la serie {series_path}")
    written["scenarios"] = _write(_scenario_frame(run_dir, series_path, prosumer), target / "scenarios.csv")
    written["gaussian"] = _write(_gaussian_frame(run_dir, prosumer), target / "gaussian.csv")
    written["envelopes_week"] = _write(_envelope_frame(run_dir), target / "envelopes_week.csv")
    logger.info("Datos de figuras escritos en %s: %s", target, ", ".join(sorted(written)))
    return written


__all__ = ["PLOT_DIR", "build_plot_data"]
