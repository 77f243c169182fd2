import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from .scores import crps_ensemble, pinball, quantile

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["prosumer_id", "channel", "date", "slot", "crps", "pl_q10", "pl_q50", "pl_q90"]
QUANTILE_COLUMNS = {0.1: "pl_q10", 0.5: "pl_q50", 0.9: "pl_q90"}


@dataclass
class EvaluationReport:
    rows: pd.DataFrame
    summary: Dict[str, Dict[str, float]] = field(default_factory=dict)
    per_slot: Optional[pd.DataFrame] = None


def score_day(ensemble: np.ndarray, actual: np.ndarray) -> Dict[str, np.ndarray]:
    """Scores of one (n, 48) ensemble against the realised 48-slot profile."""
    members = np.asarray(ensemble, dtype=float).T
    scores = {"crps": crps_ensemble(members, actual)}
    for q, column in QUANTILE_COLUMNS.items():
        scores[column] = pinball(quantile(members, q, axis=-1), actual, q)
    return scores


def evaluate_forecasts(
    records: Iterable[Tuple[int, str, date, np.ndarray, np.ndarray, Optional[np.ndarray]]],
) -> EvaluationReport:
    """
    Scores ensembles day by day. Each record is
    (prosumer_id, channel, date, ensemble (n, 48) in kW, actual (48,), point (48,) or None).

    The summary holds pooled means per channel plus MAE/RMSE of the point
    forecast when given.
    """

    frames = []
    point_errors: Dict[str, list] = {}
    for prosumer, channel, day, ensemble, actual, point in records:
        scores = score_day(ensemble, actual)
        frame = pd.DataFrame(scores)
        frame.insert(0, "slot", np.arange(len(actual)))
        frame.insert(0, "date", day.isoformat())
        frame.insert(0, "channel", channel)
        frame.insert(0, "prosumer_id", prosumer)
        frames.append(frame)
        if point is not None:
            point_errors.setdefault(channel, []).append(np.asarray(actual) - np.asarray(point))

    if not frames:
        return EvaluationReport(rows=pd.DataFrame(columns=REPORT_COLUMNS))
    rows = pd.concat(frames, ignore_index=True)[REPORT_COLUMNS]

    summary: Dict[str, Dict[str, float]] = {}
    for channel, part in rows.groupby("channel", sort=True):
        summary[channel] = {
            column: float(part[column].mean()) for column in ("crps", "pl_q10", "pl_q50", "pl_q90")
        }
        summary[channel]["pl_mean"] = float(part[["pl_q10", "pl_q50", "pl_q90"]].to_numpy().mean())
        errors = point_errors.get(channel)
        if errors:
            stacked = np.concatenate(errors)
            summary[channel]["mae"] = float(np.abs(stacked).mean())
            summary[channel]["rmse"] = float(np.sqrt((stacked**2).mean()))
    per_slot = rows.groupby(["channel", "slot"], sort=True)[["crps", "pl_q10", "pl_q50", "pl_q90"]].mean().reset_index()
    logger.info("Evaluación: %s filas, resumen %s", len(rows), summary)
    return EvaluationReport(rows=rows, summary=summary, per_slot=per_slot)


__all__ = ["EvaluationReport", "REPORT_COLUMNS", "evaluate_forecasts", "score_day"]
