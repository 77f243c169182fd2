import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import joblib
import numpy as np
from sklearn.linear_model import LinearRegression, Ridge

from .conditions import ConditionScaler, ConditionVector, condition_matrix, usable_days
from .series import SLOTS_PER_DAY, DatasetError, SeriesFrame, check_channel

logger = logging.getLogger(__name__)

DEFAULT_RIDGE_ALPHA = 1e-2
MIN_TRAINING_DAYS = 60
MODEL_FILENAME = "point_{channel}.pkl"
META_FILENAME = "point_{channel}.json"


@dataclass
class PointForecastModel:
    """
    Day-ahead profile predictor f(C) for one channel, pooled over prosumers.

    The regression maps the normalised condition vector to the normalised
    48-slot profile; predictions are mapped back with the prosumer's extrema
    and clamped at zero.
    """

    channel: str
    scaler: ConditionScaler
    alpha: float = DEFAULT_RIDGE_ALPHA
    regressor: Optional[object] = None
    degenerate: bool = False
    in_sample_mae: float = 0.0
    training_days: int = 0
    metadata: Dict[str, object] = field(default_factory=dict)

    def predict_normalized(self, conditions: np.ndarray) -> np.ndarray:
        conditions = np.atleast_2d(conditions)
        if self.degenerate or self.regressor is None:
            return np.zeros((conditions.shape[0], SLOTS_PER_DAY))
        return self.regressor.predict(conditions)

    def predict_kw(self, conditions: np.ndarray, prosumer: int) -> np.ndarray:
        if self.degenerate:
            return np.zeros((np.atleast_2d(conditions).shape[0], SLOTS_PER_DAY))
        scaled = self.predict_normalized(conditions)
        return np.maximum(self.scaler.inverse(scaled, prosumer, self.channel), 0.0)


def _make_regressor(alpha: float):
    if alpha > 0:
        return Ridge(alpha=alpha)
    # minimum-norm least squares
    return LinearRegression()


def fit_point_model(
    frame: SeriesFrame,
    days: Sequence[date],
    channel: str,
    scaler: Optional[ConditionScaler] = None,
    alpha: float = DEFAULT_RIDGE_ALPHA,
) -> PointForecastModel:
    """Fits the ridge baseline on ``days`` (T1) for every prosumer of ``frame``."""
    check_channel(channel)
    days = list(days)
    if len(days) < MIN_TRAINING_DAYS:
        raise DatasetError(f"Se requieren al menos {MIN_TRAINING_DAYS} días de entrenamiento (hay {len(days)}).")
    scaler = scaler or ConditionScaler.fit(frame, days)

    training = usable_days(frame, days)
    if not training:
        raise DatasetError("Ningún día de entrenamiento tiene sus seis rezagos disponibles.")

    cube = frame.profiles(channel)
    positions = [frame.day_index(day) for day in training]
    if np.nanmax(np.abs(cube[:, positions, :])) == 0.0:
        logger.warning("Canal '%s' idénticamente cero en el entrenamiento: el pronóstico será cero.", channel)
        return PointForecastModel(
            channel=channel,
            scaler=scaler,
            alpha=alpha,
            degenerate=True,
            training_days=len(training),
            metadata={"prosumers": frame.prosumers},
        )

    features, targets = [], []
    for row, prosumer in enumerate(frame.prosumers):
        features.append(condition_matrix(frame, training, channel, prosumer, scaler))
        targets.append(scaler.transform(cube[row, positions, :], prosumer, channel))
    X = np.vstack(features)
    y = np.vstack(targets)

    regressor = _make_regressor(alpha)
    regressor.fit(X, y)
    model = PointForecastModel(
        channel=channel,
        scaler=scaler,
        alpha=alpha,
        regressor=regressor,
        training_days=len(training),
        metadata={"prosumers": frame.prosumers},
    )

    errors = [
        np.abs(model.predict_kw(features[row], prosumer) - cube[row, positions, :])
        for row, prosumer in enumerate(frame.prosumers)
    ]
    model.in_sample_mae = float(np.mean(np.concatenate(errors)))
    logger.info(
        "Modelo puntual '%s': %s días × %s prosumidores, MAE en muestra %.4f kW",
        channel,
        len(training),
        len(frame.prosumers),
        model.in_sample_mae,
    )
    return model


def point_forecast(model: PointForecastModel, condition: ConditionVector) -> np.ndarray:
    """Nonnegative 48-slot profile in kW for the condition's prosumer."""
    if condition.channel != model.channel:
        raise ValueError(f"El modelo es del canal '{model.channel}', la condición de '{condition.channel}'.")
    return model.predict_kw(condition.values, condition.prosumer)[0]


def predict_day_profiles(model: PointForecastModel, frame: SeriesFrame, days: Sequence[date]) -> np.ndarray:
    """Point forecasts for every prosumer of ``frame`` and every day: (prosumer, day, slot)."""
    out = np.zeros((len(frame.prosumers), len(days), SLOTS_PER_DAY))
    if not days:
        return out
    for row, prosumer in enumerate(frame.prosumers):
        conditions = condition_matrix(frame, days, model.channel, prosumer, model.scaler)
        out[row] = model.predict_kw(conditions, prosumer)
    return out


def save_point_model(model: PointForecastModel, directory: Union[str, Path]) -> Path:
    target_dir = Path(directory)
    target_dir.mkdir(parents=True, exist_ok=True)
    model_path = target_dir / MODEL_FILENAME.format(channel=model.channel)
    joblib.dump(model, model_path)
    meta = {
        "channel": model.channel,
        "alpha": model.alpha,
        "degenerate": model.degenerate,
        "in_sample_mae": model.in_sample_mae,
        "training_days": model.training_days,
        "scaler": model.scaler.as_dict(),
    }
    (target_dir / META_FILENAME.format(channel=model.channel)).write_text(json.dumps(meta, indent=2))
    return model_path


def load_point_model(directory: Union[str, Path], channel: str) -> PointForecastModel:
    model_path = Path(directory) / MODEL_FILENAME.format(channel=check_channel(channel))
    if not model_path.exists():
        raise DatasetError(f"No existe el modelo puntual {model_path}.")
    return joblib.load(model_path)


__all__ = [
    "DEFAULT_RIDGE_ALPHA",
    "PointForecastModel",
    "fit_point_model",
    "load_point_model",
    "point_forecast",
    "predict_day_profiles",
    "save_point_model",
]
