import logging
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .series import CHANNELS, SLOTS_PER_DAY, DatasetError, SeriesFrame, check_channel

logger = logging.getLogger(__name__)

LAGS = (1, 2, 3, 7, 14, 21)
SEASON_START_MONTHS = (3, 6, 9, 12)
SEASON_LENGTH = 92
CONDITION_DIM = len(LAGS) * SLOTS_PER_DAY + 2


class MissingLagError(DatasetError):
    """Raised when one of the lag days needed by a condition vector is absent."""


@dataclass(frozen=True)
class ConditionVector:
    values: np.ndarray
    day: date
    prosumer: int
    channel: str

    def __post_init__(self):
        if self.values.shape != (CONDITION_DIM,):
            raise ValueError(f"El vector de condición debe tener dimensión {CONDITION_DIM}.")

    def lag_block(self, lag: int) -> np.ndarray:
        position = LAGS.index(lag)
        return self.values[position * SLOTS_PER_DAY:(position + 1) * SLOTS_PER_DAY]

    @property
    def weekday(self) -> float:
        return float(self.values[-2])

    @property
    def season_day(self) -> float:
        return float(self.values[-1])


def season_start(day: date) -> date:
    year = day.year if day.month >= SEASON_START_MONTHS[0] else day.year - 1
    month = max((m for m in SEASON_START_MONTHS if (year, m) <= (day.year, day.month)), default=12)
    return date(year, month, 1)


def calendar_features(day: date) -> Tuple[float, float]:
    """(W_d, S_d): weekday (Monday = 0) over 6 and 1-based day of season over 92."""
    day_of_season = (day - season_start(day)).days + 1
    return day.weekday() / 6.0, day_of_season / SEASON_LENGTH


class ConditionScaler:
    """Min-max extrema per (prosumer, channel), frozen once fitted."""

    def __init__(self, lows: Dict[Tuple[int, str], float], highs: Dict[Tuple[int, str], float]):
        self.lows = dict(lows)
        self.highs = dict(highs)

    @classmethod
    def fit(cls, frame: SeriesFrame, days: Iterable[date]) -> "ConditionScaler":
        positions = [frame.day_index(day) for day in days]
        if not positions:
            raise DatasetError("No hay días para calcular los extremos de normalización.")
        lows, highs = {}, {}
        for channel in CHANNELS:
            cube = frame.profiles(channel)[:, positions, :]
            for row, prosumer in enumerate(frame.prosumers):
                lows[(prosumer, channel)] = float(np.nanmin(cube[row]))
                highs[(prosumer, channel)] = float(np.nanmax(cube[row]))
        return cls(lows, highs)

    def bounds(self, prosumer: int, channel: str) -> Tuple[float, float]:
        key = (prosumer, channel)
        if key not in self.lows:
            raise DatasetError(f"Sin extremos de normalización para el prosumidor {prosumer} ({channel}).")
        return self.lows[key], self.highs[key]

    def transform(self, values: np.ndarray, prosumer: int, channel: str) -> np.ndarray:
        low, high = self.bounds(prosumer, channel)
        span = high - low
        if span <= 0:
            return np.zeros_like(values, dtype=float)
        return (np.asarray(values, dtype=float) - low) / span

    def inverse(self, values: np.ndarray, prosumer: int, channel: str) -> np.ndarray:
        low, high = self.bounds(prosumer, channel)
        span = high - low
        if span <= 0:
            return np.full_like(np.asarray(values, dtype=float), low)
        return np.asarray(values, dtype=float) * span + low

    def as_dict(self) -> Dict[str, list]:
        return {
            "entries": [
                [prosumer, channel, self.lows[(prosumer, channel)], self.highs[(prosumer, channel)]]
                for prosumer, channel in sorted(self.lows)
            ]
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, list]) -> "ConditionScaler":
        lows, highs = {}, {}
        for prosumer, channel, low, high in payload["entries"]:
            lows[(int(prosumer), channel)] = float(low)
            highs[(int(prosumer), channel)] = float(high)
        return cls(lows, highs)


def _lag_positions(frame: SeriesFrame, day: date) -> list:
    positions = []
    for lag in LAGS:
        lag_day = day - timedelta(days=lag)
        if not frame.has_day(lag_day):
            raise MissingLagError(f"Falta el día de rezago {lag_day.isoformat()} (d−{lag}) para {day.isoformat()}.")
        positions.append(frame.day_index(lag_day))
    return positions


def condition_matrix(
    frame: SeriesFrame,
    days: Sequence[date],
    channel: str,
    prosumer: int,
    scaler: ConditionScaler,
) -> np.ndarray:
    """Stacks the condition vectors of ``days`` for one prosumer: shape (len(days), 290)."""
    check_channel(channel)
    row = frame.prosumers.index(prosumer)
    cube = frame.profiles(channel)[row]
    out = np.empty((len(days), CONDITION_DIM))
    for index, day in enumerate(days):
        lags = cube[_lag_positions(frame, day)]
        if np.isnan(lags).any():
            raise MissingLagError(f"Rezagos incompletos para {day.isoformat()} (prosumidor {prosumer}).")
        out[index, :-2] = scaler.transform(lags.reshape(-1), prosumer, channel)
        out[index, -2:] = calendar_features(day)
    return out


def build_condition_vector(
    frame: SeriesFrame,
    day: date,
    channel: str,
    prosumer: Optional[int] = None,
    scaler: Optional[ConditionScaler] = None,
) -> ConditionVector:
    """
    Condition vector [L_{d-1}, L_{d-2}, L_{d-3}, L_{d-7}, L_{d-14}, L_{d-21}, W_d, S_d].

    Lag blocks are min-max normalised with ``scaler``; without one the extrema
    are taken from the whole frame.
    """

    if prosumer is None:
        prosumer = frame.prosumers[0]
    if scaler is None:
        logger.debug("build_condition_vector sin escalador: extremos de toda la serie")
        scaler = ConditionScaler.fit(frame, frame.days)
    values = condition_matrix(frame, [day], channel, prosumer, scaler)[0]
    return ConditionVector(values=values, day=day, prosumer=prosumer, channel=channel)


def usable_days(frame: SeriesFrame, days: Iterable[date]) -> list:
    """Days of ``days`` whose six lag days are all inside the frame."""
    return [day for day in days if all(frame.has_day(day - timedelta(days=lag)) for lag in LAGS)]


__all__ = [
    "CONDITION_DIM",
    "ConditionScaler",
    "ConditionVector",
    "LAGS",
    "MissingLagError",
    "build_condition_vector",
    "calendar_features",
    "condition_matrix",
    "season_start",
    "usable_days",
]
