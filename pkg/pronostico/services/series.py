import logging
from dataclasses import dataclass
from datetime import date, timedelta
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from dateutil.relativedelta import relativedelta

logger = logging.getLogger(__name__)

SLOTS_PER_DAY = 48
SLOT_MINUTES = 30
CHANNELS = ("demand", "pv")
CHANNEL_COLUMNS = {"demand": "demand_kw", "pv": "pv_kw"}
CSV_COLUMNS = ["prosumer_id", "timestamp_iso8601", "demand_kw", "pv_kw"]
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"
TEST_DAYS_OF_MONTH = (7, 14, 28)


class DatasetError(ValueError):
    """Raised when a time-series dataset cannot be used as requested."""


def check_channel(channel: str) -> str:
    if channel not in CHANNELS:
        raise ValueError(f"Canal desconocido '{channel}'. Use uno de {CHANNELS}.")
    return channel


class SeriesFrame:
    """
    Half-hourly demand/PV series of a set of prosumers.

    ``data`` keeps the long format of the CSV (prosumer_id, timestamp,
    demand_kw, pv_kw). ``profiles(channel)`` exposes the same values as a
    (prosumer, day, slot) cube over the full date span, NaN where missing.
    """

    def __init__(self, data: pd.DataFrame):
        required = {"prosumer_id", "timestamp", "demand_kw", "pv_kw"}
        missing = required - set(data.columns)
        if missing:
            raise DatasetError(f"Faltan columnas en la serie: {sorted(missing)}.")
        if data.empty:
            raise DatasetError("La serie está vacía.")

        frame = data[["prosumer_id", "timestamp", "demand_kw", "pv_kw"]].copy()
        frame["prosumer_id"] = frame["prosumer_id"].astype(int)
        frame["timestamp"] = pd.to_datetime(frame["timestamp"])
        if frame["timestamp"].dt.tz is not None:
            raise DatasetError("Las marcas de tiempo deben ser locales, sin desfase UTC.")
        frame["demand_kw"] = frame["demand_kw"].astype(float)
        frame["pv_kw"] = frame["pv_kw"].astype(float)
        frame = frame.sort_values(["prosumer_id", "timestamp"], kind="mergesort").reset_index(drop=True)
        self.data = frame
        self._validate()

    def _validate(self) -> None:
        values = self.data[["demand_kw", "pv_kw"]].to_numpy()
        if not np.isfinite(values).all():
            raise DatasetError("La serie contiene valores no finitos.")
        if (values < 0).any():
            raise DatasetError("demand_kw y pv_kw deben ser no negativos.")

        stamps = self.data["timestamp"]
        off_grid = (stamps.dt.minute % SLOT_MINUTES != 0) | (stamps.dt.second != 0)
        if off_grid.any():
            first = stamps[off_grid].iloc[0]
            raise DatasetError(f"Marca de tiempo fuera de la grilla de 30 min: {first}.")

        same_prosumer = self.data["prosumer_id"].diff() == 0
        steps = stamps.diff()
        not_increasing = same_prosumer & (steps <= pd.Timedelta(0))
        if not_increasing.any():
            row = self.data[not_increasing].iloc[0]
            raise DatasetError(
                f"Marcas de tiempo repetidas o desordenadas para el prosumidor {row['prosumer_id']}: "
                f"{row['timestamp']}."
            )

    @classmethod
    def from_profiles(
        cls,
        start: date,
        demand: np.ndarray,
        pv: np.ndarray,
        prosumers: Optional[Sequence[int]] = None,
    ) -> "SeriesFrame":
        """Builds a frame from (prosumer, day, slot) cubes starting at ``start``."""
        demand = np.asarray(demand, dtype=float)
        pv = np.asarray(pv, dtype=float)
        if demand.ndim != 3 or demand.shape != pv.shape or demand.shape[2] != SLOTS_PER_DAY:
            raise DatasetError("Se esperaban cubos (prosumidor, día, 48) de igual forma.")
        n_prosumers, n_days, _ = demand.shape
        ids = list(prosumers) if prosumers is not None else list(range(1, n_prosumers + 1))
        stamps = pd.date_range(pd.Timestamp(start), periods=n_days * SLOTS_PER_DAY, freq=f"{SLOT_MINUTES}min")
        data = pd.DataFrame(
            {
                "prosumer_id": np.repeat(ids, n_days * SLOTS_PER_DAY),
                "timestamp": np.tile(stamps.to_numpy(), n_prosumers),
                "demand_kw": demand.reshape(-1),
                "pv_kw": pv.reshape(-1),
            }
        )
        return cls(data)

    @cached_property
    def prosumers(self) -> List[int]:
        return sorted(int(pid) for pid in self.data["prosumer_id"].unique())

    @cached_property
    def days(self) -> List[date]:
        first = self.data["timestamp"].min().date()
        last = self.data["timestamp"].max().date()
        return [first + timedelta(days=offset) for offset in range((last - first).days + 1)]

    @cached_property
    def _day_lookup(self) -> Dict[date, int]:
        return {day: index for index, day in enumerate(self.days)}

    def day_index(self, day: date) -> int:
        try:
            return self._day_lookup[day]
        except KeyError as exc:
            raise DatasetError(f"El día {day.isoformat()} está fuera de la serie.") from exc

    def has_day(self, day: date) -> bool:
        return day in self._day_lookup

    @cached_property
    def _positions(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        stamps = self.data["timestamp"]
        first = pd.Timestamp(self.days[0])
        day_pos = ((stamps.dt.normalize() - first).dt.days).to_numpy()
        slot_pos = (stamps.dt.hour * 2 + stamps.dt.minute // SLOT_MINUTES).to_numpy()
        prosumer_lookup = {pid: index for index, pid in enumerate(self.prosumers)}
        prosumer_pos = self.data["prosumer_id"].map(prosumer_lookup).to_numpy()
        return prosumer_pos, day_pos, slot_pos

    @cached_property
    def _cubes(self) -> Dict[str, np.ndarray]:
        prosumer_pos, day_pos, slot_pos = self._positions
        shape = (len(self.prosumers), len(self.days), SLOTS_PER_DAY)
        cubes = {}
        for channel, column in CHANNEL_COLUMNS.items():
            cube = np.full(shape, np.nan)
            cube[prosumer_pos, day_pos, slot_pos] = self.data[column].to_numpy()
            cubes[channel] = cube
        return cubes

    def profiles(self, channel: str) -> np.ndarray:
        """(prosumer, day, slot) cube of one channel in kW."""
        return self._cubes[check_channel(channel)]

    def day_profile(self, prosumer: int, day: date, channel: str) -> np.ndarray:
        row = self.prosumers.index(prosumer)
        return self.profiles(channel)[row, self.day_index(day)]

    def incomplete_days(self) -> List[date]:
        """Days of the covered span where some prosumer lacks one of the 48 slots."""
        prosumer_pos, day_pos, _ = self._positions
        counts = np.zeros((len(self.prosumers), len(self.days)), dtype=int)
        np.add.at(counts, (prosumer_pos, day_pos), 1)
        bad = np.flatnonzero((counts != SLOTS_PER_DAY).any(axis=0))
        return [self.days[index] for index in bad]


@dataclass(frozen=True)
class SplitScheme:
    test_days_of_month: Tuple[int, ...] = TEST_DAYS_OF_MONTH
    training_years: int = 1
    holdout_years: int = 1


@dataclass(frozen=True)
class DatasetSplit:
    t1: Tuple[date, ...]
    t2: Tuple[date, ...]
    t3: Tuple[date, ...]

    def as_dict(self) -> Dict[str, List[str]]:
        return {name: [day.isoformat() for day in getattr(self, name)] for name in ("t1", "t2", "t3")}

    @classmethod
    def from_dict(cls, payload: Dict[str, Iterable[str]]) -> "DatasetSplit":
        return cls(**{name: tuple(date.fromisoformat(d) for d in payload[name]) for name in ("t1", "t2", "t3")})


def split_dataset(frame: SeriesFrame, scheme: Optional[SplitScheme] = None) -> DatasetSplit:
    """
    T1 = first year, T3 = days numbered 7/14/28 of the following year, T2 = the
    rest of that year. Days after the second year are left out of the split.
    """

    scheme = scheme or SplitScheme()
    incomplete = frame.incomplete_days()
    if incomplete:
        listed = ", ".join(day.isoformat() for day in incomplete[:20])
        extra = f" (y {len(incomplete) - 20} más)" if len(incomplete) > 20 else ""
        raise DatasetError(f"Días incompletos en la serie: {listed}{extra}.")

    start = frame.days[0]
    t1_end = start + relativedelta(years=scheme.training_years)
    t2_end = t1_end + relativedelta(years=scheme.holdout_years)
    if frame.days[-1] < t2_end - timedelta(days=1):
        raise DatasetError(
            f"La serie cubre {start.isoformat()}–{frame.days[-1].isoformat()}; se requieren al menos "
            f"{scheme.training_years + scheme.holdout_years} años completos (hasta {(t2_end - timedelta(days=1)).isoformat()})."
        )

    t1 = tuple(day for day in frame.days if day < t1_end)
    second = [day for day in frame.days if t1_end <= day < t2_end]
    t3 = tuple(day for day in second if day.day in scheme.test_days_of_month)
    t2 = tuple(day for day in second if day.day not in scheme.test_days_of_month)
    ignored = len(frame.days) - len(t1) - len(second)
    if ignored:
        logger.info("split_dataset: %s días posteriores al segundo año quedan fuera", ignored)
    return DatasetSplit(t1=t1, t2=t2, t3=t3)


def read_series_csv(path: Union[str, Path]) -> SeriesFrame:
    try:
        raw = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as exc:
        raise DatasetError(f"No se pudo leer la serie {path}: {exc}") from exc
    if list(raw.columns) != CSV_COLUMNS:
        raise DatasetError(f"Encabezado inválido {list(raw.columns)}; se esperaba {CSV_COLUMNS}.")
    try:
        stamps = pd.to_datetime(raw["timestamp_iso8601"], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DatasetError(f"Marca de tiempo inválida: {exc}") from exc
    data = raw.rename(columns={"timestamp_iso8601": "timestamp"}).assign(timestamp=stamps)
    return SeriesFrame(data)


def write_series_csv(frame: SeriesFrame, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    out = frame.data.copy()
    out["timestamp"] = out["timestamp"].dt.strftime(TIMESTAMP_FORMAT)
    out = out.rename(columns={"timestamp": "timestamp_iso8601"})[CSV_COLUMNS]
    out.to_csv(target, index=False, float_format="%.4f", lineterminator="\n")
    return target


__all__ = [
    "CHANNELS",
    "DatasetError",
    "DatasetSplit",
    "SLOTS_PER_DAY",
    "SeriesFrame",
    "SplitScheme",
    "check_channel",
    "read_series_csv",
    "split_dataset",
    "write_series_csv",
]
