from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

GAUSSIAN_COLUMNS = ["prosumer_id", "channel", "date", "slot", "mu_kw", "sigma_kw"]


@dataclass(frozen=True)
class GaussianForecast:
    """Per-slot mean and standard deviation in kW (slots on the last axis)."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu y sigma deben tener la misma forma.")
        if (self.sigma < 0).any():
            raise ValueError("sigma no puede ser negativa.")


def fit_gaussian(scenarios, point) -> GaussianForecast:
    """
    mu = point + mean of the residual scenarios, sigma = their sample standard
    deviation (n - 1). Scenarios are on the second-to-last axis: (..., n, slots).
    """

    values = np.asarray(getattr(scenarios, "scenarios", scenarios), dtype=float)
    if values.ndim < 2 or values.shape[-2] < 2:
        raise ValueError("Se requieren al menos 2 escenarios para estimar la desviación estándar.")
    point = np.asarray(point, dtype=float)
    mu = point + values.mean(axis=-2)
    sigma = values.std(axis=-2, ddof=1)
    return GaussianForecast(mu=mu, sigma=sigma)


@dataclass(frozen=True)
class NodalForecast:
    """
    Gaussian demand and PV forecasts of every prosumer over a horizon of slots.

    Arrays are (prosumer, slot) in kW; ``slot_dates`` gives the day of each slot.
    """

    prosumers: Tuple[int, ...]
    demand: GaussianForecast
    pv: GaussianForecast
    slot_dates: Tuple[date, ...] = ()

    @property
    def horizon(self) -> int:
        return self.demand.mu.shape[-1]

    def select(self, start: int, stop: int) -> "NodalForecast":
        return NodalForecast(
            prosumers=self.prosumers,
            demand=GaussianForecast(self.demand.mu[:, start:stop], self.demand.sigma[:, start:stop]),
            pv=GaussianForecast(self.pv.mu[:, start:stop], self.pv.sigma[:, start:stop]),
            slot_dates=self.slot_dates[start:stop],
        )

    def scaled(self, factor: float) -> "NodalForecast":
        """Same means, standard deviations multiplied by ``factor``."""
        return NodalForecast(
            prosumers=self.prosumers,
            demand=GaussianForecast(self.demand.mu, self.demand.sigma * factor),
            pv=GaussianForecast(self.pv.mu, self.pv.sigma * factor),
            slot_dates=self.slot_dates,
        )

    def to_frame(self) -> pd.DataFrame:
        rows: List[dict] = []
        slots_per_day = 48
        for channel, forecast in (("demand", self.demand), ("pv", self.pv)):
            for row, prosumer in enumerate(self.prosumers):
                for t in range(self.horizon):
                    rows.append(
                        {
                            "prosumer_id": prosumer,
                            "channel": channel,
                            "date": self.slot_dates[t].isoformat() if self.slot_dates else "",
                            "slot": t % slots_per_day,
                            "mu_kw": forecast.mu[row, t],
                            "sigma_kw": forecast.sigma[row, t],
                        }
                    )
        return pd.DataFrame(rows, columns=GAUSSIAN_COLUMNS)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "NodalForecast":
        prosumers = tuple(sorted(int(p) for p in frame["prosumer_id"].unique()))
        ordered = frame.sort_values(["channel", "prosumer_id", "date", "slot"], kind="mergesort")
        arrays = {}
        for channel in ("demand", "pv"):
            part = ordered[ordered["channel"] == channel]
            horizon = len(part) // len(prosumers)
            arrays[channel] = GaussianForecast(
                mu=part["mu_kw"].to_numpy(dtype=float).reshape(len(prosumers), horizon),
                sigma=part["sigma_kw"].to_numpy(dtype=float).reshape(len(prosumers), horizon),
            )
        first = ordered[(ordered["channel"] == "demand") & (ordered["prosumer_id"] == prosumers[0])]
        raw_dates = first["date"].astype(str).tolist()
        dates = tuple(date.fromisoformat(d) for d in raw_dates) if all(raw_dates) else ()
        return cls(prosumers=prosumers, demand=arrays["demand"], pv=arrays["pv"], slot_dates=dates)


def write_gaussian_csv(forecast: NodalForecast, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    forecast.to_frame().to_csv(target, index=False, float_format="%.10g", lineterminator="\n")
    return target


def read_gaussian_csv(path: Union[str, Path]) -> NodalForecast:
    return NodalForecast.from_frame(pd.read_csv(path, keep_default_na=False))


def stack_prosumer_days(per_prosumer: Sequence[Sequence[GaussianForecast]]) -> GaussianForecast:
    """Concatenates day forecasts along the slot axis for each prosumer: (prosumer, days * 48)."""
    mu = np.stack([np.concatenate([f.mu for f in days]) for days in per_prosumer])
    sigma = np.stack([np.concatenate([f.sigma for f in days]) for days in per_prosumer])
    return GaussianForecast(mu=mu, sigma=sigma)


__all__ = [
    "GAUSSIAN_COLUMNS",
    "GaussianForecast",
    "NodalForecast",
    "fit_gaussian",
    "read_gaussian_csv",
    "stack_prosumer_days",
    "write_gaussian_csv",
]
