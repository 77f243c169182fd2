"""
Synthetic smart-meter dataset with the schema of the public feeder data.

Demand (kW) of prosumer i on day d, slot s (hour h = s/2 + 0.25):

    base_i * season(d) * (0.35 + shape(h, weekend)) + base_i * noise_sd(h) * N(0, 1)

where ``season`` is a cosine peaking in mid-July (southern winter), ``shape``
has a morning and an evening peak (morning shifted later on weekends) and the
noise standard deviation rises in the evening. Values are clipped at 0.

PV (kW) is ``cap_i * bell(h, d) * peak(d) * clear(d) * (1 + 0.08 N(0, 1))``
where ``bell`` is a half sine between sunrise and sunset (day length follows
the season), ``clear`` a regional AR(1) clearness process clipped to
[0.15, 1] with a small per-prosumer perturbation. Outside daylight the bell is
zero, so PV is exactly 0 at night.
"""

import logging
from datetime import date
from typing import Optional

import numpy as np
from dateutil.relativedelta import relativedelta

from .series import SLOTS_PER_DAY, SeriesFrame

logger = logging.getLogger(__name__)

DEFAULT_START = date(2010, 7, 1)
DEFAULT_YEARS = 2
DEFAULT_PROSUMERS = 25
DAYS_PER_YEAR = 365.25


def _seasonal_phase(day_of_year: np.ndarray, peak_day: float) -> np.ndarray:
    return np.cos(2 * np.pi * (day_of_year - peak_day) / DAYS_PER_YEAR)


def _demand(rng: np.random.Generator, hours, weekend, day_of_year, n_prosumers) -> np.ndarray:
    base = rng.uniform(0.35, 0.8, size=(n_prosumers, 1, 1))
    season = 1.0 + 0.25 * _seasonal_phase(day_of_year, 196)[None, :, None]
    morning_peak = np.where(weekend[:, None], 9.0, 7.5)
    morning = 0.6 * np.exp(-0.5 * ((hours[None, :] - morning_peak) / 1.2) ** 2)
    evening = 1.3 * np.exp(-0.5 * ((hours[None, :] - 19.0) / 1.8) ** 2)
    midday = np.where(weekend[:, None], 0.3, 0.0) * np.exp(-0.5 * ((hours[None, :] - 13.0) / 2.5) ** 2)
    shape = (morning + evening + midday)[None, :, :]
    noise_sd = 0.04 + 0.16 * np.exp(-0.5 * ((hours - 19.5) / 2.0) ** 2)
    noise = rng.standard_normal((n_prosumers, len(day_of_year), SLOTS_PER_DAY)) * noise_sd
    return np.maximum(base * (season * (0.35 + shape) + noise), 0.0)


def _clearness(rng: np.random.Generator, n_days: int, n_prosumers: int) -> np.ndarray:
    regional = np.empty(n_days)
    level = 0.7
    shocks = rng.normal(0.0, 0.18, size=n_days)
    for index in range(n_days):
        level = 0.7 + 0.6 * (level - 0.7) + shocks[index]
        regional[index] = level
    local = rng.normal(0.0, 0.04, size=(n_prosumers, n_days))
    return np.clip(regional[None, :] + local, 0.15, 1.0)


def _pv(rng: np.random.Generator, hours, day_of_year, n_prosumers, pv_cap_kw) -> np.ndarray:
    summer = _seasonal_phase(day_of_year, 355)
    day_length = 12.0 + 2.4 * summer
    sunrise = 12.25 - day_length / 2
    phase = (hours[None, :] - sunrise[:, None]) / day_length[:, None]
    daylight = (phase > 0) & (phase < 1)
    bell = np.where(daylight, np.sin(np.pi * np.clip(phase, 0.0, 1.0)) ** 1.5, 0.0)
    peak = 0.72 + 0.23 * summer
    capacity = pv_cap_kw * rng.uniform(0.8, 0.95, size=(n_prosumers, 1, 1))
    clear = _clearness(rng, len(day_of_year), n_prosumers)[:, :, None]
    noise = 1.0 + 0.08 * rng.standard_normal((n_prosumers, len(day_of_year), SLOTS_PER_DAY))
    pv = capacity * bell[None, :, :] * peak[None, :, None] * clear * np.maximum(noise, 0.0)
    pv = np.where(daylight[None, :, :], pv, 0.0)
    return np.clip(pv, 0.0, pv_cap_kw)


def synthesize_series(
    seed: Optional[int] = None,
    years: int = DEFAULT_YEARS,
    prosumers: int = DEFAULT_PROSUMERS,
    start: date = DEFAULT_START,
    pv_cap_kw: float = 6.0,
) -> SeriesFrame:
    """Generates ``years`` of half-hourly demand/PV for prosumers 1..``prosumers``."""
    if years < 2:
        raise ValueError("Se requieren al menos 2 años de datos sintéticos.")
    if prosumers < 1:
        raise ValueError("El número de prosumidores debe ser positivo.")

    rng = np.random.default_rng(seed)
    end = start + relativedelta(years=years)
    n_days = (end - start).days
    day_numbers = np.arange(n_days)
    first_doy = start.timetuple().tm_yday
    ordinal = start.toordinal() + day_numbers
    day_of_year = np.array([date.fromordinal(int(o)).timetuple().tm_yday for o in ordinal], dtype=float)
    weekend = np.array([date.fromordinal(int(o)).weekday() >= 5 for o in ordinal])
    hours = np.arange(SLOTS_PER_DAY) / 2.0 + 0.25

    demand = np.round(_demand(rng, hours, weekend, day_of_year, prosumers), 4)
    pv = np.round(_pv(rng, hours, day_of_year, prosumers, pv_cap_kw), 4)
    logger.info(
        "Serie sintética: %s prosumidores, %s días desde %s (día del año %s), semilla %s",
        prosumers,
        n_days,
        start.isoformat(),
        first_doy,
        seed,
    )
    return SeriesFrame.from_profiles(start, demand, pv, prosumers=range(1, prosumers + 1))


__all__ = ["DEFAULT_START", "synthesize_series"]
