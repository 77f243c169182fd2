"""
Gaussian reformulation of the individual chance constraints.

Residual uncertainty is propagated through the linearised (LinDistFlow)
sensitivities of the feeder, so margins are data and the optimisation stays a
plain second-order cone program.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from red.services.network import Network
from red.services.topology import SensitivityMatrices

logger = logging.getLogger(__name__)

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF, polished with one Newton step on ``ndtr``."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"La probabilidad debe estar en (0, 1), se recibió {p}.")
    z = float(ndtri(p))
    density = np.exp(-0.5 * z * z) / _SQRT_2PI
    if density > 0:
        z -= (float(ndtr(z)) - p) / density
    return z


@dataclass(frozen=True)
class ChanceLevels:
    """Violation probabilities of the voltage, line-flow and battery chance constraints."""

    xi_v: float = 0.05
    xi_l: float = 0.05
    xi_p: float = 0.05

    def __post_init__(self):
        for name in ("xi_v", "xi_l", "xi_p"):
            value = getattr(self, name)
            if not 0.0 < value < 0.5:
                raise ValueError(f"{name} debe estar en (0, 0.5), se recibió {value}.")

    @property
    def z_v(self) -> float:
        return normal_quantile(1.0 - self.xi_v)

    @property
    def z_l(self) -> float:
        return normal_quantile(1.0 - self.xi_l)

    @property
    def z_p(self) -> float:
        return normal_quantile(1.0 - self.xi_p)


@dataclass(frozen=True)
class UncertaintySpec:
    """
    Residual standard deviations of every prosumer, in kW, shaped (prosumer, slot).

    ``bus_index`` gives the position in ``network.buses`` of each prosumer row and
    ``base_kw`` converts kW to per unit. When ``covariance`` is set it holds, per
    slot, the (prosumer, prosumer) covariance of the net active injection in kW²
    and replaces the independent model.
    """

    sigma_demand: np.ndarray
    sigma_pv: np.ndarray
    bus_index: Tuple[int, ...]
    base_kw: float
    covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.sigma_demand.shape != self.sigma_pv.shape:
            raise ValueError("sigma_demand y sigma_pv deben tener la misma forma.")
        if self.sigma_demand.ndim != 2 or self.sigma_demand.shape[0] != len(self.bus_index):
            raise ValueError("Se esperaba una matriz (prosumidor, intervalo) alineada con bus_index.")
        if (self.sigma_demand < 0).any() or (self.sigma_pv < 0).any():
            raise ValueError("Las desviaciones estándar no pueden ser negativas.")
        if self.covariance is not None:
            expected = (self.horizon, len(self.bus_index), len(self.bus_index))
            if self.covariance.shape != expected:
                raise ValueError(f"La covarianza debe tener forma {expected}.")

    @property
    def horizon(self) -> int:
        return self.sigma_demand.shape[1]

    @property
    def correlated(self) -> bool:
        return self.covariance is not None

    @classmethod
    def from_forecast(cls, network: Network, forecast, covariance: Optional[np.ndarray] = None) -> "UncertaintySpec":
        """Builds the uncertainty data from a ``NodalForecast`` whose prosumer ids are bus ids."""
        index = tuple(network.index_of(prosumer) for prosumer in forecast.prosumers)
        return cls(
            sigma_demand=np.asarray(forecast.demand.sigma, dtype=float),
            sigma_pv=np.asarray(forecast.pv.sigma, dtype=float),
            bus_index=index,
            base_kw=network.base_mva * 1000.0,
            covariance=covariance,
        )

    def net_variance_pu(self, n_buses: int) -> np.ndarray:
        """Per-bus variance of the net active injection, (bus, slot) in pu²."""
        variance = np.zeros((n_buses, self.horizon))
        sigma2 = (self.sigma_pv**2 + self.sigma_demand**2) / self.base_kw**2
        np.add.at(variance, list(self.bus_index), sigma2)
        return variance

    def scaled(self, factor: float) -> "UncertaintySpec":
        covariance = None if self.covariance is None else self.covariance * factor**2
        return UncertaintySpec(
            sigma_demand=self.sigma_demand * factor,
            sigma_pv=self.sigma_pv * factor,
            bus_index=self.bus_index,
            base_kw=self.base_kw,
            covariance=covariance,
        )


@dataclass(frozen=True)
class Margins:
    """Tightenings of the deterministic bounds: voltage (bus, slot) in pu², flow (line, slot) in pu."""

    voltage: np.ndarray
    flow: np.ndarray

    @classmethod
    def zeros(cls, n_buses: int, n_lines: int, horizon: int) -> "Margins":
        return cls(voltage=np.zeros((n_buses, horizon)), flow=np.zeros((n_lines, horizon)))

    def without(self, family: str) -> "Margins":
        if family == "voltage":
            return Margins(voltage=np.zeros_like(self.voltage), flow=self.flow)
        if family == "flow":
            return Margins(voltage=self.voltage, flow=np.zeros_like(self.flow))
        raise ValueError(f"Familia de márgenes desconocida: {family}.")


def kappa_from_power_factor(power_factors: Sequence[float]) -> np.ndarray:
    pf = np.asarray(power_factors, dtype=float)
    if ((pf <= 0) | (pf > 1)).any():
        raise ValueError("El factor de potencia debe estar en (0, 1].")
    return np.tan(np.arccos(pf))


def build_margins(
    unc: UncertaintySpec,
    sens: SensitivityMatrices,
    levels: ChanceLevels,
    power_factors: Sequence[float],
) -> Margins:
    """
    Voltage margin at bus i: z_v * sqrt(sum_k (2 (R[i, k] + kappa_k X[i, k]))^2 sigma_k^2).
    Flow margin on line l: z_l * sqrt(sum_{k downstream of l} (1 + kappa_k^2) sigma_k^2).

    ``power_factors`` is given per prosumer row of ``unc``. Reactive deviations
    follow the active ones as q = kappa p.
    """

    n_buses = sens.R.shape[0]
    kappa_rows = kappa_from_power_factor(power_factors)
    if kappa_rows.shape != (len(unc.bus_index),):
        raise ValueError("Se requiere un factor de potencia por prosumidor.")
    kappa = np.zeros(n_buses)
    kappa[list(unc.bus_index)] = kappa_rows

    voltage_coeff = 2.0 * (sens.R + sens.X * kappa[None, :])
    flow_p = sens.path.T
    flow_q = sens.path.T * kappa[None, :]

    if unc.covariance is None:
        variance = unc.net_variance_pu(n_buses)
        voltage_var = (voltage_coeff**2) @ variance
        flow_var = (flow_p**2 + flow_q**2) @ variance
    else:
        selector = np.zeros((n_buses, len(unc.bus_index)))
        selector[list(unc.bus_index), np.arange(len(unc.bus_index))] = 1.0
        cov = np.einsum("ia,tab,jb->tij", selector, unc.covariance / unc.base_kw**2, selector)
        voltage_var = np.einsum("ik,tkm,im->it", voltage_coeff, cov, voltage_coeff)
        flow_var = np.einsum("lk,tkm,lm->lt", flow_p, cov, flow_p) + np.einsum("lk,tkm,lm->lt", flow_q, cov, flow_q)

    margins = Margins(
        voltage=levels.z_v * np.sqrt(np.maximum(voltage_var, 0.0)),
        flow=levels.z_l * np.sqrt(np.maximum(flow_var, 0.0)),
    )
    logger.debug(
        "Márgenes: tensión máx %.3e pu², flujo máx %.3e pu",
        float(margins.voltage.max(initial=0.0)),
        float(margins.flow.max(initial=0.0)),
    )
    return margins


__all__ = [
    "ChanceLevels",
    "Margins",
    "UncertaintySpec",
    "build_margins",
    "kappa_from_power_factor",
    "normal_quantile",
]
