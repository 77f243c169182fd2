"""Empirical check of the chance constraints by sampling residuals and re-running the power flow."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from metricas.services.gaussian import NodalForecast
from red.services.network import Network
from red.services.topology import tree_layout

from .envelopes import EnvelopeSchedule
from .powerflow import ac_power_flow

logger = logging.getLogger(__name__)

VALIDATION_COLUMNS = ["constraint", "slot", "violation_rate", "ci_halfwidth"]
CONSTRAINTS = ("voltage_upper", "voltage_lower", "flow")
MIN_DRAWS = 1000
VIOLATION_TOL = 1e-6


@dataclass
class ViolationSummary:
    """
    Per constraint family and slot: the worst empirical violation frequency over
    the buses (or lines) of that family, with its 95 % Wilson half-width.
    """

    rows: pd.DataFrame
    draws: int
    diverged: np.ndarray
    element_rates: Dict[str, np.ndarray] = field(default_factory=dict)

    def max_rate(self, constraint: str) -> float:
        part = self.rows[self.rows["constraint"] == constraint]
        return float(part["violation_rate"].max()) if len(part) else 0.0

    @property
    def total_diverged(self) -> int:
        return int(self.diverged.sum())


def _halfwidth(violations: int, trials: int) -> float:
    if trials == 0:
        return float("nan")
    interval = binomtest(int(violations), int(trials)).proportion_ci(confidence_level=0.95, method="wilson")
    return float(interval.high - interval.low) / 2.0


def monte_carlo_validate(
    envelopes: EnvelopeSchedule,
    forecasts: NodalForecast,
    network: Network,
    n: int = 10000,
    seed: int = 0,
) -> ViolationSummary:
    """
    Draws ``n`` independent Gaussian realisations of demand and PV per slot, sets
    every prosumer's injection to envelope + pv residual - demand residual (reactive
    part following the power factor) and counts bound violations in the AC flow.

    Slot ``t`` uses the stream ``default_rng([seed, t])``, so slots can be
    validated in any order. Diverged draws are excluded from the rates.
    """

    if n < MIN_DRAWS:
        raise ValueError(f"Se requieren al menos {MIN_DRAWS} simulaciones (n={n}).")
    if tuple(forecasts.prosumers) != tuple(envelopes.prosumers):
        raise ValueError("Los prosumidores del pronóstico y de las envolventes no coinciden.")
    if forecasts.horizon != envelopes.horizon:
        raise ValueError("El horizonte del pronóstico y de las envolventes no coincide.")

    layout = tree_layout(network)
    positions = [network.index_of(prosumer) for prosumer in envelopes.prosumers]
    kappa = np.array([network.buses[position].prosumer.kappa for position in positions])
    slack = layout.slack_index
    non_slack = np.array([i for i in range(len(network.buses)) if i != slack], dtype=int)
    v_min = np.array([bus.v_min for bus in network.buses])[non_slack]
    v_max = np.array([bus.v_max for bus in network.buses])[non_slack]
    r = np.array([line.r for line in network.lines])
    x = np.array([line.x for line in network.lines])
    s_max = np.array([line.s_max for line in network.lines])

    horizon = envelopes.horizon
    rates = {name: np.zeros((horizon, len(non_slack) if name != "flow" else len(network.lines))) for name in CONSTRAINTS}
    diverged = np.zeros(horizon, dtype=int)
    records = []

    for slot in range(horizon):
        rng = np.random.default_rng([seed, slot])
        eps_pv = rng.standard_normal((n, len(positions))) * forecasts.pv.sigma[:, slot]
        eps_d = rng.standard_normal((n, len(positions))) * forecasts.demand.sigma[:, slot]
        delta = eps_pv - eps_d
        p_kw = envelopes.export_limit_kw[:, slot] + delta
        q_kw = envelopes.reactive_kw[:, slot] + kappa * delta

        p_inj = np.zeros((n, len(network.buses)))
        q_inj = np.zeros((n, len(network.buses)))
        p_inj[:, positions] = network.kw_to_pu(p_kw)
        q_inj[:, positions] = network.kw_to_pu(q_kw)
        flow = ac_power_flow(network, p_inj, q_inj, layout=layout)

        ok = flow.converged
        diverged[slot] = int((~ok).sum())
        trials = int(ok.sum())
        v = flow.v[ok][:, non_slack]
        sending = np.sqrt(flow.P[ok] ** 2 + flow.Q[ok] ** 2)
        receiving = np.sqrt((flow.P[ok] - r * flow.l[ok]) ** 2 + (flow.Q[ok] - x * flow.l[ok]) ** 2)
        violated = {
            "voltage_upper": v > v_max + VIOLATION_TOL,
            "voltage_lower": v < v_min - VIOLATION_TOL,
            "flow": np.maximum(sending, receiving) > s_max + VIOLATION_TOL,
        }
        for name in CONSTRAINTS:
            counts = violated[name].sum(axis=0)
            if trials:
                rates[name][slot] = counts / trials
            worst = int(counts.max(initial=0))
            records.append(
                {
                    "constraint": name,
                    "slot": slot,
                    "violation_rate": worst / trials if trials else float("nan"),
                    "ci_halfwidth": _halfwidth(worst, trials),
                }
            )

    rows = pd.DataFrame(records, columns=VALIDATION_COLUMNS)
    summary = ViolationSummary(rows=rows, draws=n, diverged=diverged, element_rates=rates)
    logger.info(
        "Monte Carlo (%s simulaciones): violación máx tensión sup %.4f, inf %.4f, flujo %.4f; %s divergencias",
        n,
        summary.max_rate("voltage_upper"),
        summary.max_rate("voltage_lower"),
        summary.max_rate("flow"),
        summary.total_diverged,
    )
    return summary


def write_validation_csv(summary: ViolationSummary, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    summary.rows.to_csv(target, index=False, float_format="%.6f", lineterminator="\n")
    return target


__all__ = ["CONSTRAINTS", "VALIDATION_COLUMNS", "ViolationSummary", "monte_carlo_validate", "write_validation_csv"]
