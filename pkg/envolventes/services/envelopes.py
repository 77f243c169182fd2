import logging
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .powerflow import ac_power_flow
from .problem import OpfProblem
from .solver import OpfSolution

logger = logging.getLogger(__name__)

ENVELOPE_COLUMNS = ["prosumer_id", "slot", "export_limit_kw", "gamma_kw"]
DUAL_TOL = 1e-6
INEXACT_TOL = 1e-5
CAP_TOL = 1e-6


class EnvelopeError(ValueError):
    """Raised when envelopes are requested from a solution that is not optimal."""


@dataclass
class EnvelopeSchedule:
    """
    Export limits per prosumer and slot in kW, the fairness value of each slot
    and the nominal reactive injection behind them.
    """

    prosumers: Tuple[int, ...]
    export_limit_kw: np.ndarray
    gamma_kw: np.ndarray
    reactive_kw: np.ndarray
    export_cap_kw: float
    slot_dates: Tuple[date, ...] = ()
    gamma_gap_kw: float = 0.0
    validation: Optional[object] = None

    @property
    def horizon(self) -> int:
        return self.export_limit_kw.shape[1]

    @property
    def spread_kw(self) -> np.ndarray:
        return self.export_limit_kw.max(axis=0) - self.export_limit_kw.min(axis=0)

    def inflated(self, factor: float) -> "EnvelopeSchedule":
        """Export limits multiplied by ``factor`` (used to probe validation sensitivity)."""
        limits = self.export_limit_kw * factor
        return replace(self, export_limit_kw=limits, gamma_kw=limits.min(axis=0), validation=None)

    def to_frame(self) -> pd.DataFrame:
        slots = np.arange(self.horizon)
        frames = [
            pd.DataFrame(
                {
                    "prosumer_id": prosumer,
                    "slot": slots,
                    "export_limit_kw": self.export_limit_kw[row],
                    "gamma_kw": self.gamma_kw,
                }
            )
            for row, prosumer in enumerate(self.prosumers)
        ]
        return pd.concat(frames, ignore_index=True)[ENVELOPE_COLUMNS]


def write_envelopes_csv(schedule: EnvelopeSchedule, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    schedule.to_frame().to_csv(target, index=False, float_format="%.6f", lineterminator="\n")
    return target


def extract_envelopes(solution: OpfSolution, problem: OpfProblem) -> EnvelopeSchedule:
    """Export limit of every prosumer and slot in kW, with gamma_t = min_i of them."""
    if not solution.optimal:
        raise EnvelopeError(f"No se pueden extraer envolventes de una solución en estado '{solution.status}'.")

    to_kw = problem.network.pu_to_kw
    limits = to_kw(solution.values["p_exp"])
    reactive = to_kw(solution.values["q_inj"])
    solver_gamma = to_kw(solution.values["gamma"])
    recomputed = limits.min(axis=0)
    gap = float(np.abs(recomputed - solver_gamma).max(initial=0.0))
    if gap > to_kw(CAP_TOL):
        logger.warning("gamma del solver difiere del mínimo recalculado en %.2e kW", gap)
    return EnvelopeSchedule(
        prosumers=tuple(problem.forecast.prosumers),
        export_limit_kw=limits,
        gamma_kw=recomputed,
        reactive_kw=reactive,
        export_cap_kw=problem.settings.export_cap_kw,
        slot_dates=tuple(problem.forecast.slot_dates),
        gamma_gap_kw=gap,
    )


@dataclass
class MaxMinCertificate:
    """Per slot: prosumers whose fairness constraint carries a dual above the tolerance."""

    binding: List[Tuple[int, ...]]
    at_cap: np.ndarray
    holds: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(self.holds.all())


def maxmin_certificate(solution: OpfSolution, problem: OpfProblem) -> MaxMinCertificate:
    if not solution.optimal:
        raise EnvelopeError("El certificado requiere una solución óptima.")
    duals = np.abs(solution.duals.get("fairness", np.zeros((problem.n_prosumers, problem.horizon))))
    p_exp = solution.values["p_exp"]
    gamma = solution.values["gamma"]
    binding = []
    holds = np.zeros(problem.horizon, dtype=bool)
    at_cap = (p_exp >= problem.export_cap - CAP_TOL).all(axis=0)
    for slot in range(problem.horizon):
        rows = np.flatnonzero((duals[:, slot] > DUAL_TOL) & (np.abs(p_exp[:, slot] - gamma[slot]) <= CAP_TOL))
        binding.append(tuple(problem.forecast.prosumers[row] for row in rows))
        holds[slot] = bool(rows.size) or bool(at_cap[slot])
    return MaxMinCertificate(binding=binding, at_cap=at_cap, holds=holds)


@dataclass
class RelaxationReport:
    """SOC gap l * v - (P^2 + Q^2) per line and slot, in pu²."""

    residuals: np.ndarray
    inexact: np.ndarray
    ac_voltage_gap: float = float("nan")
    ac_converged: bool = True
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max(initial=0.0))

    @property
    def exact(self) -> bool:
        return not self.inexact.any()


def verify_relaxation(solution: OpfSolution, problem: OpfProblem, tol: float = INEXACT_TOL) -> RelaxationReport:
    """
    Flags every line and slot whose SOC residual exceeds ``tol`` and re-solves the
    AC power flow at the solution's injections to compare voltages.
    """

    residuals = solution.soc_residuals
    if residuals is None:
        raise EnvelopeError("La solución no contiene valores primales.")
    inexact = residuals > tol

    placement = np.zeros((problem.n_buses, problem.n_prosumers))
    placement[list(problem.prosumer_index), np.arange(problem.n_prosumers)] = 1.0
    p_inj = (placement @ solution.values["p_exp"]).T
    q_inj = (placement @ solution.values["q_inj"]).T
    flow = ac_power_flow(problem.network, p_inj, q_inj, layout=problem.layout)
    gap = float(np.abs(flow.v.T - solution.values["v"]).max(initial=0.0))

    report = RelaxationReport(
        residuals=residuals,
        inexact=inexact,
        ac_voltage_gap=gap,
        ac_converged=bool(flow.converged.all()),
        details={"min_residual": float(residuals.min(initial=0.0))},
    )
    if report.exact:
        logger.info("Relajación SOC exacta: residuo máx %.2e pu², brecha AC %.2e", report.max_residual, gap)
    else:
        logger.warning(
            "Relajación SOC inexacta en %s pares línea/intervalo (residuo máx %.2e pu²)",
            int(inexact.sum()),
            report.max_residual,
        )
    return report


__all__ = [
    "ENVELOPE_COLUMNS",
    "EnvelopeError",
    "EnvelopeSchedule",
    "MaxMinCertificate",
    "RelaxationReport",
    "extract_envelopes",
    "maxmin_certificate",
    "verify_relaxation",
    "write_envelopes_csv",
]
