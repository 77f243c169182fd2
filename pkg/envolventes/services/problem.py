"""
Assembly of the margin-tightened branch-flow program.

Everything is in per unit on the network base; energy in pu·h. Arrays are
(bus, slot), (line, slot) or (prosumer, slot); batteries are the subset of
prosumers with a non-zero power rating.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import cvxpy as cp
import numpy as np

from metricas.services.gaussian import NodalForecast
from red.services.network import Network
from red.services.topology import SensitivityMatrices, TreeLayout, path_sensitivities, tree_layout

from .chance import ChanceLevels, Margins

logger = logging.getLogger(__name__)

FAMILIES = ("voltage", "flow", "battery", "dimensions")


class ProblemAssemblyError(ValueError):
    """Raised when the data make the tightened program infeasible before solving."""

    def __init__(self, family: str, message: str):
        self.family = family
        super().__init__(f"[{family}] {message}")


@dataclass(frozen=True)
class OpfSettings:
    export_cap_kw: float = 10.0
    delta_t_h: float = 0.5
    loss_weight: float = 1e-3
    fill_weight: float = 0.0
    terminal_soc: float = 0.0
    batteries: bool = True

    def __post_init__(self):
        if self.export_cap_kw <= 0:
            raise ValueError("EXPORT_CAP_KW debe ser positivo.")
        if self.delta_t_h <= 0:
            raise ValueError("DELTA_T_H debe ser positivo.")
        if not 0.0 <= self.terminal_soc <= 1.0:
            raise ValueError("terminal_soc debe estar en [0, 1].")


@dataclass
class OpfProblem:
    network: Network
    layout: TreeLayout
    sensitivities: SensitivityMatrices
    forecast: NodalForecast
    margins: Margins
    levels: ChanceLevels
    settings: OpfSettings
    prosumer_index: Tuple[int, ...]
    battery_rows: Tuple[int, ...]
    demand_mu: np.ndarray
    pv_upper: np.ndarray
    kappa: np.ndarray
    export_cap: float
    binary_index: Tuple[Tuple[int, int], ...] = field(default=())

    @property
    def horizon(self) -> int:
        return self.demand_mu.shape[1]

    @property
    def n_buses(self) -> int:
        return len(self.network.buses)

    @property
    def n_lines(self) -> int:
        return len(self.network.lines)

    @property
    def n_prosumers(self) -> int:
        return len(self.prosumer_index)

    @property
    def n_batteries(self) -> int:
        return len(self.battery_rows)

    @property
    def binary_count(self) -> int:
        return len(self.binary_index)

    def variable_count(self) -> Dict[str, int]:
        """
        Continuous columns: T (N + 3L + 2P + 3B + 1) for v; P, Q, l; pv, p_exp;
        charge, discharge, energy; gamma. Binaries: B T.
        """
        n, l, p, b, t = self.n_buses, self.n_lines, self.n_prosumers, self.n_batteries, self.horizon
        return {"continuous": t * (n + 3 * l + 2 * p + 3 * b + 1), "binary": b * t}

    def with_margins(self, margins: Margins) -> "OpfProblem":
        return replace(self, margins=margins)

    def with_settings(self, **changes) -> "OpfProblem":
        return replace(self, settings=replace(self.settings, **changes))

    def battery_assets(self):
        prosumer_ids = self.forecast.prosumers
        return [self.network.buses[self.prosumer_index[row]].prosumer for row in self.battery_rows], [
            prosumer_ids[row] for row in self.battery_rows
        ]

    def canonical_form(self, digits: int = 10) -> str:
        """
        Label-free description of the program: one record per non-slack bus with
        its depth, feeding line, bounds, margins and prosumer data, sorted.
        Relabelling or reordering buses and lines leaves it unchanged.
        """

        def rounded(values) -> list:
            return [round(float(v), digits) for v in np.ravel(values)]

        rows_by_bus = {bus: row for row, bus in enumerate(self.prosumer_index)}
        battery_set = set(self.battery_rows)
        records = []
        for position, bus in enumerate(self.network.buses):
            if position == self.layout.slack_index:
                continue
            line_index = int(self.layout.bus_line[position])
            line = self.network.lines[line_index]
            record = {
                "depth": int(self.layout.depth[position]),
                "parent_depth": int(self.layout.depth[self.layout.line_parent[line_index]]),
                "children": int((self.layout.line_parent == position).sum()),
                "line": rounded([line.r, line.x, line.s_max]) + rounded(self.margins.flow[line_index]),
                "v": rounded([bus.v_min, bus.v_max]) + rounded(self.margins.voltage[position]),
            }
            row = rows_by_bus.get(position)
            if row is not None:
                assets = bus.prosumer
                record["prosumer"] = {
                    "demand": rounded(self.demand_mu[row]),
                    "pv": rounded(self.pv_upper[row]),
                    "kappa": round(float(self.kappa[row]), digits),
                    "battery": rounded(
                        [assets.batt_p_min, assets.batt_p_max, assets.soc_min, assets.soc_max, assets.soc_init, assets.eta]
                    )
                    if row in battery_set
                    else None,
                }
            records.append(json.dumps(record, sort_keys=True))
        header = {
            "horizon": self.horizon,
            "slack_v": round(self.network.slack_v, digits),
            "export_cap": round(self.export_cap, digits),
            "counts": self.variable_count(),
        }
        return json.dumps({"header": header, "buses": sorted(records)}, sort_keys=True)


def _check_margins(problem: OpfProblem) -> None:
    n, l, t = problem.n_buses, problem.n_lines, problem.horizon
    margins = problem.margins
    if margins.voltage.shape != (n, t) or margins.flow.shape != (l, t):
        raise ProblemAssemblyError(
            "dimensions",
            f"márgenes con forma {margins.voltage.shape}/{margins.flow.shape}, se esperaba ({n}, {t})/({l}, {t}).",
        )
    if (margins.voltage < 0).any() or (margins.flow < 0).any():
        raise ProblemAssemblyError("dimensions", "los márgenes no pueden ser negativos.")

    slack = problem.layout.slack_index
    for position, bus in enumerate(problem.network.buses):
        if position == slack:
            continue
        low = bus.v_min + margins.voltage[position]
        high = bus.v_max - margins.voltage[position]
        crossed = np.flatnonzero(low >= high)
        if crossed.size:
            raise ProblemAssemblyError(
                "voltage",
                f"la barra {bus.id} queda sin banda de tensión en los intervalos {crossed.tolist()}.",
            )
    for index, line in enumerate(problem.network.lines):
        exhausted = np.flatnonzero(line.s_max - margins.flow[index] <= 0)
        if exhausted.size:
            raise ProblemAssemblyError(
                "flow",
                f"la línea {line.from_bus}-{line.to_bus} agota su capacidad en los intervalos {exhausted.tolist()}.",
            )


def assemble_problem(
    network: Network,
    forecasts: NodalForecast,
    margins: Margins,
    levels: ChanceLevels,
    config: Optional[OpfSettings] = None,
) -> OpfProblem:
    """
    Collects the data of the tightened program: mean demand and PV of every
    prosumer enter the balance equations, margins shrink the voltage and flow
    bounds, and one binary per battery and slot encodes charge/discharge.

    Battery power bounds stay deterministic because setpoints are decisions.
    """

    settings = config or OpfSettings()
    layout = tree_layout(network)
    sensitivities = path_sensitivities(network)

    network_prosumers = network.prosumer_buses
    if sorted(network_prosumers) != sorted(forecasts.prosumers):
        raise ProblemAssemblyError(
            "dimensions",
            f"prosumidores del pronóstico {list(forecasts.prosumers)} no coinciden con la red {network_prosumers}.",
        )
    if forecasts.horizon < 1:
        raise ProblemAssemblyError("dimensions", "el horizonte debe tener al menos un intervalo.")

    prosumer_index = tuple(network.index_of(prosumer) for prosumer in forecasts.prosumers)
    assets = [network.buses[position].prosumer for position in prosumer_index]

    demand_mu = network.kw_to_pu(np.maximum(np.asarray(forecasts.demand.mu, dtype=float), 0.0))
    pv_mean = np.maximum(np.asarray(forecasts.pv.mu, dtype=float), 0.0)
    pv_caps = np.array([item.pv_cap for item in assets])[:, None]
    pv_upper = network.kw_to_pu(np.minimum(pv_mean, pv_caps))
    kappa = np.array([item.kappa for item in assets])

    battery_rows = tuple(row for row, item in enumerate(assets) if settings.batteries and item.has_battery)
    for row in battery_rows:
        item = assets[row]
        if not item.soc_min <= item.soc_init <= item.soc_max:
            raise ProblemAssemblyError(
                "battery",
                f"soc_init {item.soc_init} kWh fuera de [{item.soc_min}, {item.soc_max}] en el prosumidor "
                f"{forecasts.prosumers[row]}.",
            )
    horizon = demand_mu.shape[1]
    binary_index = tuple((forecasts.prosumers[row], slot) for row in battery_rows for slot in range(horizon))

    problem = OpfProblem(
        network=network,
        layout=layout,
        sensitivities=sensitivities,
        forecast=forecasts,
        margins=margins,
        levels=levels,
        settings=settings,
        prosumer_index=prosumer_index,
        battery_rows=battery_rows,
        demand_mu=demand_mu,
        pv_upper=pv_upper,
        kappa=kappa,
        export_cap=float(network.kw_to_pu(settings.export_cap_kw)),
        binary_index=binary_index,
    )
    _check_margins(problem)
    counts = problem.variable_count()
    logger.info(
        "Problema ensamblado: %s barras, %s líneas, %s intervalos, %s variables continuas, %s binarias",
        problem.n_buses,
        problem.n_lines,
        horizon,
        counts["continuous"],
        counts["binary"],
    )
    return problem


# ---------------------------------------------------------------------------
# Programa cónico
# ---------------------------------------------------------------------------


@dataclass
class Program:
    problem: cp.Problem
    variables: Dict[str, cp.Variable]
    expressions: Dict[str, cp.Expression]
    constraints: Dict[str, cp.Constraint]
    binaries: Optional[cp.Parameter] = None


def _flat(expression) -> cp.Expression:
    return cp.reshape(expression, (expression.size,), order="F")


def _incidence(problem: OpfProblem) -> Tuple[np.ndarray, np.ndarray]:
    parent = np.zeros((problem.n_lines, problem.n_buses))
    child = np.zeros((problem.n_lines, problem.n_buses))
    lines = np.arange(problem.n_lines)
    parent[lines, problem.layout.line_parent] = 1.0
    child[lines, problem.layout.line_child] = 1.0
    return parent, child


def build_program(
    problem: OpfProblem,
    binaries: str = "variable",
    fixed_mask: Optional[np.ndarray] = None,
    fixed_values: Optional[np.ndarray] = None,
) -> Program:
    """
    ``binaries="variable"`` relaxes b to [0, 1] (entries under ``fixed_mask`` are
    pinned to ``fixed_values``); ``binaries="parameter"`` makes b a parameter so
    enumeration re-solves without recompiling.
    """

    network = problem.network
    n, l, p, b, t = problem.n_buses, problem.n_lines, problem.n_prosumers, problem.n_batteries, problem.horizon
    settings = problem.settings
    margins = problem.margins
    slack = problem.layout.slack_index
    non_slack = np.array([i for i in range(n) if i != slack], dtype=int)

    r = np.array([line.r for line in network.lines])
    x = np.array([line.x for line in network.lines])
    z2 = r**2 + x**2
    s_max = np.array([line.s_max for line in network.lines])[:, None] - margins.flow
    v_min = np.array([bus.v_min for bus in network.buses])[:, None] + margins.voltage
    v_max = np.array([bus.v_max for bus in network.buses])[:, None] - margins.voltage
    parent, child = _incidence(problem)
    placement = np.zeros((n, p))
    placement[list(problem.prosumer_index), np.arange(p)] = 1.0
    select = np.eye(n)[non_slack]

    v = cp.Variable((n, t), name="v")
    P = cp.Variable((l, t), name="P")
    Q = cp.Variable((l, t), name="Q")
    ell = cp.Variable((l, t), name="l", nonneg=True)
    pv = cp.Variable((p, t), name="pv")
    p_exp = cp.Variable((p, t), name="p_exp")
    gamma = cp.Variable(t, name="gamma")
    variables = {"v": v, "P": P, "Q": Q, "l": ell, "pv": pv, "p_exp": p_exp, "gamma": gamma}
    constraints: Dict[str, cp.Constraint] = {}

    net_battery = 0
    binary_parameter = None
    if b:
        battery_assets, _ = problem.battery_assets()
        to_pu = network.kw_to_pu
        p_max = to_pu(np.array([item.batt_p_max for item in battery_assets]))[:, None]
        p_min = to_pu(np.abs(np.array([item.batt_p_min for item in battery_assets])))[:, None]
        e_min = to_pu(np.array([item.soc_min for item in battery_assets]))
        e_max = to_pu(np.array([item.soc_max for item in battery_assets]))
        e_init = to_pu(np.array([item.soc_init for item in battery_assets]))
        eta = np.array([item.eta for item in battery_assets])[:, None]

        charge = cp.Variable((b, t), name="charge", nonneg=True)
        discharge = cp.Variable((b, t), name="discharge", nonneg=True)
        energy = cp.Variable((b, t), name="energy")
        variables.update({"charge": charge, "discharge": discharge, "energy": energy})
        if binaries == "parameter":
            binary_parameter = cp.Parameter((b, t), name="b", value=np.ones((b, t)))
            mode = binary_parameter
        elif binaries == "variable":
            mode = cp.Variable((b, t), name="b")
            variables["b"] = mode
            constraints["binary_box"] = [mode >= 0, mode <= 1]
            if fixed_mask is not None and fixed_mask.any():
                mask = fixed_mask.astype(float)
                constraints["binary_fixed"] = cp.multiply(mask, mode) == mask * fixed_values
        else:
            raise ValueError(f"Modo de binarias desconocido: {binaries}.")

        constraints["charge_limit"] = charge <= cp.multiply(mode, np.broadcast_to(p_max, (b, t)))
        constraints["discharge_limit"] = discharge <= cp.multiply(1 - mode, np.broadcast_to(p_min, (b, t)))
        stored = (cp.multiply(np.broadcast_to(eta, (b, t)), charge)
                  - cp.multiply(np.broadcast_to(1.0 / eta, (b, t)), discharge)) * settings.delta_t_h
        soc_rules = [energy[:, 0] == e_init + stored[:, 0]]
        if t > 1:
            soc_rules.append(energy[:, 1:] == energy[:, :-1] + stored[:, 1:])
        constraints["soc_dynamics"] = soc_rules
        constraints["soc_bounds"] = [energy >= np.broadcast_to(e_min[:, None], (b, t)),
                                     energy <= np.broadcast_to(e_max[:, None], (b, t))]
        if settings.terminal_soc > 0:
            constraints["soc_terminal"] = energy[:, t - 1] >= settings.terminal_soc * e_init
        rows = np.zeros((p, b))
        rows[list(problem.battery_rows), np.arange(b)] = 1.0
        net_battery = rows @ (charge - discharge)

    constraints["pv_bounds"] = [pv >= 0, pv <= problem.pv_upper]
    constraints["net_injection"] = p_exp == pv - problem.demand_mu - net_battery
    constraints["export_cap"] = p_exp <= problem.export_cap
    constraints["fairness"] = p_exp >= np.ones((p, 1)) @ cp.reshape(gamma, (1, t), order="F")

    q_inj_rows = cp.multiply(np.broadcast_to(problem.kappa[:, None], (p, t)), pv - problem.demand_mu)
    p_inj = placement @ p_exp
    q_inj = placement @ q_inj_rows

    # Branch-flow model; flows are measured at the sending (parent) end.
    constraints["p_balance"] = select @ (parent.T @ P - child.T @ (P - np.diag(r) @ ell)) == select @ p_inj
    constraints["q_balance"] = select @ (parent.T @ Q - child.T @ (Q - np.diag(x) @ ell)) == select @ q_inj
    v_parent = parent @ v
    constraints["voltage_drop"] = child @ v == v_parent - 2 * (np.diag(r) @ P + np.diag(x) @ Q) + np.diag(z2) @ ell
    constraints["slack"] = v[slack, :] == network.slack_v
    constraints["relaxation"] = cp.SOC(
        _flat(ell + v_parent),
        cp.vstack([_flat(2 * P), _flat(2 * Q), _flat(ell - v_parent)]),
        axis=0,
    )

    # Loss-free companion quantities bound voltages and flows from above.
    sens = problem.sensitivities
    v_hat = network.slack_v + 2 * (sens.R @ p_inj + sens.X @ q_inj)
    p_hat = -(sens.path.T @ p_inj)
    q_hat = -(sens.path.T @ q_inj)
    constraints["voltage_upper"] = select @ v_hat <= v_max[non_slack]
    constraints["voltage_lower"] = select @ v >= v_min[non_slack]
    constraints["flow_limit"] = cp.SOC(_flat(cp.Constant(s_max)), cp.vstack([_flat(P), _flat(Q)]), axis=0)
    constraints["flow_limit_linear"] = cp.SOC(_flat(cp.Constant(s_max)), cp.vstack([_flat(p_hat), _flat(q_hat)]), axis=0)

    objective = cp.sum(gamma) - settings.loss_weight * cp.sum(r @ ell) + settings.fill_weight * cp.sum(p_exp)
    flat_constraints = []
    for item in constraints.values():
        flat_constraints.extend(item if isinstance(item, list) else [item])
    program = cp.Problem(cp.Maximize(objective), flat_constraints)
    return Program(
        problem=program,
        variables=variables,
        expressions={"v_hat": v_hat, "P_hat": p_hat, "Q_hat": q_hat, "q_inj": q_inj_rows},
        constraints=constraints,
        binaries=binary_parameter,
    )


__all__ = [
    "FAMILIES",
    "OpfProblem",
    "OpfSettings",
    "Program",
    "ProblemAssemblyError",
    "assemble_problem",
    "build_program",
]
