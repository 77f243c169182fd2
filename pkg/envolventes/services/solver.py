import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .backends import STATUS_INFEASIBLE, STATUS_OPTIMAL, BackendResult, get_backend
from .problem import OpfProblem, Program, build_program

logger = logging.getLogger(__name__)

STRATEGIES = ("relax", "round", "exhaustive")
SIMULTANEOUS_TOL = 1e-6
MAX_ROUNDING_PASSES = 2
MAX_EXHAUSTIVE_BINARIES = 8
DUAL_FAMILIES = ("fairness", "export_cap", "voltage_upper", "voltage_lower", "net_injection")


@dataclass
class OpfSolution:
    """
    Primal values (pu) keyed by variable name, duals of the linear constraint
    families, and the SOC residual l * v_parent - (P^2 + Q^2) per line and slot.
    ``objective`` is the sum of the per-slot fairness values.
    """

    status: str
    objective: float
    values: Dict[str, np.ndarray] = field(default_factory=dict)
    duals: Dict[str, np.ndarray] = field(default_factory=dict)
    soc_residuals: Optional[np.ndarray] = None
    binaries: Optional[np.ndarray] = None
    backend: Optional[BackendResult] = None
    strategy: str = "round"
    passes: int = 0
    hint: Optional[str] = None

    @property
    def optimal(self) -> bool:
        return self.status == STATUS_OPTIMAL


def _value(item) -> Optional[np.ndarray]:
    value = item.value
    return None if value is None else np.array(value, dtype=float)


def _collect(program: Program, result: BackendResult, problem: OpfProblem, strategy: str, passes: int) -> OpfSolution:
    values = {name: _value(variable) for name, variable in program.variables.items()}
    values.update({name: _value(expression) for name, expression in program.expressions.items()})
    if program.binaries is not None:
        values["b"] = np.array(program.binaries.value, dtype=float)

    duals: Dict[str, np.ndarray] = {}
    for name in DUAL_FAMILIES:
        dual = program.constraints[name].dual_value
        if dual is not None:
            duals[name] = np.array(dual, dtype=float)

    objective = float("nan")
    residuals = None
    binaries = None
    if values.get("gamma") is not None:
        objective = float(values["gamma"].sum())
        v_parent = values["v"][problem.layout.line_parent]
        residuals = values["l"] * v_parent - (values["P"] ** 2 + values["Q"] ** 2)
        if "charge" in values:
            binaries = (values["charge"] - values["discharge"] > 0).astype(float)
    return OpfSolution(
        status=result.status,
        objective=objective,
        values=values,
        duals=duals,
        soc_residuals=residuals,
        binaries=binaries,
        backend=result,
        strategy=strategy,
        passes=passes,
    )


def _solve_once(problem: OpfProblem, backend, strategy: str, passes: int = 0, **kwargs) -> OpfSolution:
    program = build_program(problem, **kwargs)
    result = get_backend(backend).solve(program.problem)
    return _collect(program, result, problem, strategy, passes)


def _simultaneous(solution: OpfSolution) -> np.ndarray:
    charge = solution.values["charge"]
    discharge = solution.values["discharge"]
    return np.minimum(charge, discharge) > SIMULTANEOUS_TOL


def _solve_rounding(problem: OpfProblem, backend) -> OpfSolution:
    solution = _solve_once(problem, backend, "round")
    if not solution.optimal or not problem.n_batteries:
        return solution

    mask = np.zeros((problem.n_batteries, problem.horizon), dtype=bool)
    fixed = np.zeros_like(mask, dtype=float)
    for attempt in range(1, MAX_ROUNDING_PASSES + 1):
        overlap = _simultaneous(solution)
        if not overlap.any():
            return solution
        net = solution.values["charge"] - solution.values["discharge"]
        # the last pass pins every binary so complementarity holds on exit
        chosen = overlap if attempt < MAX_ROUNDING_PASSES else np.ones_like(overlap)
        fixed[chosen] = (net[chosen] >= 0).astype(float)
        mask |= chosen
        logger.info(
            "Redondeo de binarias, pasada %s: %s intervalos con carga y descarga simultáneas",
            attempt,
            int(overlap.sum()),
        )
        candidate = _solve_once(problem, backend, "round", attempt, fixed_mask=mask, fixed_values=fixed)
        if not candidate.optimal:
            logger.warning("La re-solución con binarias fijas terminó en estado %s.", candidate.status)
            return candidate
        solution = candidate

    if _simultaneous(solution).any():
        logger.warning("Persisten cargas y descargas simultáneas tras %s pasadas.", MAX_ROUNDING_PASSES)
    return solution


def _solve_exhaustive(problem: OpfProblem, backend) -> OpfSolution:
    count = problem.binary_count
    if count > MAX_EXHAUSTIVE_BINARIES:
        raise ValueError(f"La enumeración exhaustiva admite a lo sumo {MAX_EXHAUSTIVE_BINARIES} binarias ({count}).")
    if count == 0:
        return _solve_once(problem, backend, "exhaustive")

    program = build_program(problem, binaries="parameter")
    solver = get_backend(backend)
    shape = (problem.n_batteries, problem.horizon)
    best: Optional[OpfSolution] = None
    best_value = -np.inf
    last: Optional[OpfSolution] = None
    for combination in itertools.product((0.0, 1.0), repeat=count):
        program.binaries.value = np.array(combination).reshape(shape)
        result = solver.solve(program.problem)
        last = _collect(program, result, problem, "exhaustive", 0)
        if result.status == STATUS_OPTIMAL and program.problem.value > best_value:
            best_value = float(program.problem.value)
            best = last
    return best if best is not None else last


def diagnose_infeasibility(problem: OpfProblem, backend="CLARABEL") -> str:
    """Names the constraint family whose tightening makes the program infeasible."""
    for family in ("voltage", "flow"):
        relaxed = problem.with_margins(problem.margins.without(family))
        if _solve_once(relaxed, backend, "relax").optimal:
            return family
    if problem.settings.terminal_soc > 0:
        if _solve_once(problem.with_settings(terminal_soc=0.0), backend, "relax").optimal:
            return "battery"
    relaxed = problem.with_margins(problem.margins.without("voltage").without("flow"))
    if not _solve_once(relaxed, backend, "relax").optimal:
        return "network"
    return "voltage+flow"


def solve(problem: OpfProblem, backend="CLARABEL", binary_strategy: str = "round") -> OpfSolution:
    """
    Solves the tightened program. ``relax`` keeps b in [0, 1]; ``round`` fixes
    overlapping charge/discharge by the sign of the net battery power and
    re-solves (two passes at most); ``exhaustive`` enumerates every binary.
    """

    if binary_strategy not in STRATEGIES:
        raise ValueError(f"Estrategia de binarias desconocida '{binary_strategy}'. Opciones: {', '.join(STRATEGIES)}.")

    if binary_strategy == "relax":
        solution = _solve_once(problem, backend, "relax")
    elif binary_strategy == "round":
        solution = _solve_rounding(problem, backend)
    else:
        solution = _solve_exhaustive(problem, backend)

    if solution.status == STATUS_INFEASIBLE:
        solution.hint = diagnose_infeasibility(problem, backend)
        logger.warning("Problema infactible; familia señalada: %s", solution.hint)
    elif solution.optimal:
        logger.info(
            "Solución óptima (%s): objetivo %.6f pu, residuo SOC máx %.2e",
            binary_strategy,
            solution.objective,
            float(np.max(solution.soc_residuals, initial=0.0)),
        )
    return solution


__all__ = ["OpfSolution", "STRATEGIES", "diagnose_infeasibility", "solve"]
