"""Pluggable conic backends behind cvxpy."""

import logging
import time
from dataclasses import dataclass
from typing import Dict

import cvxpy as cp
import numpy as np
from cvxpy.error import SolverError

logger = logging.getLogger(__name__)

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_ITERATION_LIMIT = "iteration-limit"

MAX_ITERATIONS = 200
TOLERANCE = 1e-8

_STATUS_MAP = {
    cp.OPTIMAL: STATUS_OPTIMAL,
    cp.OPTIMAL_INACCURATE: STATUS_ITERATION_LIMIT,
    cp.USER_LIMIT: STATUS_ITERATION_LIMIT,
    cp.INFEASIBLE: STATUS_INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: STATUS_INFEASIBLE,
    cp.UNBOUNDED: STATUS_INFEASIBLE,
    cp.UNBOUNDED_INACCURATE: STATUS_INFEASIBLE,
}


@dataclass
class BackendResult:
    status: str
    raw_status: str
    iterations: int = 0
    solve_time: float = 0.0
    max_violation: float = float("nan")


class ConicBackend:
    """Submits a cvxpy cone program to one solver with fixed tolerances."""

    name = ""
    solver = ""

    def options(self) -> Dict[str, float]:
        return {}

    def available(self) -> bool:
        return self.solver in cp.installed_solvers()

    def solve(self, program: cp.Problem) -> BackendResult:
        if not self.available():
            raise ValueError(
                f"El solver {self.solver} no está instalado (disponibles: {', '.join(cp.installed_solvers())})."
            )
        started = time.perf_counter()
        try:
            program.solve(solver=self.solver, verbose=logger.isEnabledFor(logging.DEBUG), **self.options())
        except SolverError as exc:
            logger.warning("El solver %s falló: %s", self.solver, exc)
            return BackendResult(
                status=STATUS_ITERATION_LIMIT,
                raw_status="solver_error",
                solve_time=time.perf_counter() - started,
            )
        elapsed = time.perf_counter() - started
        raw = program.status
        status = _STATUS_MAP.get(raw, STATUS_ITERATION_LIMIT)
        stats = program.solver_stats
        iterations = int(getattr(stats, "num_iters", 0) or 0)
        violation = float("nan")
        if raw in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE, cp.USER_LIMIT):
            try:
                violation = max((float(np.max(c.violation())) for c in program.constraints), default=0.0)
            except (TypeError, ValueError):
                violation = float("nan")
        logger.info(
            "Solver %s: estado %s (%s), %s iteraciones, %.3f s, violación primal %.2e",
            self.name,
            status,
            raw,
            iterations,
            elapsed,
            violation,
        )
        return BackendResult(
            status=status,
            raw_status=str(raw),
            iterations=iterations,
            solve_time=elapsed,
            max_violation=violation,
        )


class ClarabelBackend(ConicBackend):
    name = "CLARABEL"
    solver = cp.CLARABEL

    def options(self):
        return {
            "max_iter": MAX_ITERATIONS,
            "tol_gap_abs": TOLERANCE,
            "tol_gap_rel": TOLERANCE,
            "tol_feas": TOLERANCE,
        }


class EcosBackend(ConicBackend):
    name = "ECOS"
    solver = cp.ECOS

    def options(self):
        return {"max_iters": MAX_ITERATIONS, "abstol": TOLERANCE, "reltol": TOLERANCE, "feastol": TOLERANCE}


class ScsBackend(ConicBackend):
    name = "SCS"
    solver = cp.SCS

    def options(self):
        return {"max_iters": 100000, "eps_abs": 1e-9, "eps_rel": 1e-9}


BACKENDS = {backend.name: backend for backend in (ClarabelBackend, EcosBackend, ScsBackend)}


def get_backend(name) -> ConicBackend:
    if isinstance(name, ConicBackend):
        return name
    key = str(name).upper()
    if key not in BACKENDS:
        raise ValueError(f"Backend desconocido '{name}'. Opciones: {', '.join(sorted(BACKENDS))}.")
    return BACKENDS[key]()


__all__ = [
    "BACKENDS",
    "BackendResult",
    "ConicBackend",
    "STATUS_INFEASIBLE",
    "STATUS_ITERATION_LIMIT",
    "STATUS_OPTIMAL",
    "get_backend",
]
