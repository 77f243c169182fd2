import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from red.services.network import Network
from red.services.topology import TreeLayout, path_matrix, tree_layout

logger = logging.getLogger(__name__)


@dataclass
class PowerFlowResult:
    """
    Branch-flow state for a batch of injections (leading axes of the input).

    ``v`` is (..., bus) squared magnitude; ``P``, ``Q`` are sending-end flows and
    ``l`` squared currents, (..., line). ``converged`` is False where the sweep
    diverged or ran out of iterations.
    """

    v: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    l: np.ndarray
    converged: np.ndarray
    iterations: int


def ac_power_flow(
    network: Network,
    p_inj: np.ndarray,
    q_inj: np.ndarray,
    layout: Optional[TreeLayout] = None,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> PowerFlowResult:
    """
    Backward/forward sweep of the DistFlow equations on a radial feeder.

    Injections are in pu, positive when exported, shaped (..., bus); the slack
    entry is ignored.
    """

    layout = layout or tree_layout(network)
    path = path_matrix(network, layout)
    r = np.array([line.r for line in network.lines])
    x = np.array([line.x for line in network.lines])
    z2 = r**2 + x**2
    # subtree[l, m] = 1 when line m sits at or below line l
    subtree = path[layout.line_child].T

    p = np.asarray(p_inj, dtype=float)
    q = np.asarray(q_inj, dtype=float)
    batch = p.shape[:-1]
    v = np.full(batch + (len(network.buses),), network.slack_v)
    ell = np.zeros(batch + (len(network.lines),))
    demand_p = -p @ path
    demand_q = -q @ path
    active = np.ones(batch, dtype=bool)
    iterations = 0

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for iterations in range(1, max_iter + 1):
            P = demand_p + (ell * r) @ subtree.T
            Q = demand_q + (ell * x) @ subtree.T
            v_parent = v[..., layout.line_parent]
            ell_new = (P**2 + Q**2) / v_parent
            drop = 2 * (r * P + x * Q) - z2 * ell_new
            v_new = network.slack_v - drop @ path.T
            change = np.maximum(np.abs(v_new - v).max(axis=-1), np.abs(ell_new - ell).max(axis=-1, initial=0.0))
            v, ell = v_new, ell_new
            broken = ~np.isfinite(change) | (v.min(axis=-1) <= 0)
            active = active & ~broken
            if np.all(~active | (change < tol)):
                break
        P = demand_p + (ell * r) @ subtree.T
        Q = demand_q + (ell * x) @ subtree.T

    converged = active & np.isfinite(v).all(axis=-1) & (change < tol)
    if not np.all(converged):
        logger.debug("Flujo de potencia: %s casos sin converger", int((~converged).sum()))
    return PowerFlowResult(v=v, P=P, Q=Q, l=ell, converged=converged, iterations=iterations)


__all__ = ["PowerFlowResult", "ac_power_flow"]
