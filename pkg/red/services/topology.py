"""
Radial-topology checks and path sensitivities of a distribution feeder.

Buses are indexed by their position in ``network.buses``; every matrix returned
here follows that order.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Tuple

import networkx as nx
import numpy as np

from .network import Network

logger = logging.getLogger(__name__)

DEFECT_CYCLE = "cycle"
DEFECT_DISCONNECTED = "disconnected"
DEFECT_SLACK = "slack"


class NonRadialNetworkError(ValueError):
    """Raised when an operation needs a connected radial network with one slack bus."""


@dataclass(frozen=True)
class Defect:
    kind: str
    message: str
    buses: Tuple[int, ...] = ()
    lines: Tuple[int, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    defects: Tuple[Defect, ...]

    @property
    def ok(self) -> bool:
        return not self.defects

    def kinds(self) -> List[str]:
        return [defect.kind for defect in self.defects]


@dataclass(frozen=True)
class TreeLayout:
    """Parent/child orientation of every line as seen from the slack bus."""

    slack_index: int
    line_parent: np.ndarray
    line_child: np.ndarray
    bus_line: np.ndarray
    depth: np.ndarray
    order: Tuple[int, ...]


@dataclass(frozen=True)
class SensitivityMatrices:
    R: np.ndarray
    X: np.ndarray
    path: np.ndarray
    downstream: Tuple[FrozenSet[int], ...]


def _multigraph(network: Network) -> nx.MultiGraph:
    graph = nx.MultiGraph()
    graph.add_nodes_from(network.bus_ids)
    for index, line in enumerate(network.lines):
        graph.add_edge(line.from_bus, line.to_bus, key=index)
    return graph


def validate_radial(network: Network) -> ValidationReport:
    """Lists topology defects; an empty report means connected, acyclic and one slack."""
    defects: List[Defect] = []

    slack = network.slack_candidates
    if not slack:
        defects.append(Defect(DEFECT_SLACK, "No hay barra slack (ninguna marcada y no existe la barra 0)."))
    elif len(slack) > 1:
        defects.append(Defect(DEFECT_SLACK, f"Hay {len(slack)} barras slack: {slack}.", buses=tuple(slack)))

    pairs: Counter = Counter()
    simple = nx.Graph()
    simple.add_nodes_from(network.bus_ids)
    for index, line in enumerate(network.lines):
        if line.from_bus == line.to_bus:
            defects.append(
                Defect(DEFECT_CYCLE, f"La línea {index} conecta la barra {line.from_bus} consigo misma.",
                       buses=(line.from_bus,), lines=(index,))
            )
            continue
        pairs[frozenset((line.from_bus, line.to_bus))] += 1
        simple.add_edge(line.from_bus, line.to_bus)

    for pair, count in pairs.items():
        if count > 1:
            members = tuple(
                index
                for index, line in enumerate(network.lines)
                if frozenset((line.from_bus, line.to_bus)) == pair
            )
            defects.append(
                Defect(DEFECT_CYCLE, f"Líneas paralelas entre las barras {sorted(pair)}: {list(members)}.",
                       buses=tuple(sorted(pair)), lines=members)
            )

    for cycle in nx.cycle_basis(simple):
        cycle_buses = set(cycle)
        members = tuple(
            index
            for index, line in enumerate(network.lines)
            if line.from_bus in cycle_buses and line.to_bus in cycle_buses and line.from_bus != line.to_bus
        )
        defects.append(
            Defect(DEFECT_CYCLE, f"Ciclo entre las barras {sorted(cycle_buses)}.",
                   buses=tuple(sorted(cycle_buses)), lines=members)
        )

    components = sorted((sorted(c) for c in nx.connected_components(simple)), key=lambda c: c[0])
    if len(components) > 1:
        root = slack[0] if slack else components[0][0]
        for component in components:
            if root in component:
                continue
            defects.append(
                Defect(DEFECT_DISCONNECTED, f"Componente desconectada de la slack: {component}.",
                       buses=tuple(component))
            )

    if defects:
        logger.info("Red '%s' con %s defectos topológicos", network.name, len(defects))
    return ValidationReport(tuple(defects))


def _require_radial(network: Network) -> None:
    report = validate_radial(network)
    if not report.ok:
        details = "; ".join(defect.message for defect in report.defects)
        raise NonRadialNetworkError(f"La red no es radial: {details}")


def tree_layout(network: Network) -> TreeLayout:
    """Orients every line parent→child by breadth-first search from the slack."""
    _require_radial(network)
    graph = _multigraph(network)
    slack_id = network.slack_bus
    index_of = {bus_id: position for position, bus_id in enumerate(network.bus_ids)}

    n_lines = len(network.lines)
    line_parent = np.zeros(n_lines, dtype=int)
    line_child = np.zeros(n_lines, dtype=int)
    bus_line = np.full(len(network.buses), -1, dtype=int)
    depth = np.zeros(len(network.buses), dtype=int)
    order = [index_of[slack_id]]

    for parent, child in nx.bfs_edges(graph, slack_id):
        line_index = next(iter(graph.get_edge_data(parent, child)))
        p, c = index_of[parent], index_of[child]
        line_parent[line_index] = p
        line_child[line_index] = c
        bus_line[c] = line_index
        depth[c] = depth[p] + 1
        order.append(c)

    return TreeLayout(
        slack_index=index_of[slack_id],
        line_parent=line_parent,
        line_child=line_child,
        bus_line=bus_line,
        depth=depth,
        order=tuple(order),
    )


def path_matrix(network: Network, layout: Optional[TreeLayout] = None) -> np.ndarray:
    """Bus × line 0/1 matrix: entry (i, l) is 1 when line l lies on the slack→i path."""
    layout = layout or tree_layout(network)
    n_buses = len(network.buses)
    path = np.zeros((n_buses, len(network.lines)))
    for bus in layout.order:
        line_index = layout.bus_line[bus]
        if line_index < 0:
            continue
        parent = layout.line_parent[line_index]
        path[bus] = path[parent]
        path[bus, line_index] = 1.0
    return path


def path_sensitivities(network: Network) -> SensitivityMatrices:
    """
    Common-path resistance/reactance sums and downstream bus sets per line.

    ``R[i, k]`` is the resistance shared by the slack→i and slack→k paths, so the
    slack row and column are zero. ``downstream[l]`` holds the bus ids fed
    through line ``l``.
    """

    layout = tree_layout(network)
    path = path_matrix(network, layout)
    r = np.array([line.r for line in network.lines])
    x = np.array([line.x for line in network.lines])
    R = (path * r) @ path.T
    X = (path * x) @ path.T
    ids = network.bus_ids
    downstream = tuple(
        frozenset(ids[bus] for bus in np.flatnonzero(path[:, line_index]))
        for line_index in range(len(network.lines))
    )
    return SensitivityMatrices(R=R, X=X, path=path, downstream=downstream)


__all__ = [
    "Defect",
    "NonRadialNetworkError",
    "SensitivityMatrices",
    "TreeLayout",
    "ValidationReport",
    "path_matrix",
    "path_sensitivities",
    "tree_layout",
    "validate_radial",
]
