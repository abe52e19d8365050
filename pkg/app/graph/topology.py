"""Undirected communication topologies and their consensus matrices."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, Tuple, Union

import networkx as nx
import numpy as np

from app.utils.errors import DisconnectedGraph, EmptyGraph, GraphError

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
NAMED_FAMILIES = ("complete", "ring", "path", "star")


@dataclass(frozen=True)
class Topology:
    """Agent count plus a set of undirected zero-based edges"""

    m: int
    edges: FrozenSet[Tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop on node {i}")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise GraphError(f"edge ({i}, {j}) outside 0..{self.m - 1}")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.m))
        graph.add_edges_from(self.edges)
        return graph

    @property
    def connected(self) -> bool:
        """All nodes reachable from node 0"""
        if self.m == 0:
            return False
        return len(nx.node_connected_component(self.to_networkx(), 0)) == self.m

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.m, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    @classmethod
    def from_networkx(cls, graph: nx.Graph) -> "Topology":
        mapping = {node: k for k, node in enumerate(sorted(graph.nodes))}
        edges = {(mapping[a], mapping[b]) for a, b in graph.edges if a != b}
        return cls(m=graph.number_of_nodes(), edges=frozenset(edges))


def named_topology(family: str, m: int) -> Topology:
    """complete | ring | path | star on m agents"""
    if m < 0:
        raise EmptyGraph(f"agent count must be nonnegative, got {m}")
    if family == "complete":
        graph = nx.complete_graph(m)
    elif family == "ring":
        # a ring on two nodes is a single edge
        graph = nx.cycle_graph(m) if m > 2 else nx.path_graph(m)
    elif family == "path":
        graph = nx.path_graph(m)
    elif family == "star":
        graph = nx.star_graph(m - 1) if m > 1 else nx.empty_graph(m)
    else:
        raise GraphError(f"unknown topology family '{family}', expected one of {NAMED_FAMILIES}")
    return Topology.from_networkx(graph)


def random_connected_topology(m: int, edge_prob: float, rng: np.random.Generator) -> Topology:
    """Random spanning tree plus independent extra edges with probability edge_prob"""
    if m < 1:
        raise EmptyGraph("random topology needs at least one agent")
    order = rng.permutation(m)
    edges = set()
    for k in range(1, m):
        parent = order[int(rng.integers(0, k))]
        edges.add((int(order[k]), int(parent)))
    for i in range(m):
        for j in range(i + 1, m):
            if rng.random() < edge_prob:
                edges.add((i, j))
    return Topology(m=m, edges=frozenset(edges))


def read_edge_list(path: Union[str, Path]) -> Topology:
    """First line is m, then one 'i j' pair per line (zero-based)."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise EmptyGraph(f"edge list {path} is empty")
    m = int(lines[0])
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise GraphError(f"malformed edge line '{ln}' in {path}")
        edges.append((int(parts[0]), int(parts[1])))
    return Topology(m=m, edges=frozenset(edges))


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Symmetric doubly stochastic consensus weights.

    ``w`` is stored read-only; ``nu`` is its smallest strictly positive entry
    and ``delta = 1 - nu / (4 m^2)`` the per-step mixing factor.
    """

    w: np.ndarray
    m: int = field(init=False)
    nu: float = field(init=False)
    delta: float = field(init=False)

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
            raise EmptyGraph(f"adjacency must be a non-empty square matrix, got shape {w.shape}")
        w.setflags(write=False)
        m = w.shape[0]
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "nu", float(w[w > 0].min()))
        object.__setattr__(self, "delta", 1.0 - self.nu / (4.0 * m * m))
        self.check()

    def check(self):
        w = self.w
        if np.any(w < 0):
            raise GraphError("negative consensus weight")
        if np.any(np.abs(w.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise GraphError("rows of A must sum to 1")
        if np.any(np.abs(w.sum(axis=0) - 1.0) > ROW_SUM_TOL):
            raise GraphError("columns of A must sum to 1")
        if not np.array_equal(w, w.T):
            raise GraphError("A must be exactly symmetric")
        if np.any(np.diag(w) <= 0):
            raise GraphError("A must have a strictly positive diagonal")

    def support_within(self, topology: Topology) -> bool:
        allowed = np.eye(self.m, dtype=bool)
        for i, j in topology.edges:
            allowed[i, j] = allowed[j, i] = True
        return bool(np.all((self.w > 0) <= allowed))

    def to_csv(self, path: Union[str, Path]):
        np.savetxt(path, self.w, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "AdjacencyMatrix":
        return cls(np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float)))


def identity_matrix(m: int) -> AdjacencyMatrix:
    return AdjacencyMatrix(np.eye(m))


def uniform_matrix(m: int) -> AdjacencyMatrix:
    """J/m, the fully connected average"""
    return AdjacencyMatrix(np.full((m, m), 1.0 / m))


def metropolis_weights(topology: Topology) -> AdjacencyMatrix:
    """Max-degree Metropolis weights: w_ij = 1/(1 + max(deg_i, deg_j)) on edges."""
    if topology.m == 0:
        raise EmptyGraph("topology has no agents")
    if not topology.connected:
        raise DisconnectedGraph(f"topology on {topology.m} agents is not connected")
    deg = topology.degrees()
    w = np.zeros((topology.m, topology.m))
    for i, j in sorted(topology.edges):
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    # summing sorted rows keeps the diagonal identical for mirrored nodes
    for i in range(topology.m):
        w[i, i] = 1.0 - float(np.sum(np.sort(np.delete(w[i], i))))
    adjacency = AdjacencyMatrix(w)
    logger.debug("metropolis weights m=%d nu=%.6g", topology.m, adjacency.nu)
    return adjacency


def static_deviation_bound(m: int, nu: float) -> float:
    """16 m^2 ln m / nu, the uniform bound on the static consensus deviation"""
    return 16.0 * m * m * np.log(m) / nu if m > 1 else 0.0


def mixing_bound(m: int, nu: float, t: int) -> float:
    """m * delta^t bound on the l1 distance of a row of A^t to the uniform row"""
    return m * (1.0 - nu / (4.0 * m * m)) ** t
