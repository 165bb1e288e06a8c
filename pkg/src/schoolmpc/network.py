"""Directed orientation-coupling graph and its centrality weights.

Edge (i, j) means fish j lies in the orientation zone of fish i, so j's
heading enters i's alignment force. The influence weights are the left
eigenvector (eigenvalue 1) of the row-normalized adjacency: fish that many
others listen to, directly or indirectly, get large weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotStronglyConnectedError, SchoolError
from .model import NeighborSets


@dataclass
class OrientationGraph:
    """Boolean adjacency with adjacency[i, j] = True iff edge i -> j."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=bool)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise SchoolError(f"adjacency must be square, got {a.shape}")
        if np.any(np.diag(a)):
            raise SchoolError("self-loops are not allowed")
        self.adjacency = a

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def out_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def weight_matrix(self) -> np.ndarray:
        """Row-normalized adjacency; rows without edges stay all zero."""
        deg = self.out_degrees.astype(float)
        w = self.adjacency.astype(float)
        nz = deg > 0
        w[nz] /= deg[nz, None]
        return w

    def edge_list(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in np.argwhere(self.adjacency)]

    def to_dict(self) -> dict:
        return {"n": self.n_nodes, "edges": [[i, j] for i, j in self.edge_list()]}

    @classmethod
    def from_dict(cls, d: dict) -> "OrientationGraph":
        n = int(d["n"])
        adj = np.zeros((n, n), dtype=bool)
        for i, j in d["edges"]:
            adj[int(i), int(j)] = True
        return cls(adj)


def build_graph(sets: NeighborSets) -> OrientationGraph:
    return OrientationGraph(sets.orientation.copy())


def _all_reachable(adj: np.ndarray, start: int) -> bool:
    n = adj.shape[0]
    visited = np.zeros(n, dtype=bool)
    visited[start] = True
    frontier = visited.copy()
    while frontier.any():
        nxt = adj[frontier].any(axis=0) & ~visited
        visited |= nxt
        frontier = nxt
    return bool(visited.all())


def is_strongly_connected(graph: OrientationGraph) -> bool:
    """True iff every node reaches every other along directed edges.

    Double reachability from node 0, forward and reversed; a single node
    counts as strongly connected.
    """
    if graph.n_nodes == 1:
        return True
    adj = graph.adjacency
    return _all_reachable(adj, 0) and _all_reachable(adj.T, 0)


def eigenvector_centrality(
    graph: OrientationGraph, tol: float = 1e-12, max_iter: int = 100_000
) -> np.ndarray:
    """Left Perron vector of the row-normalized adjacency, summing to one.

    Power iteration on the transpose with L1 renormalization each step.
    Oscillation between two iterates switches the update to averaging
    successive iterates, which also damps higher-period cycles; a long stall
    triggers the same fallback. The result is checked to satisfy
    ||W^T b - b||_inf <= 1e-10.
    """
    n = graph.n_nodes
    if n == 1:
        return np.ones(1)
    if not is_strongly_connected(graph):
        raise NotStronglyConnectedError(
            "centrality weights need a strongly connected orientation graph"
        )
    wt = graph.weight_matrix().T
    x = np.full(n, 1.0 / n)
    prev = None
    damped = False
    for it in range(max_iter):
        y = wt @ x
        if damped:
            y = 0.5 * (x + y)
        y /= y.sum()
        if float(np.max(np.abs(y - x))) <= tol:
            x = y
            break
        if not damped:
            if prev is not None and float(np.max(np.abs(y - prev))) <= tol:
                damped = True
            elif it >= 512:
                damped = True
        prev = x
        x = y
    residual = float(np.max(np.abs(wt @ x - x)))
    if residual > 1e-10:
        raise SchoolError(f"centrality iteration stalled at residual {residual:g}")
    if np.any(x <= 0):
        raise SchoolError("centrality produced a non-positive weight")
    return x
