"""Distance-d colorings of the graph of a sparse symmetric matrix.

A distance-d coloring gives distinct colors to any two nodes whose geodesic
distance is at most ``d``. Colors are numbered from 1.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .matrix import SparseSymMatrix, bfs_distances

__all__ = [
    "Coloring",
    "greedy_coloring",
    "banded_coloring",
    "lattice_coloring",
    "validate_coloring",
]


@dataclass(frozen=True, eq=False)
class Coloring:
    """Node-to-color assignment for a distance-``distance`` coloring.

    ``assignment[i]`` is the 1-based color of node ``i``.
    """

    assignment: np.ndarray
    distance: int

    def __post_init__(self):
        a = np.ascontiguousarray(self.assignment, dtype=np.int64)
        if a.ndim != 1:
            raise ValueError("assignment must be one-dimensional")
        if a.size and a.min() < 1:
            raise ValueError("colors are 1-based")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    @property
    def m(self) -> int:
        return int(self.assignment.max()) if self.n else 0

    @cached_property
    def classes(self) -> list[np.ndarray]:
        """Index sets ``C_1 .. C_m`` (0-based node indices, increasing)."""
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.searchsorted(self.assignment[order], np.arange(1, self.m + 2))
        return [order[bounds[k] : bounds[k + 1]] for k in range(self.m)]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.m + 1)[1:]

    def __repr__(self):
        return f"Coloring(n={self.n}, m={self.m}, distance={self.distance})"


def _adjacency_lists(M: SparseSymMatrix) -> list[list[int]]:
    g = M.graph
    ro, ci = g.indptr.tolist(), g.indices.tolist()
    return [ci[ro[i] : ro[i + 1]] for i in range(M.n)]


def _ball(adj: list[list[int]], source: int, radius: int, dist: list[int]) -> list[int]:
    # truncated BFS over a scratch list; resets the touched entries to -1
    dist[source] = 0
    seen = [source]
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        du = dist[u]
        if du == radius:
            continue
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = du + 1
                seen.append(v)
                queue.append(v)
    for v in seen:
        dist[v] = -1
    return seen


def greedy_coloring(M: SparseSymMatrix, d: int) -> Coloring:
    """Greedy distance-``d`` coloring, processing nodes in index order.

    Each node receives the smallest color not already used inside its
    distance-``d`` ball. The ball is found by a truncated BFS, which avoids
    forming the fill-in of ``A^d``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    n = M.n
    adj = _adjacency_lists(M)
    scratch = [-1] * n
    col = [0] * n
    for i in range(n):
        used = {col[j] for j in _ball(adj, i, d, scratch)}
        c = 1
        while c in used:
            c += 1
        col[i] = c
    return Coloring(np.array(col, dtype=np.int64), d)


def banded_coloring(n: int, beta: int, d: int) -> Coloring:
    """Modular coloring ``(i mod (d*beta + 1)) + 1`` for a ``beta``-banded matrix."""
    if n < 1 or beta < 1 or d < 1:
        raise ValueError("n, beta and d must all be positive")
    return Coloring(np.arange(n) % (d * beta + 1) + 1, d)


def lattice_coloring(dims, d: int) -> Coloring:
    """Closed-form ``(d+1)^D``-color coloring of a regular D-dimensional lattice.

    Nodes are linearized with coordinate 0 varying fastest, matching
    :func:`probetrace.matrix.lattice_graph`.
    """
    dims = tuple(int(k) for k in dims)
    if not dims or min(dims) < 1 or d < 1:
        raise ValueError("lattice sizes and d must be positive")
    coords = np.indices(dims[::-1]).reshape(len(dims), -1)[::-1]
    weights = (d + 1) ** np.arange(len(dims))
    col = (coords % (d + 1)).T @ weights + 1
    return Coloring(col, d)


def validate_coloring(M: SparseSymMatrix, coloring: Coloring) -> list[tuple[int, int, int]]:
    """List all pairs ``(i, j, dist)`` with ``i < j``, equal colors and
    ``dist(i, j) <= d``. An empty list means the coloring is valid.
    Node indices are 0-based.
    """
    if coloring.n != M.n:
        raise ValueError(f"coloring covers {coloring.n} nodes, matrix has {M.n}")
    d = coloring.distance
    col = coloring.assignment
    bad = []
    for i in range(M.n):
        dist = bfs_distances(M, i, d).dist
        (js,) = np.nonzero((dist > 0) & (col == col[i]))
        bad.extend((i, int(j), int(dist[j])) for j in js if j > i)
    return bad
