"""Sparse symmetric matrices, their graphs, and the graph generators used in
the experiments.

The matrix is stored in compressed row form with both triangles present, so
walking a row is the same as enumerating the neighbours of a node.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

__all__ = [
    "MatrixError",
    "MatrixMarketError",
    "AsymmetryError",
    "IndexRangeError",
    "SparseSymMatrix",
    "DistanceMap",
    "UNREACHED",
    "load_matrix_market",
    "bfs_distances",
    "all_pairs_distances",
    "laplacian_from_adjacency",
    "normalize_unit_trace",
    "rgg_radius",
    "random_geometric_graph",
    "largest_component",
    "path_graph",
    "lattice_graph",
    "matvec",
]

UNREACHED = -1


class MatrixError(ValueError):
    """Base class for invalid matrix input."""


class MatrixMarketError(MatrixError):
    """Malformed Matrix Market header or entries."""


class AsymmetryError(MatrixError):
    """A matrix that was required to be symmetric is not."""


class IndexRangeError(MatrixError):
    """An entry index lies outside the declared dimensions."""


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """Symmetric sparse matrix in CSR form with the full pattern stored.

    Parameters
    ----------
    n : int
        Number of rows (and nodes of the graph ``G(A)``).
    row_offsets : ndarray of int, shape (n + 1,)
    col_indices : ndarray of int, shape (nnz,)
        Sorted and unique within each row.
    values : ndarray of float, shape (nnz,)

    Explicitly stored zeros are allowed but do not count as graph edges.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        ro = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        va = np.ascontiguousarray(self.values, dtype=np.float64)
        for arr in (ro, ci, va):
            arr.setflags(write=False)
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", va)
        if self._check:
            self._validate()

    def _validate(self):
        n = self.n
        ro, ci = self.row_offsets, self.col_indices
        if ro.shape != (n + 1,) or ro[0] != 0 or ro[-1] != ci.size:
            raise MatrixError("row_offsets inconsistent with n and nnz")
        if ci.size != self.values.size:
            raise MatrixError("col_indices and values differ in length")
        if np.any(np.diff(ro) < 0):
            raise MatrixError("row_offsets must be nondecreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= n):
            raise IndexRangeError("column index out of range")
        rows = np.repeat(np.arange(n), np.diff(ro))
        # sorted + unique inside each row <=> strictly increasing key
        key = rows * max(n, 1) + ci
        if np.any(np.diff(key) <= 0):
            raise MatrixError("column indices must be sorted and unique within rows")
        csr = self.to_scipy()
        if (csr != csr.T).nnz:
            raise AsymmetryError("matrix is not symmetric")

    # construction helpers

    @classmethod
    def from_scipy(cls, mat, *, symmetrize=False) -> "SparseSymMatrix":
        """Build from any scipy sparse matrix (or dense array).

        With ``symmetrize=True`` the lower triangle is mirrored to the upper
        one, as for a Matrix Market file with a ``symmetric`` header.
        """
        csr = sp.csr_array(mat, dtype=np.float64)
        if csr.shape[0] != csr.shape[1]:
            raise MatrixError(f"matrix must be square, got {csr.shape}")
        if symmetrize:
            low = sp.tril(csr, format="csr")
            csr = (low + sp.tril(low, k=-1, format="csr").T).tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, a) -> "SparseSymMatrix":
        a = np.asarray(a, dtype=np.float64)
        return cls.from_scipy(sp.csr_array(a))

    @classmethod
    def from_edges(cls, n: int, edges, weights=None) -> "SparseSymMatrix":
        """Adjacency matrix from an undirected edge list (0-based, no loops)."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        w = np.ones(len(edges)) if weights is None else np.asarray(weights, float)
        i, j = edges[:, 0], edges[:, 1]
        keep = i != j
        i, j, w = i[keep], j[keep], w[keep]
        coo = sp.coo_array(
            (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(n, n),
        )
        csr = coo.tocsr()
        # duplicate edges collapse to a single entry, not a summed weight
        if weights is None:
            csr.data[:] = 1.0
        csr.sort_indices()
        return cls(n, csr.indptr, csr.indices, csr.data)

    # views

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    def to_scipy(self) -> sp.csr_array:
        return self._csr

    @cached_property
    def _csr(self) -> sp.csr_array:
        return sp.csr_array(
            (self.values, self.col_indices, self.row_offsets), shape=(self.n, self.n)
        )

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def trace(self) -> float:
        return float(self.diagonal().sum())

    def neighbors(self, i: int) -> np.ndarray:
        """Nodes adjacent to ``i`` in ``G(A)``: nonzero off-diagonal entries."""
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        cols = self.col_indices[lo:hi]
        vals = self.values[lo:hi]
        return cols[(vals != 0) & (cols != i)]

    @cached_property
    def graph(self) -> sp.csr_array:
        """0/1 adjacency pattern of ``G(A)`` (no loops, no explicit zeros)."""
        csr = (self._csr - sp.diags_array(self._csr.diagonal())).tocsr()
        csr.eliminate_zeros()
        csr.data[:] = 1.0
        return csr

    def __matmul__(self, other):
        return self._csr @ other

    def __repr__(self):
        return f"SparseSymMatrix(n={self.n}, nnz={self.nnz})"


@dataclass(frozen=True)
class DistanceMap:
    """Truncated geodesic distances from one node; ``UNREACHED`` beyond ``cap``."""

    source: int
    dist: np.ndarray
    cap: int

    def reached(self) -> np.ndarray:
        return np.flatnonzero(self.dist != UNREACHED)


def load_matrix_market(path) -> SparseSymMatrix:
    """Read a real coordinate Matrix Market file into a ``SparseSymMatrix``.

    Files with a ``symmetric`` header are mirrored. A ``general`` file is
    accepted only if the assembled matrix equals its transpose exactly.
    """
    with open(path, "r") as fh:
        header = fh.readline().strip().lower().split()
    if len(header) < 5 or header[0] != "%%matrixmarket" or header[1] != "matrix":
        raise MatrixMarketError(f"{path}: missing or malformed %%MatrixMarket header")
    _, _, fmt, field_, symm = header[:5]
    if fmt != "coordinate":
        raise MatrixMarketError(f"{path}: only coordinate format is supported")
    if field_ not in ("real", "integer", "pattern"):
        raise MatrixMarketError(f"{path}: unsupported field '{field_}'")
    if symm not in ("symmetric", "general"):
        raise MatrixMarketError(f"{path}: unsupported symmetry '{symm}'")

    try:
        coo = scipy.io.mmread(path)
    except ValueError as exc:
        if "out of bounds" in str(exc) or "index" in str(exc).lower():
            raise IndexRangeError(f"{path}: {exc}") from exc
        raise MatrixMarketError(f"{path}: {exc}") from exc
    except Exception as exc:  # noqa: BLE001 - parser raises assorted types
        raise MatrixMarketError(f"{path}: {exc}") from exc

    csr = sp.csr_array(coo, dtype=np.float64)
    if csr.shape[0] != csr.shape[1]:
        raise MatrixMarketError(f"{path}: matrix is not square {csr.shape}")
    if symm == "general" and (csr != csr.T).nnz:
        raise AsymmetryError(f"{path}: general matrix is not symmetric")
    csr.sum_duplicates()
    csr.eliminate_zeros()
    csr.sort_indices()
    return SparseSymMatrix(csr.shape[0], csr.indptr, csr.indices, csr.data)


def bfs_distances(M: SparseSymMatrix, source: int, cap: int) -> DistanceMap:
    """Breadth-first search from ``source`` explored to depth ``cap``."""
    if not 0 <= source < M.n:
        raise IndexError(f"source {source} out of range for n={M.n}")
    if cap < 0:
        raise ValueError("cap must be nonnegative")
    dist = np.full(M.n, UNREACHED, dtype=np.int64)
    dist[source] = 0
    ro, ci, va = M.row_offsets, M.col_indices, M.values
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u]
        if du >= cap:
            continue
        for k in range(ro[u], ro[u + 1]):
            v = ci[k]
            if dist[v] == UNREACHED and va[k] != 0:
                dist[v] = du + 1
                queue.append(v)
    return DistanceMap(source, dist, cap)


def all_pairs_distances(M: SparseSymMatrix) -> np.ndarray:
    """Dense all-pairs hop distances; unreachable pairs get ``UNREACHED``."""
    from scipy.sparse.csgraph import shortest_path

    d = shortest_path(M.graph, method="D", unweighted=True, directed=False)
    out = np.full(d.shape, UNREACHED, dtype=np.int64)
    fin = np.isfinite(d)
    out[fin] = d[fin].astype(np.int64)
    return out


def laplacian_from_adjacency(A: SparseSymMatrix) -> SparseSymMatrix:
    """Graph Laplacian ``D - A`` for a weighted adjacency with zero diagonal."""
    if np.any(A.diagonal() != 0):
        raise MatrixError("adjacency matrix must have a zero diagonal")
    if np.any(A.values < 0):
        raise MatrixError("adjacency weights must be nonnegative")
    csr = A.to_scipy()
    deg = np.asarray(csr.sum(axis=1)).ravel()
    L = sp.diags_array(deg, format="csr") - csr
    return SparseSymMatrix.from_scipy(L)


def normalize_unit_trace(M: SparseSymMatrix) -> SparseSymMatrix:
    tr = M.trace()
    if not tr > 0:
        raise MatrixError(f"trace must be positive to normalize, got {tr}")
    return SparseSymMatrix(M.n, M.row_offsets, M.col_indices, M.values / tr, _check=False)


def rgg_radius(n: int) -> float:
    """Connection radius ``sqrt(log n / (pi n))`` keeping colour counts stable in n."""
    if n < 2:
        return 1.0
    return math.sqrt(math.log(n) / (math.pi * n))


def largest_component(M: SparseSymMatrix) -> tuple[SparseSymMatrix, np.ndarray]:
    """Restrict ``M`` to its largest connected component.

    Ties go to the component containing the smallest node index. Returns the
    submatrix and the original indices of the kept nodes (increasing).
    """
    if M.n == 0:
        return M, np.arange(0)
    ncomp, labels = connected_components(M.graph, directed=False)
    sizes = np.bincount(labels, minlength=ncomp)
    best = sizes.max()
    # labels are assigned in order of first appearance, so the first label of
    # maximal size holds the smallest index among the tied components
    first_seen = {}
    for idx, lab in enumerate(labels):
        first_seen.setdefault(lab, idx)
    winner = min((first_seen[c], c) for c in range(ncomp) if sizes[c] == best)[1]
    keep = np.flatnonzero(labels == winner)
    sub = M.to_scipy()[keep][:, keep]
    return SparseSymMatrix.from_scipy(sub), keep


def random_geometric_graph(n: int, radius: float | None = None, seed: int = 0) -> SparseSymMatrix:
    """Adjacency matrix of the largest component of a random geometric graph.

    ``n`` points are drawn uniformly in the unit square (all x coordinates,
    then all y coordinates, from one seeded generator); nodes are joined by a
    unit-weight edge when their distance is at most ``radius``. The default
    radius is :func:`rgg_radius`.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if radius is None:
        radius = rgg_radius(n)
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    xs = rng.random(n)
    ys = rng.random(n)
    pairs = cKDTree(np.column_stack([xs, ys])).query_pairs(radius, output_type="ndarray")
    A = SparseSymMatrix.from_edges(n, pairs)
    sub, _ = largest_component(A)
    return sub


def path_graph(n: int) -> SparseSymMatrix:
    """Adjacency matrix of the path 0 - 1 - ... - (n-1)."""
    i = np.arange(n - 1)
    return SparseSymMatrix.from_edges(n, np.column_stack([i, i + 1]))


def lattice_graph(dims) -> SparseSymMatrix:
    """Adjacency of a regular lattice; node index has coordinate 0 fastest."""
    dims = tuple(int(k) for k in dims)
    n = int(np.prod(dims))
    coords = np.indices(dims[::-1]).reshape(len(dims), -1)[::-1].T
    strides = np.cumprod((1,) + dims[:-1])
    edges = []
    for k, nk in enumerate(dims):
        src = coords[coords[:, k] < nk - 1] @ strides
        edges.append(np.column_stack([src, src + strides[k]]))
    edges = np.concatenate(edges) if edges else np.zeros((0, 2), np.int64)
    return SparseSymMatrix.from_edges(n, edges)


def matvec(M: SparseSymMatrix, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != M.n:
        raise ValueError(f"dimension mismatch: matrix n={M.n}, vector length {v.shape[0]}")
    return M.to_scipy() @ v
