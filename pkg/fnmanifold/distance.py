"""
Direct (Euclidean / L2) and geodesic (k-NN graph shortest-path) distance matrices.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree, shortest_path
from scipy.spatial.distance import pdist, squareform

logger = logging.getLogger(__name__)

METRICS = ("direct", "geodesic")
SPACES = ("function", "parameter", "embedding")


@dataclass(frozen=True)
class DistanceMatrix:
    """Dense symmetric dissimilarities with their provenance."""

    d: np.ndarray
    metric: str = "direct"
    space: str = "function"
    geodesic_k: Optional[int] = None
    bridges: int = 0

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {d.shape}")
        if self.metric not in METRICS:
            raise ValueError(f"Unknown metric {self.metric!r}: one of {METRICS} is supported")
        if self.space not in SPACES:
            raise ValueError(f"Unknown space {self.space!r}: one of {SPACES} is supported")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distance matrix entries must be finite and nonnegative")
        if not np.array_equal(d, d.T):
            raise ValueError("distance matrix must be exactly symmetric")
        if np.any(np.diag(d) != 0):
            raise ValueError("distance matrix must have a zero diagonal")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class NeighborGraph:
    """Symmetrized k-NN graph; `adjacency` holds direct distances as edge weights."""

    adjacency: csr_matrix
    k: int
    n_components: int
    labels: np.ndarray

    def neighbors(self, i: int) -> np.ndarray:
        row = self.adjacency.getrow(i)
        return np.sort(row.indices)

    def degree(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)


def pairwise_direct(points, weights=None, space: str = "function") -> DistanceMatrix:
    """
    Euclidean distances between the rows of `points`.

    Args:
        points: n x m matrix, one observation per row.
        weights: optional per-column quadrature weights; columns are scaled by sqrt(weights).
        space: provenance tag of the resulting matrix.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError(f"pairwise_direct() needs an n x m matrix with n >= 3, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("pairwise_direct() got non-finite input")
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (x.shape[1],) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("quadrature weights must be finite, nonnegative and one per column")
        x = x * np.sqrt(w)
    # condensed form computes each pair once, so squareform is exactly symmetric
    return DistanceMatrix(squareform(pdist(x, metric="euclidean")), metric="direct", space=space)


def quadrature_weights(grid) -> np.ndarray:
    """Trapezoidal weights for a (possibly non-uniform) grid."""
    g = np.asarray(grid, dtype=float)
    w = np.zeros_like(g)
    steps = np.diff(g)
    w[:-1] += steps / 2.0
    w[1:] += steps / 2.0
    return w


def _check_k(n: int, k: int):
    if not 1 <= k <= n - 1:
        raise ValueError(f"neighbor count k={k} outside [1, {n - 1}]")


def knn_indices(d: np.ndarray, k: int) -> np.ndarray:
    """The k nearest neighbors of every point; ties broken by ascending index."""
    masked = np.array(d, dtype=float)
    np.fill_diagonal(masked, np.inf)
    return np.argsort(masked, axis=1, kind="stable")[:, :k]


def knn_graph(d: DistanceMatrix, k: int) -> NeighborGraph:
    """Edge (i, j) iff j is among the k nearest neighbors of i or vice versa."""
    n = d.n
    _check_k(n, k)
    idx = knn_indices(d.d, k)
    rows = np.repeat(np.arange(n), k)
    cols = idx.ravel()
    # both directions, deduplicated so zero-length edges survive as explicit entries
    pairs = np.unique(np.concatenate([rows * n + cols, cols * n + rows]))
    i, j = np.divmod(pairs, n)
    adjacency = csr_matrix((d.d[i, j], (i, j)), shape=(n, n))
    n_components, labels = connected_components(adjacency, directed=False)
    return NeighborGraph(adjacency=adjacency, k=k, n_components=int(n_components), labels=labels)


def _bridge_components(graph: NeighborGraph, d: np.ndarray):
    """Add the minimum spanning set of shortest inter-component edges."""
    c = graph.n_components
    labels = graph.labels
    best = np.full((c, c), np.inf)
    best_pair = {}
    for a in range(c):
        members_a = np.flatnonzero(labels == a)
        for b in range(a + 1, c):
            members_b = np.flatnonzero(labels == b)
            block = d[np.ix_(members_a, members_b)]
            flat = int(np.argmin(block))
            ia, ib = np.unravel_index(flat, block.shape)
            best[a, b] = block[ia, ib]
            best_pair[(a, b)] = (int(members_a[ia]), int(members_b[ib]))
    # every spanning tree over c components has c - 1 edges, so a constant shift keeps the
    # minimum one while keeping zero-length bridges visible to the sparse solver
    shifted = np.where(np.isfinite(best), best + 1.0, 0.0)
    tree = minimum_spanning_tree(csr_matrix(shifted)).tocoo()
    base = graph.adjacency.tocoo()
    rows, cols = [base.row], [base.col]
    for a, b in zip(tree.row, tree.col):
        i, j = best_pair[(min(a, b), max(a, b))]
        rows.append(np.array([i, j]))
        cols.append(np.array([j, i]))
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    adjacency = csr_matrix((d[rows, cols], (rows, cols)), shape=d.shape)
    return adjacency, len(tree.row)


def geodesic_from_direct(d: DistanceMatrix, k: int) -> DistanceMatrix:
    """
    Shortest-path distances over the symmetrized k-NN graph of a direct distance matrix.

    Disconnected graphs are bridged first with the shortest direct edges that span the
    components, so the result is always finite.
    """
    if d.metric != "direct":
        raise ValueError("geodesic_from_direct() needs a direct distance matrix")
    graph = knn_graph(d, k)
    adjacency, bridges = graph.adjacency, 0
    if graph.n_components > 1:
        adjacency, bridges = _bridge_components(graph, d.d)
        logger.warning(f"k-NN graph with k={k} has {graph.n_components} components, added {bridges} bridging edges")
    g = shortest_path(adjacency, method="D", directed=False)
    g = np.minimum(g, g.T)
    np.fill_diagonal(g, 0.0)
    return DistanceMatrix(g, metric="geodesic", space=d.space, geodesic_k=k, bridges=bridges)


def epsilon_compute(d: DistanceMatrix, p: float = 0.01) -> float:
    """
    Data-set specific DIFFMAP kernel width: twice the median over points of the
    squared distance to their ceil(p * n)-th nearest neighbor.
    """
    n = d.n
    if n < 3:
        raise ValueError(f"epsilon_compute() needs n >= 3, got {n}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile fraction p must lie in (0, 1), got {p}")
    k = min(max(1, math.ceil(p * n)), n - 1)
    masked = np.array(d.d)
    np.fill_diagonal(masked, np.inf)
    kth = np.sort(masked, axis=1)[:, k - 1]
    eps = 2.0 * float(np.median(kth**2))
    if not eps > 0.0:
        raise ValueError("epsilon_compute() got degenerate all-zero neighbor distances")
    return eps
