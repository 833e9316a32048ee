"""Directed k-nearest-neighbor graphs over predictor samples.

Each point gets a directed edge to its ``k`` nearest other points in
Euclidean distance.  Distance ties are always broken toward the
smaller point index, which makes the graph a pure function of the
input coordinates regardless of which backend built it.

Small inputs use exact brute force; larger ones use a kd-tree with a
per-row brute-force fallback whenever a distance tie straddles the
cut-off rank, so both paths return identical graphs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

# At or below this many points, skip the tree and compare all pairs.
BRUTE_FORCE_THRESHOLD = 256

# Row block size for the brute-force distance sweep.
_BLOCK_ROWS = 512


@dataclass(frozen=True)
class KnnGraph:
    """Out-neighbor lists of a directed k-nearest-neighbor graph.

    ``out_neighbors`` is ``(n, k)`` int64; row ``i`` lists the ``k``
    nearest points to ``i`` (self excluded), nearest first, distance
    ties broken by smaller index.  The array is read-only.
    """

    k: int
    n: int
    out_neighbors: np.ndarray
    dim: int

    def __post_init__(self):
        nbrs = self.out_neighbors
        if nbrs.shape != (self.n, self.k):
            raise ValueError(f"out_neighbors shape {nbrs.shape} != ({self.n}, {self.k})")
        nbrs.setflags(write=False)


def build_knn_graph(
    points: np.ndarray, k: int, *, brute_force_threshold: int = BRUTE_FORCE_THRESHOLD
) -> KnnGraph:
    """Build the directed k-nearest-neighbor graph of ``points``.

    Parameters
    ----------
    points : (n, d) array of finite floats.
    k : number of out-neighbors per point, ``1 <= k <= n - 1``.
    brute_force_threshold : inputs with ``n`` at or below this use the
        all-pairs path; larger inputs use the kd-tree path.

    Returns
    -------
    KnnGraph with ties resolved toward smaller indices on both paths.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be 2-D, got shape {points.shape}")
    n, d = points.shape
    if not np.isfinite(points).all():
        raise ValueError("points contain non-finite coordinates")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must satisfy 1 <= k <= n - 1, got k={k} with n={n}")
    if n <= brute_force_threshold:
        nbrs = _brute_force_neighbors(points, k)
    else:
        nbrs = _kdtree_neighbors(points, k)
    return KnnGraph(k=k, n=n, out_neighbors=nbrs, dim=d)


def degrees(graph: KnnGraph) -> np.ndarray:
    """Total degree (in + out) of every vertex; out-degree is always ``k``."""
    indeg = np.bincount(graph.out_neighbors.ravel(), minlength=graph.n)
    return indeg.astype(np.int64) + graph.k


def neighbors(graph: KnnGraph, i: int) -> np.ndarray:
    """Stored out-neighbor indices of vertex ``i``, nearest first."""
    if not 0 <= i < graph.n:
        raise IndexError(f"vertex {i} out of range for graph on {graph.n} points")
    return graph.out_neighbors[i]


def _self_excluded_sqdist(points: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Squared distances from each row in ``rows`` to all points, self set to +inf."""
    diff = points[rows][:, None, :] - points[None, :, :]
    sq = np.sum(diff * diff, axis=-1)
    sq[np.arange(rows.shape[0]), rows] = np.inf
    return sq


def _brute_force_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    n = points.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, _BLOCK_ROWS):
        rows = np.arange(start, min(start + _BLOCK_ROWS, n))
        sq = _self_excluded_sqdist(points, rows)
        # stable sort keeps equal distances in increasing index order
        out[rows] = np.argsort(sq, axis=1, kind="stable")[:, :k]
    return out


def _kdtree_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    n = points.shape[0]
    n_query = min(n, k + 2)
    tree = cKDTree(points)
    _, idx = tree.query(points, k=n_query, workers=1)
    idx = idx.reshape(n, n_query)

    # Recompute distances with the same arithmetic as the brute path so
    # orderings agree bit for bit; push self entries to the back.
    diff = points[idx] - points[:, None, :]
    sq = np.sum(diff * diff, axis=-1)
    sq[idx == np.arange(n)[:, None]] = np.inf
    order = np.lexsort((idx, sq), axis=-1)
    rr = np.arange(n)[:, None]
    idx_sorted = np.take_along_axis(idx, order, axis=1)
    sq_sorted = np.take_along_axis(sq, order, axis=1)
    out = idx_sorted[:, :k].astype(np.int64)

    if n_query > k:
        # A tie across the rank-k boundary (or a duplicate crowding out
        # the self entry, which shows up as the same condition) means the
        # tree's candidate set may be incomplete: redo those rows exactly.
        unresolved = np.nonzero(sq_sorted[:, k - 1] == sq_sorted[:, k])[0]
        for start in range(0, unresolved.shape[0], _BLOCK_ROWS):
            rows = unresolved[start : start + _BLOCK_ROWS]
            sq_full = _self_excluded_sqdist(points, rows)
            out[rows] = np.argsort(sq_full, axis=1, kind="stable")[:, :k]
    return out
