"""Sparsity pattern and column coloring for Jacobians of fiber stencil operators.

The mean curvature operator at a node reads u within two stencil steps
(a centered divergence of a flux built from centered first differences).
Columns sharing no row can be probed together by one finite difference.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .fiber import FiberGrid


@dataclass(frozen=True)
class Coloring:
    rows: np.ndarray
    cols: np.ndarray
    colors: np.ndarray  # color of each column (flat node index)
    n_colors: int


def neighbor_indices(grid: FiberGrid):
    """Flat indices of each node and its four stencil neighbors, shape (5, N)."""
    idx = np.arange(int(np.prod(grid.shape)), dtype=float).reshape(grid.shape)
    out = [idx]
    for axis in range(2):
        out.extend(grid._neighbors(idx, axis))
    return np.stack([a.ravel() for a in out]).astype(np.int64)


def stencil_pattern(grid: FiberGrid) -> sparse.csr_matrix:
    """Boolean pattern with P[i, j] = 1 when node j is within two stencil steps of node i."""
    nb = neighbor_indices(grid)
    N = nb.shape[1]
    one = sparse.csr_matrix((np.ones(nb.size), (np.tile(np.arange(N), 5), nb.ravel())), shape=(N, N))
    two = (one @ one).tocsr()
    two.data[:] = 1.0
    return two


def greedy_coloring(pattern: sparse.csr_matrix) -> np.ndarray:
    """Distance-2 greedy coloring: columns sharing a row get different colors."""
    conflict = (pattern.T @ pattern).tocsr()
    N = pattern.shape[1]
    colors = np.full(N, -1, dtype=np.int64)
    indptr, indices = conflict.indptr, conflict.indices
    for j in range(N):
        taken = colors[indices[indptr[j]:indptr[j + 1]]]
        taken = taken[taken >= 0]
        if taken.size == 0:
            colors[j] = 0
            continue
        used = np.zeros(taken.max() + 2, dtype=bool)
        used[taken] = True
        colors[j] = int(np.argmin(used))
    return colors


_CACHE: dict = {}
_LOCK = threading.Lock()


def jacobian_coloring(grid: FiberGrid) -> Coloring:
    """Cached pattern and coloring for ``grid`` (keyed by topology and shape)."""
    key = (grid.topology, grid.shape)
    with _LOCK:
        hit = _CACHE.get(key)
    if hit is not None:
        return hit
    P = stencil_pattern(grid).tocoo()
    colors = greedy_coloring(P.tocsr())
    col = Coloring(P.row.astype(np.int64), P.col.astype(np.int64), colors, int(colors.max()) + 1)
    with _LOCK:
        _CACHE[key] = col
    return col
