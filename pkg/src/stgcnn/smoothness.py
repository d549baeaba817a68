"""Smoothness-based graph learning.

The graph is pruned greedily from the complete unit-weight graph: at every
step the edge whose removal lowers ``tr(C_norm L)`` the most is deleted.
For a unit-weight edge (i, j) that decrease is ``C_ii + C_jj - 2 C_ij``.
"""

from __future__ import annotations

import numpy as np


def normalized_covariance(X: np.ndarray) -> np.ndarray:
    """Sample covariance of the rows of ``X`` scaled to unit diagonal.

    Zero-variance rows get zero off-diagonal entries and a diagonal of 1.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError("normalized_covariance needs an F x K matrix with K >= 2")
    Xc = X - X.mean(axis=1, keepdims=True)
    C = Xc @ Xc.T / X.shape[1]
    d = np.diag(C).copy()
    live = d > 0
    scale = np.where(live, 1.0 / np.sqrt(np.where(live, d, 1.0)), 0.0)
    C = C * scale[:, None] * scale[None, :]
    C = (C + C.T) / 2
    np.fill_diagonal(C, 1.0)
    return np.clip(C, -1.0, 1.0)


def laplacian(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.diag(A.sum(axis=1)) - A


def smoothness_value(A: np.ndarray, C_norm: np.ndarray) -> float:
    """``tr(C_norm (D - A))`` for a symmetric adjacency ``A``."""
    A = np.asarray(A, dtype=float)
    C_norm = np.asarray(C_norm, dtype=float)
    if A.shape != C_norm.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {C_norm.shape}")
    if not np.allclose(A, A.T):
        raise ValueError("adjacency must be symmetric")
    return float(np.sum(C_norm * laplacian(A).T))


def greedy_graph(C_norm: np.ndarray, target_edges: int, return_trace: bool = False):
    """Prune the complete graph down to ``target_edges`` edges.

    Ties between equally good removals go to the lowest ``(i, j)``.  With
    ``return_trace`` the removed edges are returned in order as well.
    """
    C = np.asarray(C_norm, dtype=float)
    F = C.shape[0]
    max_edges = F * (F - 1) // 2
    if not 0 <= target_edges <= max_edges:
        raise ValueError(f"target_edges must lie in [0, {max_edges}]")
    iu, ju = np.triu_indices(F, k=1)
    gain = C[iu, iu] + C[ju, ju] - 2.0 * C[iu, ju]
    alive = np.ones(iu.size, dtype=bool)
    removed = []
    for _ in range(max_edges - target_edges):
        cand = np.where(alive, gain, -np.inf)
        # argmax returns the first maximum, i.e. the lexicographically lowest pair
        e = int(np.argmax(cand))
        alive[e] = False
        removed.append((int(iu[e]), int(ju[e])))
    A = np.zeros((F, F))
    A[iu[alive], ju[alive]] = 1.0
    A = A + A.T
    if return_trace:
        return A, removed
    return A
