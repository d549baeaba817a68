"""Spatio-temporal operators over (feature, time) nodes.

Node ``n = t*F + f``.  The STG places one feature graph per step on the block
diagonal and a temporal coupling (identity by default) on the block
superdiagonal; the CPG is the special case of a single static feature graph,
built here as the Kronecker sum of the directed path graph and that graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class STAdjacency:
    A: sp.csr_matrix
    repr: str
    F: int
    T: int

    @property
    def num_nodes(self) -> int:
        return self.F * self.T

    def dense(self) -> np.ndarray:
        return self.A.toarray()

    def edges(self) -> list[list]:
        coo = self.A.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [[int(coo.row[k]), int(coo.col[k]), float(coo.data[k])] for k in order if coo.data[k] != 0]

    def to_json(self) -> dict:
        return {"repr": self.repr, "F": self.F, "T": self.T, "edges": self.edges()}

    @classmethod
    def from_json(cls, obj: dict) -> "STAdjacency":
        F, T = int(obj["F"]), int(obj["T"])
        N = F * T
        edges = obj["edges"]
        if edges:
            rows, cols, vals = zip(*edges)
        else:
            rows, cols, vals = (), (), ()
        A = sp.csr_matrix((np.array(vals, dtype=float), (np.array(rows, dtype=int), np.array(cols, dtype=int))), shape=(N, N))
        return cls(A, obj["repr"], F, T)

    def to_dot(self, feature_names: Sequence[str] | None = None) -> str:
        """Graphviz source with one cluster per time step."""
        names = feature_names or [f"f{f}" for f in range(self.F)]
        lines = ["digraph st {", "  rankdir=LR;"]
        for t in range(self.T):
            lines.append(f"  subgraph cluster_t{t} {{")
            lines.append(f'    label="t={t}";')
            for f in range(self.F):
                lines.append(f'    n{t * self.F + f} [label="{names[f]}"];')
            lines.append("  }")
        for i, j, w in self.edges():
            same_step = i // self.F == j // self.F
            if same_step and i > j:
                continue
            arrow = ' dir=none' if same_step else ''
            lines.append(f'  n{i} -> n{j} [weight={w:.6g}{arrow}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def path_graph(T: int) -> np.ndarray:
    """Directed path: ``A[t, t+1] = 1``."""
    return np.eye(T, k=1)


def _check_feature_graph(A: np.ndarray, F: int | None = None) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"feature graph must be square, got {A.shape}")
    if F is not None and A.shape[0] != F:
        raise ValueError(f"inconsistent feature count: {A.shape[0]} vs {F}")
    if not np.allclose(A, A.T) or np.any(np.diag(A) != 0):
        raise ValueError("feature graph must be symmetric with zero diagonal")
    return A


def build_stg(graphs: Sequence[np.ndarray], coupling: np.ndarray | None = None) -> STAdjacency:
    T = len(graphs)
    if T == 0:
        raise ValueError("need at least one feature graph")
    F = np.asarray(graphs[0]).shape[0]
    blocks = [_check_feature_graph(g, F) for g in graphs]
    link = np.eye(F) if coupling is None else np.asarray(coupling, dtype=float)
    if link.shape != (F, F):
        raise ValueError(f"temporal coupling must be {F}x{F}")
    grid = [[None] * T for _ in range(T)]
    for t in range(T):
        grid[t][t] = sp.csr_matrix(blocks[t])
        if t + 1 < T:
            grid[t][t + 1] = sp.csr_matrix(link)
    A = sp.bmat(grid, format="csr") if T > 1 else sp.csr_matrix(blocks[0])
    A.eliminate_zeros()
    return STAdjacency(A.tocsr(), "stg", F, T)


def build_cpg(A: np.ndarray, T: int) -> STAdjacency:
    """Kronecker sum ``A_dp (+) A = A_dp kron I_F + I_T kron A``."""
    A = _check_feature_graph(A)
    F = A.shape[0]
    out = sp.kron(sp.csr_matrix(path_graph(T)), sp.identity(F)) + sp.kron(sp.identity(T), sp.csr_matrix(A))
    out = sp.csr_matrix(out)
    out.eliminate_zeros()
    out.sort_indices()
    return STAdjacency(out, "cpg", F, T)


def normalize_adjacency(A) -> np.ndarray:
    """Self-loop normalisation ``D^-1/2 (A + I) D^-1/2`` with row-sum degrees."""
    if isinstance(A, STAdjacency):
        A = A.A
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if np.any(A < 0):
        raise ValueError("adjacency must be nonnegative")
    Ai = A + np.eye(A.shape[0])
    d = 1.0 / np.sqrt(Ai.sum(axis=1))
    return Ai * d[:, None] * d[None, :]


def adjacency_power(A_hat: np.ndarray, k: int) -> np.ndarray:
    if k < 0:
        raise ValueError("power must be nonnegative")
    return np.linalg.matrix_power(np.asarray(A_hat, dtype=float), k)


def _offdiag_nonzero(A) -> np.ndarray:
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    nz = A != 0
    np.fill_diagonal(nz, False)
    return nz


def edge_density(A, directed: bool = False) -> float:
    nz = _offdiag_nonzero(A)
    N = nz.shape[0]
    if N < 2:
        return 0.0
    if directed:
        return float(nz.sum() / (N * (N - 1)))
    undirected = np.triu(nz | nz.T, k=1)
    return float(2 * undirected.sum() / (N * (N - 1)))


def edge_entropy(A) -> float:
    """Entropy of the normalised weighted-degree distribution."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    deg = np.abs(A).sum(axis=1)
    total = deg.sum()
    if total <= 0:
        raise ValueError("edge entropy undefined for a graph without edges")
    d = deg / total
    d = d[d > 0]
    return float(-(d * np.log(d)).sum())
