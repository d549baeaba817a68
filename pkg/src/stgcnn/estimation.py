"""Feature-graph estimation for both representations.

STG needs one graph per time step (estimated on the masked slice of that
step); CPG needs a single static graph (estimated on every observed column,
or with DTW over the full series for ``hgd-dtw``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .association import association_matrix, threshold_adjacency
from .data_model import Dataset, fill_values, flatten_all, mask_time_slice
from .hgd_dtw import HgdConfig, dtw_graph_static, exp_weight, hgd_distances
from .smoothness import greedy_graph, normalized_covariance
from .st_graph import STAdjacency, build_cpg, build_stg, edge_density, edge_entropy

METHODS = ("correlation", "smoothness", "hgd", "hgd-dtw")
REPRESENTATIONS = ("stg", "cpg")


class ConfigError(ValueError):
    """Incompatible estimation options."""


@dataclass(frozen=True, eq=False)
class FeatureGraph:
    A: np.ndarray
    method: str
    t: int | str  # step index or "static"
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "t": self.t,
            "F": int(self.A.shape[0]),
            "config": self.params,
            "W": self.A.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureGraph":
        return cls(np.array(obj["W"], dtype=float), obj["method"], obj["t"], obj.get("config", {}))

    def metrics(self) -> dict:
        has_edges = bool(np.any(self.A != 0))
        return {
            "t": self.t,
            "edge_density": edge_density(self.A),
            "edge_entropy": edge_entropy(self.A) if has_edges else 0.0,
        }


def check_compatibility(method: str, representation: str):
    if method not in METHODS:
        raise ConfigError(f"unknown graph method {method!r}; choose from {METHODS}")
    if representation not in REPRESENTATIONS:
        raise ConfigError(f"unknown representation {representation!r}; choose from {REPRESENTATIONS}")
    if method == "hgd-dtw" and representation == "stg":
        raise ConfigError("hgd-dtw learns a single static graph and is only valid with repr=cpg")


def _graph_from_columns(X: np.ndarray, kinds, method: str, threshold: float, hgd: HgdConfig, target_edges):
    if method == "correlation":
        return threshold_adjacency(association_matrix(X, kinds), threshold)
    if method == "smoothness":
        if target_edges is None:
            corr = threshold_adjacency(association_matrix(X, kinds), threshold)
            target = int(np.count_nonzero(np.triu(corr, k=1)))
        else:
            target = int(target_edges)
        return greedy_graph(normalized_covariance(X), target)
    if method == "hgd":
        W = exp_weight(hgd_distances(X, kinds), hgd.beta)
        A = np.where(W > threshold, W, 0.0)
        np.fill_diagonal(A, 0.0)
        return A
    raise ConfigError(f"method {method!r} has no column-wise estimator")


def estimate_graphs(
    dataset: Dataset,
    method: str,
    representation: str,
    threshold: float = 0.975,
    beta: float = 1.0,
    target_edges: int | None = None,
) -> list[FeatureGraph]:
    """Feature graphs learned from ``dataset`` (pass training patients only).

    Returns ``T`` graphs for ``stg`` and a single static graph for ``cpg``.
    ``target_edges`` only affects the smoothness method; by default it matches
    the correlation graph at the same threshold.
    """
    check_compatibility(method, representation)
    hgd_cfg = HgdConfig(beta=beta, threshold=threshold)
    kinds = dataset.schema.feature_kinds
    fill = fill_values(dataset)
    params = {"threshold": threshold}
    if method in ("hgd", "hgd-dtw"):
        params["beta"] = beta
    if method == "smoothness" and target_edges is not None:
        params["target_edges"] = int(target_edges)

    if representation == "stg":
        graphs = []
        for t in range(dataset.schema.num_steps):
            sl = mask_time_slice(dataset, t, fill)
            if sl.values.shape[1] < 2:
                raise ValueError(f"{method} at step {t}: fewer than two observed patients")
            try:
                A = _graph_from_columns(sl.values, kinds, method, threshold, hgd_cfg, target_edges)
            except ValueError as exc:
                raise ValueError(f"{method} at step {t}: {exc}") from None
            graphs.append(FeatureGraph(A, method, t, params))
        return graphs

    if method == "hgd-dtw":
        A = dtw_graph_static(dataset, hgd_cfg, fill)
    else:
        try:
            A = _graph_from_columns(flatten_all(dataset, fill), kinds, method, threshold, hgd_cfg, target_edges)
        except ValueError as exc:
            raise ValueError(f"{method} (static): {exc}") from None
    return [FeatureGraph(A, method, "static", params)]


def assemble(graphs: list[FeatureGraph], representation: str, T: int) -> STAdjacency:
    if representation == "stg":
        if len(graphs) != T:
            raise ConfigError(f"stg needs {T} per-step graphs, got {len(graphs)}")
        return build_stg([g.A for g in graphs])
    if len(graphs) != 1:
        raise ConfigError(f"cpg needs one static graph, got {len(graphs)}")
    return build_cpg(graphs[0].A, T)
