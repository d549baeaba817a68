"""Heterogeneous Gower distance (HGD) and DTW with an HGD step cost.

Distances become edge weights through ``exp(-beta * d**2)`` and weights at or
below the threshold are dropped.

Dynamic ranges ``R_k`` follow Gower: the spread of coordinate ``k`` over all
vectors being compared (every feature row of the slice), widened to cover the
rescaled pair so each term of the mean stays within [0, 1].  Coordinates with
zero range contribute nothing.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .data_model import Dataset, FeatureKind, MaskedSlice, fill_values


@dataclass(frozen=True)
class HgdConfig:
    beta: float = 1.0
    threshold: float = 0.975

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0 <= self.threshold <= 1:
            raise ValueError("threshold must lie in [0, 1]")

    def to_json(self) -> dict:
        return asdict(self)


def rescale_pair(z1, z2, kinds: tuple[FeatureKind, FeatureKind]) -> tuple[np.ndarray, np.ndarray]:
    """Bring two vectors (any shape, same shape) onto a common scale.

    * continuous/continuous: each vector is multiplied by ``max12 / max_i``.
      If a maximum is not positive both vectors are shifted by a common offset
      first and shifted back afterwards.
    * binary/continuous: the binary 1s become the continuous maximum and the
      0s its minimum.
    * binary/binary: unchanged.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z1.shape != z2.shape:
        raise ValueError(f"shape mismatch {z1.shape} vs {z2.shape}")
    b1, b2 = (k is FeatureKind.BINARY for k in kinds)
    if b1 and b2:
        return z1.copy(), z2.copy()
    if b1 or b2:
        zb, zc = (z1, z2) if b1 else (z2, z1)
        mapped = np.where(zb == 1, zc.max(), zc.min())
        return (mapped, zc.copy()) if b1 else (zc.copy(), mapped)

    m1, m2 = z1.max(), z2.max()
    shift = 0.0
    if m1 <= 0 or m2 <= 0:
        lo = min(z1.min(), z2.min())
        span = max(z1.max(), z2.max()) - lo
        shift = 1.0 - lo if span == 0 else span - lo
        m1, m2 = m1 + shift, m2 + shift
    if m1 <= 0 or m2 <= 0:
        raise ValueError("degenerate scale: continuous maximum is not positive")
    m12 = max(m1, m2)
    return (z1 + shift) * (m12 / m1) - shift, (z2 + shift) * (m12 / m2) - shift


def hgd(z1, z2, R) -> float:
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    R = np.asarray(R, dtype=float)
    if z1.shape != z2.shape or z1.shape != R.shape or z1.ndim != 1:
        raise ValueError("z1, z2 and R must be 1-D of equal length")
    if z1.size == 0:
        raise ValueError("empty vectors")
    diff = np.abs(z1 - z2)
    terms = np.divide(diff, R, out=np.zeros_like(diff), where=R > 0)
    return float(terms.mean())


def exp_weight(delta, beta: float):
    """``exp(-beta * delta**2)``; vectorised over ``delta``."""
    return np.exp(-beta * np.square(delta))


def _pair_ranges(lo: np.ndarray, hi: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    lo = np.minimum(lo, np.minimum(a, b))
    hi = np.maximum(hi, np.maximum(a, b))
    return hi - lo


def _threshold_weights(W: np.ndarray, threshold: float) -> np.ndarray:
    A = np.where(W > threshold, W, 0.0)
    np.fill_diagonal(A, 0.0)
    return A


def hgd_distances(X: np.ndarray, kinds: Sequence[FeatureKind]) -> np.ndarray:
    """Pairwise HGD between the rows of an ``F x K`` matrix."""
    X = np.asarray(X, dtype=float)
    F = X.shape[0]
    lo, hi = X.min(axis=0), X.max(axis=0)
    D = np.zeros((F, F))
    for i in range(F):
        for j in range(i + 1, F):
            try:
                a, b = rescale_pair(X[i], X[j], (kinds[i], kinds[j]))
            except ValueError as exc:
                raise ValueError(f"features ({i}, {j}): {exc}") from None
            D[i, j] = D[j, i] = hgd(a, b, _pair_ranges(lo, hi, a, b))
    return D


def hgd_graph_at_t(
    slice_: MaskedSlice | np.ndarray, kinds: Sequence[FeatureKind], config: HgdConfig = HgdConfig()
) -> np.ndarray:
    X = slice_.values if isinstance(slice_, MaskedSlice) else slice_
    W = exp_weight(hgd_distances(X, kinds), config.beta)
    return _threshold_weights(W, config.threshold)


def dtw_hgd(Xi: np.ndarray, Xj: np.ndarray, R: np.ndarray | None = None, return_matrix: bool = False):
    """DTW between two ``P x T`` series with HGD between patient columns.

    ``Xi`` and ``Xj`` are expected to be on a common scale already (see
    :func:`rescale_pair`).  ``R`` holds the per-patient dynamic ranges; by
    default the spread of each patient's values across both series.
    """
    Xi = np.asarray(Xi, dtype=float)
    Xj = np.asarray(Xj, dtype=float)
    if Xi.shape != Xj.shape or Xi.ndim != 2:
        raise ValueError(f"series must be P x T with equal shapes, got {Xi.shape} and {Xj.shape}")
    P, T = Xi.shape
    if P == 0 or T == 0:
        raise ValueError("empty series")
    if R is None:
        R = np.maximum(Xi.max(axis=1), Xj.max(axis=1)) - np.minimum(Xi.min(axis=1), Xj.min(axis=1))
    R = np.asarray(R, dtype=float)
    inv = np.divide(1.0, R, out=np.zeros_like(R), where=R > 0)
    # cost[t, t'] = HGD(Xi[:, t], Xj[:, t'])
    cost = (np.abs(Xi[:, :, None] - Xj[:, None, :]) * inv[:, None, None]).mean(axis=0)

    M = np.full((T + 1, T + 1), np.inf)
    M[0, 0] = 0.0
    for tp in range(1, T + 1):
        for t in range(1, T + 1):
            M[t, tp] = cost[t - 1, tp - 1] + min(M[t - 1, tp - 1], M[t - 1, tp], M[t, tp - 1])
    if return_matrix:
        return float(M[T, T]), M
    return float(M[T, T])


def dtw_distances(dataset: Dataset, fill: np.ndarray | None = None) -> np.ndarray:
    """Pairwise DTW-HGD between the feature slices of ``dataset``.

    Missing cells are completed with ``fill`` (per-feature, per-step values,
    :func:`fill_values` by default) before any distance is evaluated.
    """
    if fill is None:
        fill = fill_values(dataset)
    X = np.where(np.isnan(dataset.X), fill[None, :, :], dataset.X)  # P x F x T
    kinds = dataset.schema.feature_kinds
    F = dataset.schema.num_features
    lo = X.min(axis=(1, 2))
    hi = X.max(axis=(1, 2))
    D = np.zeros((F, F))
    for i in range(F):
        for j in range(i + 1, F):
            try:
                a, b = rescale_pair(X[:, i, :], X[:, j, :], (kinds[i], kinds[j]))
            except ValueError as exc:
                raise ValueError(f"features ({i}, {j}): {exc}") from None
            R = np.maximum(hi, np.maximum(a.max(axis=1), b.max(axis=1))) - np.minimum(
                lo, np.minimum(a.min(axis=1), b.min(axis=1))
            )
            D[i, j] = D[j, i] = dtw_hgd(a, b, R)
    return D


def dtw_graph_static(dataset: Dataset, config: HgdConfig = HgdConfig(), fill: np.ndarray | None = None) -> np.ndarray:
    W = exp_weight(dtw_distances(dataset, fill), config.beta)
    return _threshold_weights(W, config.threshold)
