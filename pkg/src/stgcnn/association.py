"""Pairwise association between heterogeneous features.

Pearson for continuous/continuous, phi for binary/binary and point-biserial
for mixed pairs.  Degenerate inputs (a constant vector, an empty binary
class) carry no evidence of association and map to 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_model import FeatureKind


@dataclass(frozen=True, eq=False)
class AssociationMatrix:
    W: np.ndarray
    method: str = "correlation"
    t: int | str = "static"

    def to_json(self) -> dict:
        return {"method": self.method, "t": self.t, "F": int(self.W.shape[0]), "W": self.W.tolist()}


def _pair(z1, z2) -> tuple[np.ndarray, np.ndarray]:
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z1.shape != z2.shape or z1.ndim != 1:
        raise ValueError(f"vectors must be 1-D of equal length, got {z1.shape} and {z2.shape}")
    return z1, z2


def _check_binary(z: np.ndarray, name: str):
    if not np.isin(z, (0.0, 1.0)).all():
        raise ValueError(f"{name} must be binary (0/1)")


def pearson(z1, z2) -> float:
    z1, z2 = _pair(z1, z2)
    if z1.size < 2:
        raise ValueError("pearson needs at least 2 observations")
    a = z1 - z1.mean()
    b = z2 - z2.mean()
    saa, sbb = a @ a, b @ b
    if saa == 0.0 or sbb == 0.0:
        return 0.0
    return float(np.clip((a @ b) / np.sqrt(saa * sbb), -1.0, 1.0))


def phi(z1, z2) -> float:
    z1, z2 = _pair(z1, z2)
    _check_binary(z1, "z1")
    _check_binary(z2, "z2")
    n11 = float(np.sum((z1 == 1) & (z2 == 1)))
    n00 = float(np.sum((z1 == 0) & (z2 == 0)))
    n10 = float(np.sum((z1 == 1) & (z2 == 0)))
    n01 = float(np.sum((z1 == 0) & (z2 == 1)))
    den = (n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)
    if den == 0.0:
        return 0.0
    return float(np.clip((n11 * n00 - n10 * n01) / np.sqrt(den), -1.0, 1.0))


def point_biserial(z1, z2) -> float:
    """Point-biserial coefficient of a real vector ``z1`` against binary ``z2``.

    Uses the population standard deviation of ``z1`` and ``n1*n0`` in the
    radicand.
    """
    z1, z2 = _pair(z1, z2)
    _check_binary(z2, "z2")
    ones = z2 == 1
    n1 = float(ones.sum())
    n0 = float(z2.size - n1)
    s = z1.std()
    if s == 0.0 or n1 == 0.0 or n0 == 0.0:
        return 0.0
    diff = z1[ones].mean() - z1[~ones].mean()
    return float(np.clip(diff / s * np.sqrt(n1 * n0 / (n1 + n0) ** 2), -1.0, 1.0))


def coefficient(z1, z2, k1: FeatureKind, k2: FeatureKind) -> float:
    """Dispatch on the kind pair."""
    b1, b2 = k1 is FeatureKind.BINARY, k2 is FeatureKind.BINARY
    if b1 and b2:
        return phi(z1, z2)
    if not b1 and not b2:
        return pearson(z1, z2)
    if b1:
        return point_biserial(z2, z1)
    return point_biserial(z1, z2)


def association_matrix(
    X: np.ndarray, kinds: Sequence[FeatureKind], t: int | str = "static"
) -> AssociationMatrix:
    X = np.asarray(X, dtype=float)
    F, K = X.shape
    if len(kinds) != F:
        raise ValueError(f"{len(kinds)} kinds given for {F} features")
    if K < 2:
        raise ValueError("association_matrix needs K >= 2 columns")
    W = np.zeros((F, F))
    for i in range(F):
        for j in range(i + 1, F):
            try:
                W[i, j] = W[j, i] = coefficient(X[i], X[j], kinds[i], kinds[j])
            except ValueError as exc:
                raise ValueError(f"features ({i}, {j}): {exc}") from None
    return AssociationMatrix(W, "correlation", t)


def threshold_adjacency(W, eta: float) -> np.ndarray:
    """Keep ``|W_ij|`` where it exceeds ``eta``; everything else becomes 0."""
    if isinstance(W, AssociationMatrix):
        W = W.W
    mag = np.abs(np.asarray(W, dtype=float))
    A = np.where(mag > eta, mag, 0.0)
    np.fill_diagonal(A, 0.0)
    return A
