"""Explainability read-outs of a trained network.

* Importance on real inputs: per (feature, time) node the magnitude of its
  contribution ``|h_n * w_o[n]|`` to the head logit; the top 5% nodes of each
  patient are tallied per class.
* Sensitivity to synthetic inputs: the network is probed with every one-hot
  (Kronecker delta) signal and the head projection ``w_o . h`` is recorded.

Internally nodes are time-major (``n = t*F + f``).  The class-frequency table
is also offered feature-major (``f*T + t``), which groups all steps of one
feature together for plotting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data_model import DatasetSchema, PatientRecord, vectorize_zeropad
from .gcnn import ModelConfig, ModelParams, filter_bank, forward

TOP_FRACTION = 0.05
NEAR_ZERO_FRACTION = 0.05
PARTITIONS = ("large-negative", "positive", "near-zero")


@dataclass(frozen=True, eq=False)
class ImportanceRecord:
    patient_id: str
    scores: np.ndarray
    selected: np.ndarray  # node indices, best first
    label: int


@dataclass(frozen=True, eq=False)
class ClassFrequencyTable:
    counts: dict  # class label -> (N,) counts, time-major
    num_features: int
    num_steps: int
    top_k: int

    def feature_major(self, label: int) -> np.ndarray:
        F, T = self.num_features, self.num_steps
        return self.counts[label].reshape(T, F).T.reshape(-1)


@dataclass(frozen=True, eq=False)
class DeltaSensitivityTable:
    responses: np.ndarray  # (N, N): row n is h for input e_n
    projections: np.ndarray  # (N,)
    partition: tuple[str, ...]
    reference_response: np.ndarray  # h for the all-zero input
    reference_projection: float
    metadata: dict = field(default_factory=dict)


def top_k_size(num_nodes: int, fraction: float = TOP_FRACTION) -> int:
    return max(1, math.ceil(round(fraction * num_nodes, 9)))


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores; ties go to the lower index."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")[:k]


def importance_scores(params: ModelParams, config: ModelConfig, A_hat, X: np.ndarray, bank=None) -> np.ndarray:
    """``|h * w_o|`` for a batch of vectorised inputs, shape ``(B, N)``."""
    trace = forward(params, config, A_hat, X, train=False, bank=bank)
    return np.abs(trace.h * params.w_out[None, :])


def _check_finite(params: ModelParams):
    if not all(np.all(np.isfinite(a)) for a in params.arrays()) or not np.isfinite(params.b_out):
        raise ValueError("model parameters contain non-finite values")


def importance_for_record(
    params: ModelParams, config: ModelConfig, A_hat, record: PatientRecord, fraction: float = TOP_FRACTION
) -> ImportanceRecord:
    _check_finite(params)
    scores = importance_scores(params, config, A_hat, vectorize_zeropad(record))[0]
    return ImportanceRecord(record.id, scores, top_k(scores, top_k_size(scores.size, fraction)), int(record.label))


def importance_for_records(
    params: ModelParams, config: ModelConfig, A_hat, records: Sequence[PatientRecord], fraction: float = TOP_FRACTION
) -> list[ImportanceRecord]:
    """Batched :func:`importance_for_record`."""
    _check_finite(params)
    if not records:
        return []
    X = np.stack([vectorize_zeropad(r) for r in records])
    S = importance_scores(params, config, A_hat, X, bank=filter_bank(config, A_hat))
    k = top_k_size(S.shape[1], fraction)
    return [ImportanceRecord(r.id, s, top_k(s, k), int(r.label)) for r, s in zip(records, S)]


def aggregate_by_class(records: Sequence[ImportanceRecord], num_features: int, num_steps: int) -> ClassFrequencyTable:
    if not records:
        raise ValueError("need at least one importance record")
    N = num_features * num_steps
    counts = {0: np.zeros(N, dtype=int), 1: np.zeros(N, dtype=int)}
    for r in records:
        counts[r.label][r.selected] += 1
    return ClassFrequencyTable(counts, num_features, num_steps, len(records[0].selected))


def delta_sensitivity(
    params: ModelParams, config: ModelConfig, A_hat, near_zero_fraction: float = NEAR_ZERO_FRACTION
) -> DeltaSensitivityTable:
    """Probe the network with every Kronecker delta input.

    Biases stay active; the response to the zero input is returned as a
    reference so it can be subtracted.  A projection ``v`` is ``near-zero``
    when ``|v| < near_zero_fraction * max|v|``.
    """
    N = params.w_out.size
    bank = filter_bank(config, A_hat)
    H = forward(params, config, A_hat, np.eye(N), train=False, bank=bank).h
    ref = forward(params, config, A_hat, np.zeros(N), train=False, bank=bank).h[0]
    proj = H @ params.w_out
    scale = float(np.max(np.abs(proj))) if proj.size else 0.0
    tau = near_zero_fraction * scale
    partition = tuple(
        "near-zero" if (scale == 0 or abs(v) < tau) else ("positive" if v > 0 else "large-negative") for v in proj
    )
    meta = {"near_zero_fraction": near_zero_fraction, "near_zero_threshold": tau, "biases_active": True}
    return DeltaSensitivityTable(H, proj, partition, ref, float(ref @ params.w_out), meta)


def _write(path, header_comment: str | None, columns: Sequence[str], rows):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _node(n: int, F: int) -> tuple[int, int]:
    return n % F, n // F


def write_importance_csv(path, records: Sequence[ImportanceRecord], schema: DatasetSchema, header: str | None = None):
    F = schema.num_features
    rows = []
    for r in records:
        chosen = set(int(i) for i in r.selected)
        for n, s in enumerate(r.scores):
            f, t = _node(n, F)
            rows.append([r.patient_id, schema.feature_names[f], t, repr(float(s)), int(n in chosen)])
    _write(path, header, ["patient", "feature_name", "t", "score", "selected"], rows)


def write_class_frequency_csv(path, table: ClassFrequencyTable, schema: DatasetSchema, header: str | None = None):
    F, T = table.num_features, table.num_steps
    rows = []
    for f in range(F):
        for t in range(T):
            for label in (1, 0):
                rows.append([schema.feature_names[f], t, label, int(table.counts[label][t * F + f])])
    _write(path, header, ["feature_name", "t", "class", "count"], rows)


def write_delta_csv(path, table: DeltaSensitivityTable, schema: DatasetSchema, header: str | None = None):
    F = schema.num_features
    rows = []
    for n, (v, part) in enumerate(zip(table.projections, table.partition)):
        f, t = _node(n, F)
        rows.append([schema.feature_names[f], t, repr(float(v)), part])
    rows.append(["(bias-only)", "", repr(table.reference_projection), "reference"])
    _write(path, header, ["feature_name", "t", "projection", "partition"], rows)
