"""ROC-AUC, sensitivity and specificity for soft binary predictions."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

THRESHOLD = 0.5


@dataclass(frozen=True)
class EvalReport:
    roc_auc: float
    sensitivity: float
    specificity: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_pos: int
    n_neg: int

    def to_json(self) -> dict:
        return asdict(self)


def _validate(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if y.min(initial=1) == y.max(initial=0) or s.size == 0:
        raise ValueError("both classes must be present")
    return s, y.astype(int)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    s, y = _validate(scores, labels)
    ranks = rankdata(s)  # average ranks handle ties
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_at_half(scores, labels) -> EvalReport:
    s, y = _validate(scores, labels)
    pred = s >= THRESHOLD
    tp = int(np.sum(pred & (y == 1)))
    fn = int(np.sum(~pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    return EvalReport(
        roc_auc=roc_auc(s, y),
        sensitivity=tp / (tp + fn),
        specificity=tn / (tn + fp),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        n_pos=tp + fn,
        n_neg=tn + fp,
    )


def aggregate_reports(reports) -> dict:
    """Mean and standard deviation of the three rates over repeated runs."""
    out = {}
    for key in ("roc_auc", "sensitivity", "specificity"):
        vals = np.array([getattr(r, key) for r in reports], dtype=float)
        out[key] = {"mean": float(vals.mean()), "std": float(vals.std()), "n": int(vals.size)}
    return out
