"""Dataset abstraction for irregular, heterogeneous multivariate time series.

Each patient carries an ``F x T`` grid (rows are features, columns are time
steps) where missing cells are stored as NaN.  The views defined here are what
every graph estimator and the GCNN consume:

* :func:`vectorize_zeropad` -- time-major ``F*T`` input vector for the network.
* :func:`mask_time_slice` -- ``F x P_t`` matrix of patients observed at step t.
* :func:`flatten_all` -- ``F x K`` matrix of every observed (t, p) column.
* :func:`feature_slice` -- ``P x T`` series of one feature.
* :func:`make_split` -- stratified train/test split with undersampling and folds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised when a dataset file or record violates the schema."""


class FeatureKind(str, Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class DatasetSchema:
    feature_names: tuple[str, ...]
    feature_kinds: tuple[FeatureKind, ...]
    num_steps: int

    def __post_init__(self):
        if len(self.feature_names) != len(self.feature_kinds):
            raise DatasetError("feature_names and feature_kinds differ in length")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DatasetError("duplicate feature names")
        if self.num_features < 1 or self.num_steps < 1:
            raise DatasetError("F and T must be positive")

    @property
    def num_features(self) -> int:
        return len(self.feature_names)

    @property
    def binary_mask(self) -> np.ndarray:
        return np.array([k is FeatureKind.BINARY for k in self.feature_kinds])


@dataclass(frozen=True, eq=False)
class PatientRecord:
    id: str
    grid: np.ndarray  # F x T, NaN = missing
    label: int


@dataclass(frozen=True, eq=False)
class MaskedSlice:
    values: np.ndarray  # F x P_t
    patient_ids: tuple[str, ...]
    time_index: int


@dataclass(frozen=True)
class SplitPlan:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    balanced_ids: tuple[str, ...]
    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]
    seed: int

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "balanced_ids": list(self.balanced_ids),
            "folds": [{"train": list(a), "validate": list(b)} for a, b in self.folds],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitPlan":
        return cls(
            train_ids=tuple(obj["train_ids"]),
            test_ids=tuple(obj["test_ids"]),
            balanced_ids=tuple(obj["balanced_ids"]),
            folds=tuple((tuple(f["train"]), tuple(f["validate"])) for f in obj["folds"]),
            seed=int(obj["seed"]),
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated cohort.

    ``X`` is stacked as ``P x F x T`` with NaN for missing cells; records are
    exposed through :meth:`record` and :attr:`records` for per-patient access.
    """

    schema: DatasetSchema
    ids: tuple[str, ...]
    X: np.ndarray
    labels: np.ndarray
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        P = len(self.ids)
        if P < 1:
            raise DatasetError("dataset needs at least one patient")
        if len(set(self.ids)) != P:
            raise DatasetError("duplicate patient ids")
        F, T = self.schema.num_features, self.schema.num_steps
        if self.X.shape != (P, F, T):
            raise DatasetError(f"grid stack has shape {self.X.shape}, expected {(P, F, T)}")
        if self.labels.shape != (P,) or not np.isin(self.labels, (0, 1)).all():
            raise DatasetError("labels must be 0/1, one per patient")
        binary = self.X[:, self.schema.binary_mask, :]
        observed = binary[~np.isnan(binary)]
        if not np.isin(observed, (0.0, 1.0)).all():
            raise DatasetError("binary feature carries a value outside {0, 1, null}")
        self.X.setflags(write=False)
        self.labels.setflags(write=False)
        object.__setattr__(self, "_index", {pid: i for i, pid in enumerate(self.ids)})

    @classmethod
    def from_records(cls, schema: DatasetSchema, records: Sequence[PatientRecord]) -> "Dataset":
        F, T = schema.num_features, schema.num_steps
        grids = []
        for r in records:
            g = np.asarray(r.grid, dtype=float)
            if g.shape != (F, T):
                raise DatasetError(f"patient {r.id}: grid shape {g.shape}, expected {(F, T)}")
            grids.append(g)
        X = np.stack(grids) if grids else np.zeros((0, F, T))
        labels = np.array([int(r.label) for r in records], dtype=int)
        return cls(schema, tuple(r.id for r in records), X, labels)

    @property
    def num_patients(self) -> int:
        return len(self.ids)

    def record(self, patient_id: str) -> PatientRecord:
        i = self._index[patient_id]
        return PatientRecord(patient_id, self.X[i], int(self.labels[i]))

    @property
    def records(self) -> list[PatientRecord]:
        return [PatientRecord(pid, self.X[i], int(self.labels[i])) for i, pid in enumerate(self.ids)]

    def subset(self, ids: Sequence[str]) -> "Dataset":
        try:
            idx = [self._index[i] for i in ids]
        except KeyError as exc:
            raise DatasetError(f"unknown patient id {exc.args[0]!r}") from None
        return Dataset(self.schema, tuple(ids), self.X[idx].copy(), self.labels[idx].copy())

    def to_json(self) -> dict:
        return {
            "schema": {
                "F": self.schema.num_features,
                "T": self.schema.num_steps,
                "features": [
                    {"name": n, "kind": k.value}
                    for n, k in zip(self.schema.feature_names, self.schema.feature_kinds)
                ],
            },
            "patients": [
                {
                    "id": pid,
                    "label": int(self.labels[i]),
                    "X": [[None if np.isnan(v) else _plain(v) for v in row] for row in self.X[i]],
                }
                for i, pid in enumerate(self.ids)
            ],
        }


def _plain(v: float):
    f = float(v)
    return int(f) if f.is_integer() and abs(f) < 2**53 else f


def parse_dataset(obj: dict) -> Dataset:
    """Build a :class:`Dataset` from the decoded JSON dataset format."""
    try:
        sch = obj["schema"]
        F, T = int(sch["F"]), int(sch["T"])
        feats = sch["features"]
        names = tuple(str(f["name"]) for f in feats)
        kinds = tuple(FeatureKind(f["kind"]) for f in feats)
        patients = obj["patients"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"malformed dataset document: {exc}") from None
    if len(names) != F:
        raise DatasetError(f"schema declares F={F} but lists {len(names)} features")
    schema = DatasetSchema(names, kinds, T)

    records = []
    for p in patients:
        pid = str(p["id"])
        rows = p["X"]
        if len(rows) != F or any(len(r) != T for r in rows):
            raise DatasetError(f"patient {pid}: grid is not {F}x{T}")
        grid = np.array([[np.nan if v is None else float(v) for v in r] for r in rows], dtype=float)
        label = p["label"]
        if label not in (0, 1):
            raise DatasetError(f"patient {pid}: label must be 0 or 1")
        records.append(PatientRecord(pid, grid, int(label)))
    return Dataset.from_records(schema, records)


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: not valid JSON ({exc})") from None
    return parse_dataset(obj)


def vectorize_zeropad(record: PatientRecord) -> np.ndarray:
    """Time-major vector: entry ``t*F + f`` is ``X[f, t]``, missing cells -> 0."""
    return np.nan_to_num(np.asarray(record.grid, dtype=float).T.reshape(-1), nan=0.0)


def vectorize_dataset(dataset: Dataset) -> np.ndarray:
    """Stack :func:`vectorize_zeropad` over all patients, shape ``P x FT``."""
    P = dataset.num_patients
    return np.nan_to_num(dataset.X.transpose(0, 2, 1).reshape(P, -1), nan=0.0)


def fill_values(dataset: Dataset) -> np.ndarray:
    """Per-feature, per-step imputation values (``F x T``).

    Continuous features use the mean of observed cells at that step, binary
    features the majority value (ties go to 0).  Steps where a feature is never
    observed fall back to the feature's statistic over all steps, then to 0.
    """
    X = dataset.X
    F, T = dataset.schema.num_features, dataset.schema.num_steps
    binary = dataset.schema.binary_mask
    observed = ~np.isnan(X)
    counts = observed.sum(axis=0)  # F x T
    sums = np.where(observed, X, 0.0).sum(axis=0)
    tot_counts = counts.sum(axis=1)
    tot_sums = sums.sum(axis=1)

    out = np.zeros((F, T))
    with np.errstate(invalid="ignore", divide="ignore"):
        step_mean = sums / counts
        overall = np.where(tot_counts > 0, tot_sums / np.maximum(tot_counts, 1), 0.0)
    for f in range(F):
        for t in range(T):
            m = step_mean[f, t] if counts[f, t] > 0 else overall[f]
            out[f, t] = float(m > 0.5) if binary[f] else m
    return out


def _impute_columns(cols: np.ndarray, fill: np.ndarray) -> np.ndarray:
    out = cols.copy()
    miss = np.isnan(out)
    if miss.any():
        out[miss] = np.broadcast_to(fill[:, None], out.shape)[miss]
    return out


def mask_time_slice(dataset: Dataset, t: int, fill: np.ndarray | None = None) -> MaskedSlice:
    """Patients observed at step ``t`` as an ``F x P_t`` matrix.

    Columns without any observation are dropped; residual gaps are completed
    with ``fill[:, t]`` (defaults to :func:`fill_values` of ``dataset``).
    """
    T = dataset.schema.num_steps
    if not 0 <= t < T:
        raise IndexError(f"time index {t} outside [0, {T})")
    cols = dataset.X[:, :, t].T  # F x P
    keep = ~np.isnan(cols).all(axis=0)
    if not keep.any():
        raise DatasetError(f"no patient has data at step {t}")
    if fill is None:
        fill = fill_values(dataset)
    values = _impute_columns(cols[:, keep], fill[:, t])
    ids = tuple(pid for pid, k in zip(dataset.ids, keep) if k)
    return MaskedSlice(values, ids, t)


def flatten_all(dataset: Dataset, fill: np.ndarray | None = None) -> np.ndarray:
    """All observed (t, p) columns as ``F x K``, ordered t-major then patient."""
    if fill is None:
        fill = fill_values(dataset)
    blocks = []
    for t in range(dataset.schema.num_steps):
        cols = dataset.X[:, :, t].T
        keep = ~np.isnan(cols).all(axis=0)
        if keep.any():
            blocks.append(_impute_columns(cols[:, keep], fill[:, t]))
    if not blocks:
        raise DatasetError("dataset has no observed cells")
    return np.concatenate(blocks, axis=1)


def feature_slice(dataset: Dataset, f: int) -> np.ndarray:
    """``P x T`` series of feature ``f``; missing cells stay NaN."""
    F = dataset.schema.num_features
    if not 0 <= f < F:
        raise IndexError(f"feature index {f} outside [0, {F})")
    return dataset.X[:, f, :].copy()


def make_split(dataset: Dataset, test_fraction: float = 0.3, k_folds: int = 5, seed: int = 0) -> SplitPlan:
    """Stratified train/test split, majority undersampling, and K folds.

    The number of test patients per class is ``round(test_fraction * n_class)``
    with exact halves rounded so the positive class keeps the extra patient in
    training.  The undersampled (balanced) training set is partitioned into
    ``k_folds`` stratified validation folds.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    if k_folds < 2:
        raise ValueError("k_folds must be at least 2")
    labels = dataset.labels
    ids = np.array(dataset.ids, dtype=object)
    pos, neg = ids[labels == 1], ids[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both classes must be present to split")

    rng = np.random.default_rng(seed)
    train_parts, test_parts = {}, {}
    for cls, members in ((1, pos), (0, neg)):
        exact = test_fraction * len(members)
        if math.isclose(exact - math.floor(exact), 0.5):
            n_test = math.floor(exact) if cls == 1 else math.ceil(exact)
        else:
            n_test = int(round(exact))
        perm = rng.permutation(members)
        test_parts[cls] = list(perm[:n_test])
        train_parts[cls] = list(perm[n_test:])

    n_min = min(len(train_parts[0]), len(train_parts[1]))
    balanced = {}
    for cls in (1, 0):
        members = train_parts[cls]
        pick = rng.choice(len(members), size=n_min, replace=False)
        balanced[cls] = [members[i] for i in sorted(pick)]
    if 2 * n_min < k_folds:
        raise ValueError(f"balanced training set ({2 * n_min}) smaller than k_folds ({k_folds})")

    fold_of = {}
    for cls in (1, 0):
        perm = rng.permutation(len(balanced[cls]))
        for rank, i in enumerate(perm):
            fold_of[balanced[cls][i]] = rank % k_folds
    order = {pid: i for i, pid in enumerate(dataset.ids)}
    balanced_ids = sorted(balanced[1] + balanced[0], key=order.__getitem__)
    folds = []
    for k in range(k_folds):
        val = tuple(pid for pid in balanced_ids if fold_of[pid] == k)
        tr = tuple(pid for pid in balanced_ids if fold_of[pid] != k)
        folds.append((tr, val))

    train_ids = sorted(train_parts[1] + train_parts[0], key=order.__getitem__)
    test_ids = sorted(test_parts[1] + test_parts[0], key=order.__getitem__)
    return SplitPlan(tuple(train_ids), tuple(test_ids), tuple(balanced_ids), tuple(folds), seed)
