"""Seeded synthetic cohorts with a planted class signal."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data_model import Dataset, DatasetSchema, FeatureKind

BINARY_RATE = 0.3


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a synthetic cohort.

    Features ``0 .. F_cont-1`` are continuous and the remaining ``F_bin`` are
    binary.  ``signal_pairs`` lists the (feature, step) cells shifted for
    positive patients.
    """

    P: int = 600
    F_cont: int = 15
    F_bin: int = 5
    T: int = 8
    missing_rate: float = 0.2
    positive_fraction: float = 0.3
    signal_pairs: tuple[tuple[int, int], ...] = ((0, 1), (3, 2), (6, 4), (9, 5), (12, 7))
    signal_strength: float = 3.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "signal_pairs", tuple(tuple(int(v) for v in p) for p in self.signal_pairs))
        if self.P < 1 or self.T < 1 or self.F_cont < 0 or self.F_bin < 0 or self.F < 1:
            raise ValueError("P, T and F must be positive")
        if not 0 <= self.missing_rate < 1:
            raise ValueError("missing_rate must lie in [0, 1)")
        if not 0 < self.positive_fraction < 1:
            raise ValueError("positive_fraction must lie in (0, 1)")
        if self.signal_strength < 0:
            raise ValueError("signal_strength must be nonnegative")
        for f, t in self.signal_pairs:
            if not (0 <= f < self.F and 0 <= t < self.T):
                raise ValueError(f"signal pair {(f, t)} out of bounds")

    @property
    def F(self) -> int:
        return self.F_cont + self.F_bin

    def to_json(self) -> dict:
        d = asdict(self)
        d["signal_pairs"] = [list(p) for p in self.signal_pairs]
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "SynthSpec":
        obj = dict(obj)
        if "signal_pairs" in obj:
            obj["signal_pairs"] = tuple(tuple(p) for p in obj["signal_pairs"])
        return cls(**obj)


def generate(spec: SynthSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    P, F, T = spec.P, spec.F, spec.T
    labels = (rng.random(P) < spec.positive_fraction).astype(int)

    X = np.empty((P, F, T))
    X[:, : spec.F_cont, :] = rng.standard_normal((P, spec.F_cont, T))
    X[:, spec.F_cont :, :] = (rng.random((P, spec.F_bin, T)) < BINARY_RATE).astype(float)

    pos = labels == 1
    flip_prob = 1.0 - np.exp(-spec.signal_strength)
    for f, t in spec.signal_pairs:
        if f < spec.F_cont:
            X[pos, f, t] += spec.signal_strength
        else:
            flip = rng.random(P) < flip_prob
            X[pos & flip, f, t] = 1.0

    if spec.missing_rate > 0:
        X[rng.random((P, F, T)) < spec.missing_rate] = np.nan

    names = tuple(f"cont_{i}" for i in range(spec.F_cont)) + tuple(f"bin_{i}" for i in range(spec.F_bin))
    kinds = (FeatureKind.CONTINUOUS,) * spec.F_cont + (FeatureKind.BINARY,) * spec.F_bin
    schema = DatasetSchema(names, kinds, T)
    width = len(str(P - 1))
    ids = tuple(f"p{i:0{width}d}" for i in range(P))
    return Dataset(schema, ids, X, labels)
