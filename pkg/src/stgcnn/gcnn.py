"""Graph convolutional networks over a spatio-temporal operator.

Two layer types share one code path.  Every layer computes

    H_out = LeakyReLU( sum_k S_k @ H @ W_k + 1 b )

with the filter bank ``S = [A_hat]`` for GCNN-1 and ``S = [I, A_hat, ...,
A_hat^(K-1)]`` for GCNN-2.  The network maps the zero-padded ``FT`` input
signal to one output signal ``h`` and a sigmoid head ``sigmoid(w_o . h + b_o)``.

Gradients are hand-derived (reverse mode through the layers above) and the
optimiser is mini-batch SGD with ``lr / (1 + decay * epoch)`` scheduling.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .data_model import Dataset, PatientRecord, SplitPlan, vectorize_dataset, vectorize_zeropad
from .metrics import roc_auc
from .st_graph import adjacency_power

logger = logging.getLogger(__name__)

BCE_EPS = 1e-7

# Hyperparameter grid explored for the clinical cohort.
FULL_GRID = {
    "dropout": [0.0, 0.15, 0.3],
    "learning_rate": [1e-3, 1e-2, 5e-2, 0.1],
    "lr_decay": [0.0, 1e-5, 1e-4, 1e-3, 1e-2],
    "hidden": [4, 8, 16, 32, 64],
    "layers": [1, 2, 3, 4, 5, 6],
    "poly_order": [2, 3],
}


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "gcnn2"
    layers: int = 2
    hidden: int = 16
    poly_order: int = 2
    leaky_alpha: float = 0.01
    dropout: float = 0.0
    learning_rate: float = 0.05
    lr_decay: float = 0.0
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("gcnn1", "gcnn2"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.layers < 1 or self.hidden < 1:
            raise ValueError("layers and hidden must be >= 1")
        if self.variant == "gcnn2" and self.poly_order < 1:
            raise ValueError("poly_order must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    @property
    def widths(self) -> list[int]:
        return [1] + [self.hidden] * (self.layers - 1) + [1]

    @property
    def taps(self) -> int:
        return self.poly_order if self.variant == "gcnn2" else 1

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


@dataclass(eq=False)
class ModelParams:
    weights: list[np.ndarray]  # layer l: (taps, U_l, U_{l+1})
    biases: list[np.ndarray]  # layer l: (U_{l+1},)
    w_out: np.ndarray  # (FT,)
    b_out: float = 0.0

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases, self.w_out]

    def copy(self) -> "ModelParams":
        return ModelParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.w_out.copy(), float(self.b_out)
        )

    def to_json(self) -> dict:
        def pack(a):
            return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}

        return {
            "weights": [pack(w) for w in self.weights],
            "biases": [pack(b) for b in self.biases],
            "w_out": pack(self.w_out),
            "b_out": float(self.b_out),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelParams":
        def unpack(d):
            return np.array(d["data"], dtype=float).reshape(d["shape"])

        return cls(
            [unpack(w) for w in obj["weights"]],
            [unpack(b) for b in obj["biases"]],
            unpack(obj["w_out"]),
            float(obj["b_out"]),
        )


@dataclass(eq=False)
class ForwardTrace:
    inputs: list[np.ndarray]  # layer inputs (after dropout), (B, N, U_l)
    filtered: list[list[np.ndarray]]  # S_k @ input per layer and tap
    pre: list[np.ndarray]  # pre-activations (B, N, U_{l+1})
    outputs: list[np.ndarray]  # post-activation (B, N, U_{l+1})
    masks: list[np.ndarray | None] = field(default_factory=list)
    h: np.ndarray | None = None  # (B, N)
    logit: np.ndarray | None = None  # (B,)
    y_hat: np.ndarray | None = None  # (B,)


@dataclass(eq=False)
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    w_out: np.ndarray
    b_out: float


def leaky_relu(h, alpha: float = 0.01):
    h = np.asarray(h, dtype=float)
    return np.where(h > 0, h, alpha * h)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dropout_apply(H: np.ndarray, pi: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Zero each entry independently with probability ``pi`` (no rescaling)."""
    if not 0 <= pi < 1:
        raise ValueError("dropout rate must lie in [0, 1)")
    rng = np.random.default_rng(rng)
    mask = (rng.random(np.shape(H)) >= pi).astype(float)
    return np.asarray(H) * mask, mask


def filter_bank(config: ModelConfig, A_hat: np.ndarray) -> list[np.ndarray]:
    A_hat = np.asarray(A_hat, dtype=float)
    if config.variant == "gcnn1":
        return [A_hat]
    return [adjacency_power(A_hat, k) for k in range(config.poly_order)]


def _layer(H, bank, W, b, alpha):
    filtered = [S @ H for S in bank]
    Z = sum(F_k @ W[k] for k, F_k in enumerate(filtered)) + b
    return filtered, Z, leaky_relu(Z, alpha)


def gcnn1_layer(H, A_hat, W, b, alpha: float = 0.01) -> np.ndarray:
    """``LeakyReLU(A_hat H W + 1 b)``."""
    W = np.asarray(W, dtype=float)
    return _layer(np.asarray(H, dtype=float), [np.asarray(A_hat, dtype=float)], W[None], np.asarray(b), alpha)[2]


def gcnn2_layer(H, A_hat_powers: Sequence[np.ndarray], W_list, b, alpha: float = 0.01) -> np.ndarray:
    """``LeakyReLU(sum_k A_hat^k H W_k + 1 b)``; ``A_hat_powers[k]`` is the k-th power."""
    W = np.stack([np.asarray(w, dtype=float) for w in W_list])
    if len(A_hat_powers) != W.shape[0]:
        raise ValueError("need one weight matrix per graph power")
    return _layer(np.asarray(H, dtype=float), list(A_hat_powers), W, np.asarray(b), alpha)[2]


def init_params(config: ModelConfig, num_nodes: int, rng=None) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(config.seed if rng is None else rng)
    U = config.widths
    weights, biases = [], []
    for l in range(config.layers):
        lim = math.sqrt(6.0 / (U[l] + U[l + 1]))
        weights.append(rng.uniform(-lim, lim, size=(config.taps, U[l], U[l + 1])))
        biases.append(np.zeros(U[l + 1]))
    lim = math.sqrt(6.0 / (num_nodes + 1))
    return ModelParams(weights, biases, rng.uniform(-lim, lim, size=num_nodes), 0.0)


def _check(params: ModelParams, config: ModelConfig, num_nodes: int):
    U = config.widths
    if len(params.weights) != config.layers or len(params.biases) != config.layers:
        raise ValueError("parameter depth does not match config.layers")
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        if W.shape != (config.taps, U[l], U[l + 1]) or b.shape != (U[l + 1],):
            raise ValueError(f"layer {l}: parameter shapes {W.shape}, {b.shape} do not match config")
    if params.w_out.shape != (num_nodes,):
        raise ValueError(f"head weight has shape {params.w_out.shape}, expected ({num_nodes},)")


def forward(
    params: ModelParams,
    config: ModelConfig,
    A_hat: np.ndarray,
    x: np.ndarray,
    train: bool = False,
    rng=None,
    masks: Sequence[np.ndarray | None] | None = None,
    bank: Sequence[np.ndarray] | None = None,
) -> ForwardTrace:
    """Run the network on one signal ``(N,)`` or a batch ``(B, N)``.

    In training mode dropout masks are drawn from ``rng`` between hidden
    layers, unless ``masks`` supplies them (used to replay a pass exactly).
    """
    x = np.asarray(x, dtype=float)
    X = x[None, :] if x.ndim == 1 else x
    N = X.shape[1]
    _check(params, config, N)
    if bank is None:
        bank = filter_bank(config, A_hat)
    drop = train and (config.dropout > 0 or masks is not None)
    if drop and masks is None:
        rng = np.random.default_rng(rng)

    H = X[:, :, None]
    trace = ForwardTrace([], [], [], [], [])
    for l in range(config.layers):
        trace.inputs.append(H)
        filtered, Z, H = _layer(H, bank, params.weights[l], params.biases[l], config.leaky_alpha)
        trace.filtered.append(filtered)
        trace.pre.append(Z)
        trace.outputs.append(H)
        mask = None
        if drop and l < config.layers - 1:
            if masks is not None:
                mask = masks[l]
            else:
                mask = (rng.random(H.shape) >= config.dropout).astype(float)
            if mask is not None:
                H = H * mask
        trace.masks.append(mask)
    trace.h = H[:, :, 0]
    trace.logit = trace.h @ params.w_out + params.b_out
    trace.y_hat = sigmoid(trace.logit)
    return trace


def loss_bce(y_hat, y):
    """Binary cross-entropy with ``y_hat`` clamped to ``[eps, 1 - eps]``."""
    p = np.clip(np.asarray(y_hat, dtype=float), BCE_EPS, 1 - BCE_EPS)
    y = np.asarray(y, dtype=float)
    out = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    return float(out) if out.ndim == 0 else out


def backward(trace: ForwardTrace, params: ModelParams, config: ModelConfig, A_hat, y, bank=None) -> Gradients:
    """Gradient of the summed BCE loss over the traced batch."""
    if trace is None or trace.y_hat is None:
        raise ValueError("backward needs a completed forward trace")
    if bank is None:
        bank = filter_bank(config, A_hat)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    dlogit = trace.y_hat - y  # (B,)
    g_wout = dlogit @ trace.h
    g_bout = float(dlogit.sum())
    dH = (dlogit[:, None] * params.w_out[None, :])[:, :, None]

    gW = [None] * config.layers
    gb = [None] * config.layers
    for l in reversed(range(config.layers)):
        if trace.masks[l] is not None:
            dH = dH * trace.masks[l]
        dZ = dH * np.where(trace.pre[l] > 0, 1.0, config.leaky_alpha)
        W = params.weights[l]
        gW[l] = np.stack([np.einsum("bnu,bnv->uv", Fk, dZ) for Fk in trace.filtered[l]])
        gb[l] = dZ.sum(axis=(0, 1))
        if l > 0:
            dH = sum(S.T @ (dZ @ W[k].T) for k, S in enumerate(bank))
    return Gradients(gW, gb, g_wout, g_bout)


def predict_proba(params: ModelParams, config: ModelConfig, A_hat, X: np.ndarray, bank=None) -> np.ndarray:
    return forward(params, config, A_hat, X, train=False, bank=bank).y_hat


def predict(params: ModelParams, config: ModelConfig, A_hat, record: PatientRecord) -> tuple[float, int]:
    y_hat = float(predict_proba(params, config, A_hat, vectorize_zeropad(record))[0])
    return y_hat, int(y_hat >= 0.5)


def _sgd_step(params: ModelParams, grads: Gradients, lr: float):
    for W, g in zip(params.weights, grads.weights):
        W -= lr * g
    for b, g in zip(params.biases, grads.biases):
        b -= lr * g
    params.w_out -= lr * grads.w_out
    params.b_out -= lr * grads.b_out


def fit(
    X: np.ndarray,
    y: np.ndarray,
    config: ModelConfig,
    A_hat: np.ndarray,
    rng_seed=None,
    val: tuple[np.ndarray, np.ndarray] | None = None,
    params: ModelParams | None = None,
) -> tuple[ModelParams, list[dict]]:
    """Mini-batch SGD on vectorised inputs ``X`` (``P x N``) and labels ``y``.

    Returns the trained parameters and one log row per epoch.
    """
    seed = config.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    N = X.shape[1]
    params = init_params(config, N, rng) if params is None else params.copy()
    bank = filter_bank(config, A_hat)
    y = np.asarray(y, dtype=float)
    log = []
    for epoch in range(config.epochs):
        lr = config.learning_rate / (1.0 + config.lr_decay * epoch)
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            trace = forward(params, config, A_hat, X[idx], train=True, rng=rng, bank=bank)
            batch_loss = float(np.sum(loss_bce(trace.y_hat, y[idx])))
            if not np.isfinite(batch_loss) or not np.all(np.isfinite(trace.logit)):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} (lr={lr:g}, config={config})")
            total += batch_loss
            grads = backward(trace, params, config, A_hat, y[idx], bank=bank)
            _sgd_step(params, grads, lr / len(idx))
        row = {"epoch": epoch, "train_loss": total / len(X)}
        if val is not None:
            Xv, yv = val
            row["val_auc"] = _safe_auc(predict_proba(params, config, A_hat, Xv, bank=bank), yv)
        log.append(row)
    return params, log


def _safe_auc(scores, labels) -> float:
    labels = np.asarray(labels)
    if labels.min() == labels.max():
        return float("nan")
    return roc_auc(scores, labels)


def expand_grid(base: ModelConfig, grid: dict[str, Iterable] | None) -> list[ModelConfig]:
    """Cartesian product of ``grid`` values applied on top of ``base``."""
    if not grid:
        return [base]
    keys = sorted(grid)
    configs = []
    for values in itertools.product(*(list(grid[k]) for k in keys)):
        cfg = replace(base, **dict(zip(keys, values)))
        if cfg not in configs:
            configs.append(cfg)
    return configs


@dataclass(eq=False)
class TrainResult:
    params: ModelParams
    config: ModelConfig
    log: list[dict]
    cv_scores: list[float]


def train(
    dataset: Dataset,
    split: SplitPlan,
    A_hat: np.ndarray,
    configs: ModelConfig | Sequence[ModelConfig],
) -> TrainResult:
    """Cross-validated selection over ``configs`` followed by a refit.

    Each candidate is trained on every fold and scored by mean validation
    ROC-AUC (evaluation mode).  The best candidate (first on ties) is refit on
    the whole balanced training set.
    """
    if isinstance(configs, ModelConfig):
        configs = [configs]
    X_all = vectorize_dataset(dataset)
    index = {pid: i for i, pid in enumerate(dataset.ids)}
    labels = dataset.labels.astype(float)

    def rows(ids):
        idx = [index[i] for i in ids]
        return X_all[idx], labels[idx]

    log, scores = [], []
    for ci, cfg in enumerate(configs):
        fold_scores = []
        for k, (tr_ids, va_ids) in enumerate(split.folds):
            Xt, yt = rows(tr_ids)
            Xv, yv = rows(va_ids)
            fold_params, fold_log = fit(Xt, yt, cfg, A_hat, rng_seed=(cfg.seed, k), val=(Xv, yv))
            for r in fold_log:
                log.append({"config": ci, "fold": k, **r})
            fold_scores.append(_safe_auc(predict_proba(fold_params, cfg, A_hat, Xv), yv))
        mean = float(np.nanmean(fold_scores)) if not np.all(np.isnan(fold_scores)) else float("nan")
        scores.append(mean)
        logger.info("config %d mean validation AUC %.4f", ci, mean)

    finite = [s if np.isfinite(s) else -np.inf for s in scores]
    best = int(np.argmax(finite))
    cfg = configs[best]
    Xb, yb = rows(split.balanced_ids)
    params, refit_log = fit(Xb, yb, cfg, A_hat, rng_seed=(cfg.seed, len(split.folds)))
    for r in refit_log:
        log.append({"config": best, "fold": "refit", **r})
    return TrainResult(params, cfg, log, scores)
