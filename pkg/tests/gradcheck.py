"""Finite-difference check of hand-derived GCNN gradients."""

import numpy as np
from oracles import central_difference

from stgcnn.gcnn import ModelConfig, backward, forward, init_params, loss_bce
from stgcnn.st_graph import normalize_adjacency

ABS_FLOOR = 1e-6


def random_instance(rng, variant, layers, K, F=3, T=4, batch=3, dropout=0.0, hidden=3):
    N = F * T
    A = np.triu((rng.random((N, N)) < 0.3) * rng.random((N, N)), 1)
    A_hat = normalize_adjacency(A + A.T)
    cfg = ModelConfig(variant=variant, layers=layers, hidden=hidden, poly_order=K, dropout=dropout, leaky_alpha=0.1)
    params = init_params(cfg, N, rng)
    for b in params.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    params.b_out = float(rng.normal(scale=0.1))
    X = rng.normal(size=(batch, N))
    y = rng.integers(0, 2, size=batch).astype(float)
    return cfg, params, A_hat, X, y


def max_relative_error(cfg, params, A_hat, X, y, rng=None, h=1e-5):
    """Largest relative gap between analytic and numeric gradients."""
    trace = forward(params, cfg, A_hat, X, train=True, rng=rng)
    masks = trace.masks
    grads = backward(trace, params, cfg, A_hat, y)

    def loss():
        t = forward(params, cfg, A_hat, X, train=True, masks=masks)
        return float(np.sum(loss_bce(t.y_hat, y)))

    pairs = list(zip(params.weights, grads.weights)) + list(zip(params.biases, grads.biases))
    pairs.append((params.w_out, grads.w_out))
    worst = 0.0
    for p, g in pairs:
        num = central_difference(loss, p, h)
        den = np.maximum(np.maximum(np.abs(num), np.abs(g)), ABS_FLOOR)
        worst = max(worst, float(np.max(np.abs(num - g) / den)))

    b_out = np.array([params.b_out])

    def loss_b():
        params.b_out = float(b_out[0])
        return loss()

    num_b = central_difference(loss_b, b_out, h)[0]
    params.b_out = float(b_out[0])
    worst = max(worst, abs(num_b - grads.b_out) / max(abs(num_b), abs(grads.b_out), ABS_FLOOR))
    return worst
