"""Dense multilayer perceptrons with explicit reverse-mode gradients.

Layer ``k`` computes ``x @ W_k + b_k``; every layer but the last is followed
by a rectified linear unit.
"""

from __future__ import annotations

import numpy as np


def init_mlp(rng: np.random.Generator, widths, dtype=np.float32) -> list[tuple[np.ndarray, np.ndarray]]:
    """Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
        layers.append((W, np.zeros(fan_out, dtype=dtype)))
    return layers


def mlp_forward(layers, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Returns the output and the per-layer inputs needed by :func:`mlp_backward`."""
    cache = []
    h = x
    last = len(layers) - 1
    for k, (W, b) in enumerate(layers):
        cache.append(h)
        h = h @ W
        h += b
        if k < last:
            np.maximum(h, 0, out=h)
    return h, cache


def mlp_apply(layers, x: np.ndarray) -> np.ndarray:
    h = x
    last = len(layers) - 1
    for k, (W, b) in enumerate(layers):
        h = h @ W
        h += b
        if k < last:
            np.maximum(h, 0, out=h)
    return h


def mlp_backward(layers, cache, dout: np.ndarray, grads, need_dx: bool = True):
    """Accumulate parameter gradients into ``grads`` (list of [dW, db]); return d input.

    The input of layer k+1 is the ReLU output of layer k, so ``cache[k+1] > 0``
    is exactly the ReLU mask.
    """
    g = dout
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        x = cache[k]
        grads[k][0] += x.T @ g
        grads[k][1] += g.sum(axis=0)
        if k == 0 and not need_dx:
            return None
        g = g @ W.T
        if k > 0:
            g *= cache[k] > 0
    return g


def count_params(widths) -> int:
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
