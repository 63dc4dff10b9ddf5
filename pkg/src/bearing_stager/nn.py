"""Minimal dense-network machinery in numpy: layers, backprop, Adam.

A network is a list of ``(W, b)`` pairs with ``W`` of shape ``(fan_in, fan_out)``
and a parallel list of activation names (``"relu"`` or ``"linear"``).
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("relu", "linear")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_layers(rng: np.random.Generator, sizes) -> list[tuple[np.ndarray, np.ndarray]]:
    """Glorot-uniform weights, zero biases, for consecutive ``sizes``."""
    return [
        (glorot_uniform(rng, a, b), np.zeros(b))
        for a, b in zip(sizes[:-1], sizes[1:])
    ]


def forward(layers, activations, x):
    """Run ``x`` (batch, fan_in) through the stack.

    Returns the output and a cache of per-layer inputs and pre-activations
    for ``backward``.
    """
    cache = []
    h = x
    for (W, b), act in zip(layers, activations):
        z = h @ W + b
        cache.append((h, z))
        h = np.maximum(z, 0.0) if act == "relu" else z
    return h, cache


def backward(layers, activations, cache, grad_out):
    """Gradients of a scalar loss w.r.t. every ``(W, b)`` and the stack input."""
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        h, z = cache[i]
        if activations[i] == "relu":
            g = g * (z > 0)
        grads[i] = (h.T @ g, g.sum(axis=0))
        g = g @ W.T
    return grads, g


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Adam:
    """Adam with bias correction, updating a flat list of arrays in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def flat_params(layers) -> list[np.ndarray]:
    out = []
    for W, b in layers:
        out.extend((W, b))
    return out


def flat_grads(grads) -> list[np.ndarray]:
    out = []
    for dW, db in grads:
        out.extend((dW, db))
    return out
