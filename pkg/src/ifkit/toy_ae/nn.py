"""Dense layers with hand-written reverse mode, and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalDegeneracy

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _act_grad(name, z, a, upstream):
    if name == "relu":
        return upstream * (z > 0)
    if name == "tanh":
        return upstream * (1.0 - a * a)
    if name == "sigmoid":
        return upstream * a * (1.0 - a)
    return upstream


@dataclass
class DenseLayer:
    """``a = act(x @ W.T + b)`` for a row batch ``x``; ``W`` is (out, in)."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    @classmethod
    def init(cls, n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> "DenseLayer":
        limit = np.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, (n_out, n_in)), np.zeros(n_out), activation)

    @property
    def shape(self):
        return self.W.shape

    def forward(self, x):
        z = x @ self.W.T + self.b
        a = _act(self.activation, z)
        return a, (x, z, a)

    def backward(self, cache, upstream):
        x, z, a = cache
        dz = _act_grad(self.activation, z, a, upstream)
        return dz @ self.W, dz.T @ x, dz.sum(axis=0)


@dataclass
class MLP:
    layers: list[DenseLayer] = field(default_factory=list)

    @classmethod
    def init(cls, sizes, activations, rng):
        return cls([DenseLayer.init(i, o, act, rng) for i, o, act in zip(sizes[:-1], sizes[1:], activations)])

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, caches, upstream, name="mlp"):
        """Gradient w.r.t. the input plus ``[dW0, db0, dW1, ...]``."""
        grads = []
        for idx in range(len(self.layers) - 1, -1, -1):
            upstream, dW, db = self.layers[idx].backward(caches[idx], upstream)
            if not (np.all(np.isfinite(dW)) and np.all(np.isfinite(db))):
                raise NumericalDegeneracy(f"non-finite gradient in {name} layer {idx}")
            grads[:0] = [dW, db]
        return upstream, grads

    def params(self):
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float = 1e-4) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state`` (no weight decay)."""
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
