"""Minimal dense networks with hand-written reverse mode, plus optimizers.

Networks share one small interface with :class:`phyn.EditedNetwork`:
``params`` (list of arrays updated in place), ``forward(x) -> (out, caches)``,
``backward(caches, g_out) -> (grads, g_x)`` and ``copy()``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .phyn import _act, _act_grad


@dataclass
class MLP:
    weights: list
    biases: list
    activations: list

    @classmethod
    def create(cls, sizes, activations, rng, final_scale: float = 3e-3) -> "MLP":
        """He-uniform hidden layers and a small uniform final layer."""
        if len(activations) != len(sizes) - 1:
            raise DimensionMismatch("need one activation per layer")
        Ws, bs = [], []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = k == len(sizes) - 2
            lim = final_scale if last else np.sqrt(6.0 / n_in)
            Ws.append(rng.uniform(-lim, lim, size=(n_out, n_in)))
            bs.append(np.zeros(n_out))
        return cls(Ws, bs, list(activations))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def params(self) -> list:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise DimensionMismatch(f"input has length {x.shape[-1]}, network expects {self.input_dim}")
        h = np.atleast_2d(x)
        caches = []
        for W, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ W.T + b
            out = _act(z, act)
            caches.append((h, z, out))
            h = out
        return h, caches

    def backward(self, caches, g_out):
        grads = []
        g = g_out
        for W, act, (h, z, out) in zip(self.weights[::-1], self.activations[::-1], caches[::-1]):
            dz = g * _act_grad(z, out, act)
            grads.append(dz.sum(axis=0))
            grads.append(dz.T @ h)
            g = dz @ W
        return grads[::-1], g

    def __call__(self, x):
        out, _ = self.forward(x)
        return out[0] if np.ndim(x) == 1 else out

    def copy(self) -> "MLP":
        return MLP([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                   list(self.activations))


@dataclass
class SGDMomentum:
    lr: float
    momentum: float = 0.9
    _vel: list = field(default=None, repr=False)

    def step(self, params, grads):
        if self._vel is None:
            self._vel = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self._vel):
            v *= self.momentum
            v -= self.lr * g
            p += v


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _m: list = field(default=None, repr=False)
    _v: list = field(default=None, repr=False)
    _t: int = 0

    def step(self, params, grads):
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._t += 1
        c1 = 1.0 - self.beta1 ** self._t
        c2 = 1.0 - self.beta2 ** self._t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return SGDMomentum(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")
