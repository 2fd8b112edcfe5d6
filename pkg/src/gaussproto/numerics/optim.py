"""Gradient-descent optimizers over lists of parameter tensors.

A parameter's gradient lives in its .grad field (filled by backward);
a missing gradient is treated as zero.  Optimizer state is owned by a
single training loop and updates parameter data in place.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from .tensor import Tensor


class Optimizer:
    def __init__(self, params: list[Tensor], lr: float):
        self.params = list(params)
        self.lr = float(lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _grad(self, p: Tensor) -> np.ndarray:
        if p.grad is None:
            return np.zeros_like(p.data)
        if p.grad.shape != p.data.shape:
            raise ShapeMismatchError(
                f"gradient shape {p.grad.shape} != parameter shape {p.data.shape}")
        return p.grad

    def step(self) -> None:
        raise NotImplementedError


class Sgd(Optimizer):
    """Plain SGD with classical momentum: v <- mu*v + g; p <- p - lr*v."""

    def __init__(self, params, lr: float, momentum: float = 0.0):
        super().__init__(params, lr)
        self.momentum = float(momentum)
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self._velocity):
            g = self._grad(p)
            if self.momentum != 0.0:
                v *= self.momentum
                v += g
                g = v
            p.data -= self.lr * g


class Adam(Optimizer):
    """Adam with the standard bias-corrected moment estimates."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = float(beta1), float(beta2), float(eps)
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self._t = 0

    def step(self) -> None:
        self._t += 1
        c1 = 1.0 - self.beta1 ** self._t
        c2 = 1.0 - self.beta2 ** self._t
        for p, m, v in zip(self.params, self._m, self._v):
            g = self._grad(p)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, params, lr: float, momentum: float = 0.9) -> Optimizer:
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return Sgd(params, lr=lr, momentum=momentum)
    raise ValueError(f"unknown optimizer kind: {kind!r}")
