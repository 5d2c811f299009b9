"""First-order optimizers updating parameters in place."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    pass


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


def _check_finite(params: list[Tensor]) -> None:
    for i, p in enumerate(params):
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(f"non-finite gradient in parameter {p.name or i}")


class Sgd:
    kind = "sgd"

    def __init__(self, params: Iterable[Tensor], lr: float):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.steps = 0

    def step(self) -> None:
        _check_finite(self.params)
        for p in self.params:
            p.values -= self.lr * p.grad
        self.steps += 1

    def state_dict(self) -> dict:
        return {"kind": self.kind, "lr": self.lr, "steps": self.steps}


class Adam:
    """Bias-corrected Adam."""

    kind = "adam"

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self) -> None:
        _check_finite(self.params)
        self.steps += 1
        c1 = 1.0 - self.beta1 ** self.steps
        c2 = 1.0 - self.beta2 ** self.steps
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.values -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"kind": self.kind, "lr": self.lr, "steps": self.steps}


def make_optimizer(kind: str, params: Iterable[Tensor], lr: float):
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return Sgd(params, lr=lr)
    raise ValueError(f"unknown optimizer {kind!r}")
