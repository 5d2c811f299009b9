"""Central finite-difference verification of backward gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tolerance: float) -> bool:
        return self.max_error < tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if scale < 1e-12:
        return diff
    return diff / scale


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> np.ndarray:
    out = np.zeros_like(param.values)
    values = param.values
    for i in range(values.size):
        orig = values.flat[i]
        values.flat[i] = orig + h
        up = fn().item()
        values.flat[i] = orig - h
        down = fn().item()
        values.flat[i] = orig
        out.flat[i] = (up - down) / (2.0 * h)
    return out


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> GradCheckReport:
    """Compare backward gradients of the scalar ``fn()`` to central differences.

    ``fn`` must rebuild the graph from the current parameter values on every
    call. Gradients on ``params`` are left zeroed.
    """
    for p in params:
        p.zero_grad()
    backward(fn())
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()
    report = GradCheckReport()
    for i, (p, a) in enumerate(zip(params, analytic)):
        name = p.name or f"param{i}"
        if name in report.errors:
            name = f"{name}#{i}"
        report.errors[name] = relative_error(a, numerical_grad(fn, p, h))
    return report
