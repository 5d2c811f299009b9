"""Multi-task loss combination: average, uncertainty, automatic, and DWA.

``uncertainty``: sum_k L_k / (2 sigma_k^2) + log sigma_k
``automatic``:   sum_k L_k / (2 sigma_k^2) + log(1 + sigma_k^2)
``dwa``:         sum_k lambda_k(t) L_k with
                 lambda_k(t) = K exp(w_k / T) / sum_j exp(w_j / T),
                 w_k = Lbar_k(t-1) / Lbar_k(t-2)

sigma is stored as log sigma so it stays positive. DWA's Lbar are means of
consecutive blocks of ``window`` iterations; until two blocks have been
completed all w_k are 1.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor, exp, log1p, take

METHODS = ("average", "uncertainty", "automatic", "dwa")


class Combiner:
    def __init__(self, method: str, k: int, temperature: float = 2.0, window: int = 20):
        if method not in METHODS:
            raise ValueError(f"unknown loss method {method!r}; expected one of {METHODS}")
        if k < 1:
            raise ValueError(f"need at least one task, got K={k}")
        if temperature <= 0 or window < 1:
            raise ValueError("DWA temperature and window must be positive")
        self.method = method
        self.k = k
        self.temperature = float(temperature)
        self.window = int(window)
        self.t = 0
        self.log_sigma = Tensor(np.zeros(k), requires_grad=method in ("uncertainty", "automatic"), name="combiner.log_sigma")
        self.pending: list[np.ndarray] = []
        self.prev: np.ndarray | None = None  # Lbar(t-1)
        self.prev2: np.ndarray | None = None  # Lbar(t-2)

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma.values)

    def set_sigma(self, sigma: Sequence[float]) -> None:
        sigma = np.asarray(sigma, dtype=np.float64)
        if sigma.shape != (self.k,) or np.any(sigma <= 0):
            raise ValueError(f"sigma must be {self.k} positive values, got {sigma}")
        self.log_sigma.values = np.log(sigma)

    def parameters(self) -> list[Tensor]:
        return [self.log_sigma] if self.log_sigma.requires_grad else []

    def combine(self, task_losses: Sequence[Tensor], advance: bool = True) -> Tensor:
        """Combined scalar loss; for DWA, ``advance`` records the losses in the history."""
        if len(task_losses) != self.k:
            raise ValueError(f"expected {self.k} task losses, got {len(task_losses)}")
        values = np.array([loss.item() for loss in task_losses])
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise FloatingPointError(f"non-finite loss {values[bad]} for task {bad}")

        if self.method == "average":
            out = task_losses[0]
            for loss in task_losses[1:]:
                out = out + loss
            out = out * (1.0 / self.k)
        elif self.method == "dwa":
            lam = self.dwa_weights()
            out = task_losses[0] * float(lam[0])
            for i in range(1, self.k):
                out = out + task_losses[i] * float(lam[i])
            if advance:
                self.observe(values)
        else:
            out = None
            for i, loss in enumerate(task_losses):
                s = take(self.log_sigma, i)
                term = loss * exp(s * -2.0) * 0.5
                if self.method == "uncertainty":
                    term = term + s
                else:
                    term = term + log1p(exp(s * 2.0))
                out = term if out is None else out + term
        return out

    def observe(self, values: Sequence[float]) -> None:
        """Advance the iteration counter and the DWA loss history."""
        self.t += 1
        if self.method != "dwa":
            return
        self.pending.append(np.asarray(values, dtype=np.float64).copy())
        if len(self.pending) == self.window:
            acc = np.zeros(self.k)
            for v in self.pending:
                acc += v
            self.prev2, self.prev = self.prev, acc / self.window
            self.pending = []

    def dwa_ratios(self) -> np.ndarray:
        if self.prev is None or self.prev2 is None:
            return np.ones(self.k)
        if np.any(self.prev2 == 0):
            raise ZeroDivisionError(f"degenerate DWA history: zero windowed loss in {self.prev2}")
        return self.prev / self.prev2

    def dwa_weights(self) -> np.ndarray:
        if self.method != "dwa":
            raise ValueError(f"dwa_weights requested from a {self.method!r} combiner")
        z = self.dwa_ratios() / self.temperature
        e = np.exp(z - z.max())
        return self.k * e / e.sum()

    def sigma_gradient(self, task_losses: Sequence[float]) -> np.ndarray:
        """Analytic d(combined)/d(sigma_k)."""
        if self.method not in ("uncertainty", "automatic"):
            raise ValueError(f"sigma_gradient needs an uncertainty or automatic combiner, not {self.method!r}")
        sigma = self.sigma
        if np.any(sigma <= 0):
            raise ValueError("sigma must be positive")
        losses = np.array([float(v.item()) if isinstance(v, Tensor) else float(v) for v in task_losses])
        data = -losses / sigma**3
        if self.method == "uncertainty":
            return data + 1.0 / sigma
        return data + 2.0 * sigma / (1.0 + sigma**2)

    def regularizer(self) -> np.ndarray:
        """Per-task regularization term (log sigma or log(1 + sigma^2))."""
        if self.method == "automatic":
            return np.log1p(self.sigma**2)
        return self.log_sigma.values.copy()

    def weights_snapshot(self) -> np.ndarray:
        """Current effective task weights: lambda for DWA, sigma for uncertainty/automatic, 1/K for average."""
        if self.method == "dwa":
            return self.dwa_weights()
        if self.method == "average":
            return np.full(self.k, 1.0 / self.k)
        return self.sigma

    def state_dict(self) -> dict:
        return {
            "method": self.method,
            "k": self.k,
            "temperature": self.temperature,
            "window": self.window,
            "t": self.t,
            "log_sigma": self.log_sigma.values.tolist(),
            "pending": [v.tolist() for v in self.pending],
            "prev": None if self.prev is None else self.prev.tolist(),
            "prev2": None if self.prev2 is None else self.prev2.tolist(),
        }

    def load_state_dict(self, state: dict) -> None:
        if state["method"] != self.method or state["k"] != self.k:
            raise ValueError(
                f"combiner mismatch: checkpoint has {state['method']}/K={state['k']}, target is {self.method}/K={self.k}"
            )
        self.temperature = float(state["temperature"])
        self.window = int(state["window"])
        self.t = int(state["t"])
        self.log_sigma.values = np.array(state["log_sigma"], dtype=np.float64)
        self.pending = [np.array(v, dtype=np.float64) for v in state["pending"]]
        self.prev = None if state["prev"] is None else np.array(state["prev"], dtype=np.float64)
        self.prev2 = None if state["prev2"] is None else np.array(state["prev2"], dtype=np.float64)


def combine(state: Combiner, task_losses: Sequence[Tensor]) -> Tensor:
    return state.combine(task_losses)


def dwa_weights(state: Combiner) -> np.ndarray:
    return state.dwa_weights()


def sigma_gradient(state: Combiner, task_losses: Sequence[float]) -> np.ndarray:
    return state.sigma_gradient(task_losses)
