"""Learned weight sharing: assignment distributions optimized with NES.

Every (layer, task) cell holds a categorical distribution over the K weight
sets of that layer, parameterized by logits. One training iteration
alternates an assignment step (score-function gradient with rank-shaped
utilities, weights frozen) and a weight step (gradients averaged over
sampled assignments, distribution frozen).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Prng, Tensor, backward


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class AssignmentDistribution:
    """Factorized categorical over assignments: logits of shape (layers, tasks, K)."""

    def __init__(self, n_layers: int, k: int, eta: float = 0.1, pop_pi: int = 4, pop_theta: int = 4):
        if n_layers < 1 or k < 1:
            raise ValueError(f"need at least one layer and one task, got L={n_layers}, K={k}")
        if eta <= 0:
            raise ValueError(f"assignment learning rate must be positive, got {eta}")
        if pop_pi < 1 or pop_theta < 1:
            raise ValueError(f"population sizes must be at least 1, got {pop_pi}, {pop_theta}")
        self.n_layers = n_layers
        self.k = k
        self.eta = float(eta)
        self.pop_pi = int(pop_pi)
        self.pop_theta = int(pop_theta)
        self.logits = np.zeros((n_layers, k, k))

    @property
    def probs(self) -> np.ndarray:
        return _softmax(self.logits)

    def log_prob(self, assignment: np.ndarray) -> float:
        p = self.probs
        li, ti = np.indices(assignment.shape)
        return float(np.log(p[li, ti, assignment]).sum())

    def score(self, assignment: np.ndarray) -> np.ndarray:
        """d log p(assignment) / d logits = onehot(choice) - pi, per cell."""
        out = -self.probs
        li, ti = np.indices(assignment.shape)
        out[li, ti, assignment] += 1.0
        return out

    def state_dict(self) -> dict:
        return {
            "n_layers": self.n_layers, "k": self.k, "eta": self.eta,
            "pop_pi": self.pop_pi, "pop_theta": self.pop_theta,
            "logits": self.logits.tolist(),
        }

    def load_state_dict(self, state: dict) -> None:
        logits = np.array(state["logits"], dtype=np.float64)
        if logits.shape != self.logits.shape:
            raise ValueError(f"assignment logits shape {logits.shape} != {self.logits.shape}")
        self.eta = float(state["eta"])
        self.pop_pi = int(state["pop_pi"])
        self.pop_theta = int(state["pop_theta"])
        self.logits = logits


def sample_assignment(dist: AssignmentDistribution, prng: Prng) -> tuple[np.ndarray, float]:
    """Draw every cell independently; returns (assignment, log probability)."""
    p = dist.probs
    choice = prng.categorical(p.reshape(-1, dist.k)).reshape(dist.n_layers, dist.k)
    return choice, dist.log_prob(choice)


def inference_assignment(dist: AssignmentDistribution) -> np.ndarray:
    """Per-cell most probable weight set; ties go to the lowest index."""
    return np.argmax(dist.probs, axis=-1)


def utilities(losses) -> np.ndarray:
    """Rank-based fitness shaping: lowest loss -> +1, highest -> -1, linear in rank.

    Ties keep sample order. A population of one gets utility 0.
    """
    losses = np.asarray(losses, dtype=np.float64).reshape(-1)
    n = losses.size
    if n < 1:
        raise ValueError("need at least one loss")
    if not np.all(np.isfinite(losses)):
        raise FloatingPointError(f"non-finite loss in population: {losses}")
    if n == 1:
        return np.zeros(1)
    order = np.argsort(losses, kind="stable")
    u = np.empty(n)
    u[order] = 1.0 - 2.0 * np.arange(n) / (n - 1)
    return u


@dataclass
class NesDiagnostics:
    mean_loss: float
    grad_norm: float
    losses: np.ndarray
    assignments: list[np.ndarray]


def nes_gradient(dist: AssignmentDistribution, assignments: list[np.ndarray], losses) -> np.ndarray:
    """(1/lambda) * sum_i u_i * score(assignment_i)."""
    u = utilities(losses)
    grad = np.zeros_like(dist.logits)
    for ui, a in zip(u, assignments):
        grad += ui * dist.score(a)
    return grad / len(assignments)


def _as_float(value) -> float:
    return value.item() if isinstance(value, Tensor) else float(value)


def nes_update(dist: AssignmentDistribution, network, batch, loss_fn: Callable, prng: Prng) -> NesDiagnostics:
    """One assignment step: sample ``pop_pi`` assignments, score them on ``batch``, ascend shaped utility.

    ``loss_fn(network, batch, assignment)`` returns the loss as a float or
    scalar tensor; weights are not touched.
    """
    if dist.pop_pi < 1:
        raise ValueError(f"population size must be at least 1, got {dist.pop_pi}")
    assignments = [sample_assignment(dist, prng)[0] for _ in range(dist.pop_pi)]
    losses = np.array([_as_float(loss_fn(network, batch, a)) for a in assignments])
    grad = nes_gradient(dist, assignments, losses)
    dist.logits = dist.logits + dist.eta * grad
    return NesDiagnostics(float(losses.mean()), float(np.linalg.norm(grad)), losses, assignments)


@dataclass
class WeightDiagnostics:
    mean_loss: float
    losses: np.ndarray
    assignments: list[np.ndarray]
    task_losses: np.ndarray | None = None


def lws_weight_update(dist: AssignmentDistribution, network, optimizer, batch, loss_fn: Callable,
                      prng: Prng) -> WeightDiagnostics:
    """One weight step: average parameter gradients over ``pop_theta`` sampled assignments.

    ``loss_fn(network, batch, assignment)`` returns a scalar tensor, or a
    ``(scalar, per_task_values)`` pair. All parameters in ``optimizer``
    receive the population-mean gradient before a single optimizer step.
    """
    params = optimizer.params
    for p in params:
        p.zero_grad()
    assignments, losses, per_task = [], [], []
    for _ in range(dist.pop_theta):
        a, _ = sample_assignment(dist, prng)
        out = loss_fn(network, batch, a)
        if isinstance(out, tuple):
            out, task_values = out
            per_task.append(np.asarray(task_values, dtype=np.float64))
        backward(out)
        assignments.append(a)
        losses.append(out.item())
    scale = 1.0 / dist.pop_theta
    for p in params:
        p.grad  # materialize zeros for parameters no sample touched
        p._grad *= scale
    optimizer.step()
    task_losses = None
    if per_task:
        task_losses = np.zeros_like(per_task[0])
        for v in per_task:
            task_losses += v
        task_losses /= len(per_task)
    return WeightDiagnostics(float(np.mean(losses)), np.array(losses), assignments, task_losses)


def cross_task_mass(dist: AssignmentDistribution, layer: int = 0) -> float:
    """Mean over ordered task pairs (k != j) of sum_m pi_k[m] * pi_j[m] at ``layer``.

    The probability that task k routes through the same weight set as task j:
    the mass task k places on the other task's weight sets.
    """
    if dist.k < 2:
        return 0.0
    p = dist.probs[layer]
    overlap = p @ p.T
    off = overlap[~np.eye(dist.k, dtype=bool)]
    return float(off.mean())
