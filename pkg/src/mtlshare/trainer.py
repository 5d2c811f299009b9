"""Iteration-based training for STL, HPS, SPS and LWS, plus evaluation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .arch import BackboneConfig, MtlNetwork, build_network
from .autodiff import Prng, backward, make_optimizer, softmax_cross_entropy, zero_grad
from .data import Batch, MultiTaskDataset, TaskDataset
from .losses import METHODS, Combiner
from .lws import AssignmentDistribution, inference_assignment, lws_weight_update, nes_update
from .metrics import MetricsRecord, accuracy, cumulative_accuracy

log = logging.getLogger(__name__)

DESK_ITERATIONS = 2000

_SPS_FIELDS = ("sps_s", "freeze_stitch")
_LWS_FIELDS = ("lws_pop_pi", "lws_pop_theta", "lws_eta_pi")
_DWA_FIELDS = ("dwa_window", "dwa_temperature")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Training hyperparameters; mode-specific fields are set exactly when their mode is active.

    Use :meth:`create` to get the mode-specific defaults filled in.
    """

    mode: str
    loss: str
    iterations: int = DESK_ITERATIONS
    batch_size: int = 8
    lr: float = 0.001
    optimizer: str = "adam"
    seed: int = 0
    eval_every: int = 100
    sps_s: float | None = None
    freeze_stitch: bool | None = None
    lws_pop_pi: int | None = None
    lws_pop_theta: int | None = None
    lws_eta_pi: float | None = None
    dwa_window: int | None = None
    dwa_temperature: float | None = None

    def __post_init__(self):
        if self.mode not in ("stl", "hps", "sps", "lws"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.loss not in METHODS:
            raise ValueError(f"unknown loss method {self.loss!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        for name in ("batch_size", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        self._require(_SPS_FIELDS, self.mode == "sps", "mode = sps")
        self._require(_LWS_FIELDS, self.mode == "lws", "mode = lws")
        self._require(_DWA_FIELDS, self.loss == "dwa", "loss = dwa")
        if self.mode == "sps" and not 0.0 <= self.sps_s <= 1.0:
            raise ValueError(f"sps_s must lie in [0, 1], got {self.sps_s}")
        if self.mode == "lws" and (self.lws_pop_pi < 1 or self.lws_pop_theta < 1 or not self.lws_eta_pi > 0):
            raise ValueError("LWS population sizes and eta must be positive")
        if self.loss == "dwa" and (self.dwa_window < 1 or not self.dwa_temperature > 0):
            raise ValueError("DWA window and temperature must be positive")

    def _require(self, names, active: bool, why: str) -> None:
        for name in names:
            present = getattr(self, name) is not None
            if active and not present:
                raise ValueError(f"{name} is required when {why}")
            if present and not active:
                raise ValueError(f"{name} is only valid when {why}")

    @classmethod
    def create(cls, mode: str, loss: str, **kwargs) -> TrainConfig:
        defaults: dict = {}
        if mode == "sps":
            defaults.update(sps_s=0.2, freeze_stitch=False)
        if mode == "lws":
            defaults.update(lws_pop_pi=4, lws_pop_theta=4, lws_eta_pi=0.1)
        if loss == "dwa":
            defaults.update(dwa_window=20, dwa_temperature=2.0)
        defaults.update(kwargs)
        return cls(mode=mode, loss=loss, **defaults)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class TrainState:
    """Everything a run mutates: networks, combiners, optimizers, LWS distribution, NES stream.

    STL keeps one single-task network (with its own combiner and optimizer)
    per task; the other modes keep exactly one of each.
    """

    config: TrainConfig
    backbone: BackboneConfig
    nets: list[MtlNetwork]
    combiners: list[Combiner]
    optimizers: list
    dist: AssignmentDistribution | None = None
    prng: Prng | None = None

    @property
    def k(self) -> int:
        return len(self.backbone.head_widths)

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, net in enumerate(self.nets):
            out.extend((f"net{i}/{name}", p.values) for name, p in net.named_parameters())
        return out


def build_state(config: TrainConfig, backbone: BackboneConfig) -> TrainState:
    k = len(backbone.head_widths)
    window = config.dwa_window or 20
    temperature = config.dwa_temperature or 2.0
    if config.mode == "stl":
        nets = [build_network(backbone, "stl", 1, config.seed, task_ids=[t]) for t in range(k)]
        combiners = [Combiner(config.loss, 1, temperature, window) for _ in range(k)]
    else:
        net = build_network(backbone, config.mode, k, config.seed, s=config.sps_s)
        if config.mode == "sps" and config.freeze_stitch:
            net.freeze_stitches()
        nets, combiners = [net], [Combiner(config.loss, k, temperature, window)]
    optimizers = [
        make_optimizer(config.optimizer, net.parameters() + comb.parameters(), config.lr)
        for net, comb in zip(nets, combiners)
    ]
    dist = None
    if config.mode == "lws":
        dist = AssignmentDistribution(nets[0].n_assignable, k, config.lws_eta_pi, config.lws_pop_pi, config.lws_pop_theta)
    return TrainState(config, backbone, nets, combiners, optimizers, dist, Prng(config.seed).child("lws"))


def task_losses(net: MtlNetwork, batch: Batch, assignment=None):
    logits = net.forward_tasks(batch.features, assignment)
    return [softmax_cross_entropy(z, y) for z, y in zip(logits, batch.labels)]


def _lws_loss(combiner: Combiner, with_values: bool):
    def loss_fn(net, batch, assignment):
        losses = task_losses(net, batch, assignment)
        combined = combiner.combine(losses, advance=False)
        if with_values:
            return combined, [l.item() for l in losses]
        return combined

    return loss_fn


def train_step(state: TrainState, batch: Batch) -> tuple[list[float], float]:
    """One iteration on ``batch``; returns (per-task losses, combined loss)."""
    cfg = state.config
    if cfg.mode == "stl":
        values, combined = [], 0.0
        for t, (net, comb, opt) in enumerate(zip(state.nets, state.combiners, state.optimizers)):
            task_batch = Batch([batch.features[t]], [batch.labels[t]], [t])
            (loss,) = task_losses(net, task_batch)
            total = comb.combine([loss])
            zero_grad(opt.params)
            backward(total)
            opt.step()
            values.append(loss.item())
            combined += total.item()
        return values, combined

    net, comb, opt = state.nets[0], state.combiners[0], state.optimizers[0]
    if cfg.mode == "lws":
        nes_update(state.dist, net, batch, _lws_loss(comb, False), state.prng)
        diag = lws_weight_update(state.dist, net, opt, batch, _lws_loss(comb, True), state.prng)
        comb.observe(diag.task_losses)
        return list(diag.task_losses), diag.mean_loss

    losses = task_losses(net, batch)
    total = comb.combine(losses)
    if not math.isfinite(total.item()):
        return [l.item() for l in losses], total.item()
    zero_grad(opt.params)
    backward(total)
    opt.step()
    return [l.item() for l in losses], total.item()


def _predict(net: MtlNetwork, x: np.ndarray, task_id: int, assignment, chunk: int = 512) -> np.ndarray:
    parts = [net.forward(x[i:i + chunk], task_id, assignment).values for i in range(0, len(x), chunk)]
    return np.concatenate(parts, axis=0)


def evaluate_task(net: MtlNetwork, dataset: TaskDataset, task_id: int, assignment=None) -> tuple[int, int]:
    """(correct, total) on the test split."""
    if len(dataset.test_idx) == 0:
        raise ValueError(f"task {dataset.name} has an empty test split")
    logits = _predict(net, dataset.test_features, task_id, assignment)
    return accuracy(logits, dataset.test_labels)


def evaluate(state: TrainState, tasks: Sequence[TaskDataset]) -> tuple[list[int], list[int]]:
    correct, totals = [], []
    for t, task in enumerate(tasks):
        if state.config.mode == "stl":
            c, n = evaluate_task(state.nets[t], task, 0)
        elif state.config.mode == "lws":
            a = inference_assignment(state.dist)
            c, n = evaluate_task(state.nets[0], task, t, a)
        else:
            c, n = evaluate_task(state.nets[0], task, t)
        correct.append(c)
        totals.append(n)
    return correct, totals


def weight_snapshot(state: TrainState) -> list[float]:
    return [float(w) for comb in state.combiners for w in comb.weights_snapshot()]


def _record(state, tasks, iteration, task_vals, combined, start) -> MetricsRecord:
    correct, totals = evaluate(state, tasks)
    return MetricsRecord(
        iteration=iteration,
        task_losses=list(task_vals),
        combined_loss=combined,
        accuracies=[c / n for c, n in zip(correct, totals)],
        correct=correct,
        totals=totals,
        cumulative=cumulative_accuracy(correct, totals),
        weights=weight_snapshot(state),
        wall_clock=time.perf_counter() - start,
    )


@dataclass
class TrainingResult:
    final: MetricsRecord
    series: list[MetricsRecord]
    state: TrainState
    batches: int
    step_losses: list[float] = field(default_factory=list)
    step_task_losses: list[list[float]] = field(default_factory=list)


def run_training(config: TrainConfig, mtds: MultiTaskDataset, state: TrainState | None = None,
                 backbone: BackboneConfig | None = None) -> TrainingResult:
    """Train for ``config.iterations`` batches, evaluating every ``eval_every`` iterations.

    The series starts with an evaluation at iteration 0 and always ends with
    one at the final iteration. Loss columns hold means over the iterations
    since the previous evaluation (NaN at iteration 0).
    """
    if state is None:
        if backbone is None:
            raise ValueError("run_training needs a TrainState or a BackboneConfig")
        state = build_state(config, backbone)
    if state.config.mode != config.mode:
        raise ValueError(f"state was built for mode {state.config.mode!r}, config says {config.mode!r}")
    if mtds.batch_size != config.batch_size:
        raise ValueError(f"dataset batch size {mtds.batch_size} != config batch size {config.batch_size}")
    start = time.perf_counter()
    k = len(mtds.tasks)
    series = [_record(state, mtds.tasks, 0, [math.nan] * k, math.nan, start)]
    step_losses: list[float] = []
    step_task_losses: list[list[float]] = []
    acc_vals = np.zeros(k)
    acc_comb = 0.0
    n_acc = 0
    first_batch = mtds.iteration
    for it in range(1, config.iterations + 1):
        batch = mtds.next_batch()
        try:
            vals, combined = train_step(state, batch)
        except FloatingPointError as exc:
            raise TrainingError(f"{exc} at iteration {it}") from exc
        if not math.isfinite(combined):
            raise TrainingError(f"non-finite combined loss {combined} at iteration {it}")
        step_losses.append(combined)
        step_task_losses.append(list(vals))
        acc_vals += np.asarray(vals)
        acc_comb += combined
        n_acc += 1
        if it % config.eval_every == 0 or it == config.iterations:
            series.append(_record(state, mtds.tasks, it, list(acc_vals / n_acc), acc_comb / n_acc, start))
            log.debug("iter %d combined %.4f cumulative acc %.4f", it, acc_comb / n_acc, series[-1].cumulative)
            acc_vals[:] = 0.0
            acc_comb = 0.0
            n_acc = 0
    return TrainingResult(series[-1], series, state, mtds.iteration - first_batch, step_losses, step_task_losses)
