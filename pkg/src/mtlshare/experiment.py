"""Config-driven runs and multi-seed comparison tables."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig
from .trainer import TrainingResult, build_state, run_training


def run_experiment(cfg: ExperimentConfig, seed: int | None = None) -> tuple[TrainingResult, list[str]]:
    tasks = cfg.build_tasks()
    backbone = cfg.build_backbone(tasks)
    train_cfg = cfg.train_config(seed)
    mtds = cfg.build_dataset(tasks, train_cfg.seed)
    result = run_training(train_cfg, mtds, build_state(train_cfg, backbone))
    return result, [t.name for t in tasks]


def row_label(cfg: ExperimentConfig) -> str:
    mode = cfg["mode"]
    if mode == "sps":
        return f"SPS (s={cfg['sps_s']:g})"
    return mode.upper()


@dataclass
class CompareRow:
    label: str
    loss: str
    accuracies: np.ndarray  # (seeds, tasks)
    cumulative: np.ndarray  # (seeds,)


def _std(x: np.ndarray, axis=0) -> np.ndarray:
    return x.std(axis=axis, ddof=1) if x.shape[axis] > 1 else np.zeros_like(x.mean(axis=axis))


def _cell(cfg_values: dict, source: str, seed: int):
    cfg = ExperimentConfig(cfg_values, source)
    result, names = run_experiment(cfg, seed)
    return result.final.accuracies, result.final.cumulative, names


def compare(configs: Sequence[ExperimentConfig], seeds: int = 5, jobs: int = 1) -> tuple[list[CompareRow], list[str]]:
    """Train every config on ``seeds`` consecutive seeds starting at its own seed."""
    if len(configs) < 2:
        raise ConfigError("compare needs at least two configs")
    if seeds < 1:
        raise ConfigError("seeds must be at least 1")
    ref = configs[0]
    for cfg in configs[1:]:
        if cfg.data_signature() != ref.data_signature():
            diff = [k for k in ref.data_signature() if ref.data_signature()[k] != cfg.data_signature()[k]]
            raise ConfigError(f"{cfg.source}: dataset differs from {ref.source} (key {diff[0]!r})")
        for key in ("iterations", "batch_size"):
            if cfg[key] != ref[key]:
                raise ConfigError(f"{cfg.source}: {key} = {cfg[key]} differs from {ref.source} ({ref[key]})")
    cells = [(cfg.values, cfg.source, cfg["seed"] + i) for cfg in configs for i in range(seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell, *zip(*cells)))
    else:
        results = [_cell(*c) for c in cells]
    rows, names = [], results[0][2]
    for i, cfg in enumerate(configs):
        chunk = results[i * seeds:(i + 1) * seeds]
        rows.append(CompareRow(row_label(cfg), cfg["loss"], np.array([r[0] for r in chunk]), np.array([r[1] for r in chunk])))
    return rows, names


def format_comparison(rows: Sequence[CompareRow], task_names: Sequence[str]) -> str:
    """CSV with mean and std columns per task plus cumulative accuracy, one row per config."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["method", "loss"]
    for t in task_names:
        header += [f"acc_{t}_mean", f"acc_{t}_std"]
    header += ["cumulative_mean", "cumulative_std", "seeds"]
    writer.writerow(header)
    for r in rows:
        mean, std = r.accuracies.mean(axis=0), _std(r.accuracies)
        line = [r.label, r.loss]
        for m, s in zip(mean, std):
            line += [f"{m:.6g}", f"{s:.6g}"]
        line += [f"{r.cumulative.mean():.6g}", f"{_std(r.cumulative):.6g}", str(len(r.cumulative))]
        writer.writerow(line)
    return buf.getvalue()


def render_table(rows: Sequence[CompareRow], task_names: Sequence[str]) -> str:
    """Human-readable table in percent, mean ± std."""
    head = ["Method", "Loss"] + list(task_names) + ["Cumulative"]
    body = []
    for r in rows:
        mean, std = r.accuracies.mean(axis=0) * 100, _std(r.accuracies) * 100
        cells = [r.label, r.loss] + [f"{m:.2f} ± {s:.2f}" for m, s in zip(mean, std)]
        cells.append(f"{r.cumulative.mean() * 100:.2f} ± {_std(r.cumulative) * 100:.2f}")
        body.append(cells)
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)) for row in [head] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
