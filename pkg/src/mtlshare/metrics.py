"""Accuracy metrics and the metrics CSV format."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass
class MetricsRecord:
    iteration: int
    task_losses: list[float]
    combined_loss: float
    accuracies: list[float]
    correct: list[int]
    totals: list[int]
    cumulative: float
    weights: list[float]
    wall_clock: float = field(default=0.0, compare=False)


def accuracy(logits: np.ndarray, labels: np.ndarray) -> tuple[int, int]:
    """(correct, total); argmax ties resolve to the lowest class index."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot score an empty set")
    pred = np.argmax(logits, axis=1)
    return int((pred == labels).sum()), int(labels.size)


def cumulative_accuracy(correct: Sequence[int], totals: Sequence[int]) -> float:
    """Pooled accuracy: all correct predictions over all predictions across tasks."""
    if len(correct) != len(totals):
        raise ValueError(f"{len(correct)} correct counts for {len(totals)} totals")
    for k, (c, t) in enumerate(zip(correct, totals)):
        if t <= 0:
            raise ValueError(f"task {k} has no predictions (total {t})")
        if not 0 <= c <= t:
            raise ValueError(f"task {k}: correct count {c} outside [0, {t}]")
    return sum(correct) / sum(totals)


def metric_columns(task_names: Sequence[str], n_weights: int | None = None) -> list[str]:
    n_weights = len(task_names) if n_weights is None else n_weights
    cols = ["iteration"]
    cols += [f"loss_{t}" for t in task_names]
    cols.append("combined_loss")
    cols += [f"acc_{t}" for t in task_names]
    cols.append("cumulative_acc")
    cols += [f"weight_{i}" for i in range(n_weights)]
    return cols


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6g}"


def format_metrics(series: Sequence[MetricsRecord], task_names: Sequence[str]) -> str:
    n_weights = len(series[0].weights) if series else len(task_names)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(metric_columns(task_names, n_weights))
    for r in series:
        row = [str(r.iteration)]
        row += [_fmt(v) for v in r.task_losses]
        row.append(_fmt(r.combined_loss))
        row += [_fmt(v) for v in r.accuracies]
        row.append(_fmt(r.cumulative))
        row += [_fmt(v) for v in r.weights]
        writer.writerow(row)
    return buf.getvalue()


def write_metrics(series: Sequence[MetricsRecord], path, task_names: Sequence[str]) -> None:
    """One row per evaluation; the file is written whole or not at all."""
    path = Path(path)
    text = format_metrics(series, task_names)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc


def read_metrics(path) -> list[dict[str, float]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
