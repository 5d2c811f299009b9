"""Flat ``key = value`` experiment configs.

One key per line; ``#`` starts a comment; blank lines are ignored. Values
are typed by key: integers, floats, booleans (``true``/``false``) and
strings (optionally quoted).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .arch import BackboneConfig
from .data import MultiTaskDataset, SyntheticTaskSpec, TaskDataset, gen_synthetic_pair, load_csv
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


# key -> (type, default, group); group None = always allowed
_SCHEMA: dict[str, tuple[type, object, str | None]] = {
    "mode": (str, None, None),
    "loss": (str, None, None),
    "seed": (int, None, None),
    "data": (str, None, None),
    "name": (str, "", None),
    "out_dir": (str, "runs", None),
    "iterations": (int, 2000, None),
    "batch_size": (int, 8, None),
    "lr": (float, 0.001, None),
    "optimizer": (str, "adam", None),
    "eval_every": (int, 100, None),
    "backbone": (str, "dense", None),
    "hidden": (int, 64, None),
    "depth": (int, 2, None),
    "standardize": (bool, True, None),
    "test_fraction": (float, 0.25, None),
    "data_seed": (int, 0, None),
    "sps_s": (float, 0.2, "sps"),
    "freeze_stitch": (bool, False, "sps"),
    "lws_pop_pi": (int, 4, "lws"),
    "lws_pop_theta": (int, 4, "lws"),
    "lws_eta_pi": (float, 0.1, "lws"),
    "dwa_window": (int, 20, "dwa"),
    "dwa_temperature": (float, 2.0, "dwa"),
    "syn_dim": (int, 16, "synthetic"),
    "syn_classes": (int, 4, "synthetic"),
    "syn_samples_a": (int, 1000, "synthetic"),
    "syn_samples_b": (int, 1000, "synthetic"),
    "syn_rho": (float, 1.0, "synthetic"),
    "syn_noise": (float, 0.5, "synthetic"),
    "csv_paths": (str, None, "csv"),
    "csv_label_column": (str, "", "csv"),
    "csv_sample_shape": (str, "", "csv"),
}
REQUIRED = ("mode", "loss", "seed", "data")
DATA_KEYS = ("data", "data_seed", "test_fraction", "standardize") + tuple(
    k for k, (_, _, g) in _SCHEMA.items() if g in ("synthetic", "csv")
)


def _coerce(key: str, raw: str, kind: type, lineno: int):
    text = raw.strip()
    if kind is str:
        if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
            text = text[1:-1]
        return text
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
    else:
        try:
            return kind(text) if kind is float else int(text, 10)
        except ValueError:
            pass
    raise ConfigError(f"line {lineno}: {key} expects {kind.__name__}, got {text!r}")


@dataclass
class ExperimentConfig:
    values: dict
    source: str = "<text>"

    def __getitem__(self, key):
        return self.values[key]

    @property
    def name(self) -> str:
        return self.values["name"] or f"{self['mode']}_{self['loss']}"

    @property
    def run_dir(self) -> Path:
        return Path(self.values["out_dir"]) / self.name

    def data_signature(self) -> dict:
        return {k: self.values.get(k) for k in DATA_KEYS}

    def train_config(self, seed: int | None = None) -> TrainConfig:
        v = self.values
        kwargs = {
            "iterations": v["iterations"], "batch_size": v["batch_size"], "lr": v["lr"],
            "optimizer": v["optimizer"], "seed": v["seed"] if seed is None else seed,
            "eval_every": v["eval_every"],
        }
        if v["mode"] == "sps":
            kwargs.update(sps_s=v["sps_s"], freeze_stitch=v["freeze_stitch"])
        if v["mode"] == "lws":
            kwargs.update(lws_pop_pi=v["lws_pop_pi"], lws_pop_theta=v["lws_pop_theta"], lws_eta_pi=v["lws_eta_pi"])
        if v["loss"] == "dwa":
            kwargs.update(dwa_window=v["dwa_window"], dwa_temperature=v["dwa_temperature"])
        try:
            return TrainConfig(mode=v["mode"], loss=v["loss"], **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_tasks(self) -> list[TaskDataset]:
        v = self.values
        if v["data"] == "synthetic":
            spec = SyntheticTaskSpec(
                dim=v["syn_dim"], n_classes=v["syn_classes"], samples_a=v["syn_samples_a"],
                samples_b=v["syn_samples_b"], rho=v["syn_rho"], noise=v["syn_noise"],
                seed=v["data_seed"], test_fraction=v["test_fraction"], image=v["backbone"] == "conv",
            )
            tasks = list(gen_synthetic_pair(spec))
        else:
            shape = None
            if v["csv_sample_shape"]:
                shape = tuple(int(d) for d in v["csv_sample_shape"].lower().split("x"))
            base = Path(self.source).parent if self.source != "<text>" else Path(".")
            tasks = []
            for i, p in enumerate(s.strip() for s in v["csv_paths"].split(",") if s.strip()):
                path = Path(p) if Path(p).is_absolute() else base / p
                tasks.append(load_csv(path, label_column=v["csv_label_column"] or None,
                                      test_fraction=v["test_fraction"], seed=v["data_seed"] + i,
                                      sample_shape=shape))
        if v["standardize"]:
            tasks = [t.standardized() for t in tasks]
        return tasks

    def build_backbone(self, tasks: list[TaskDataset]) -> BackboneConfig:
        v = self.values
        widths = [t.n_classes for t in tasks]
        shape = tasks[0].sample_shape
        for t in tasks[1:]:
            if t.sample_shape != shape:
                raise ConfigError(f"tasks disagree on sample shape: {shape} vs {t.sample_shape}")
        if v["backbone"] == "dense":
            if len(shape) != 1:
                raise ConfigError(f"dense backbone needs vector samples, got shape {shape}; use backbone = conv")
            return BackboneConfig.dense_variant(shape[0], widths, hidden=v["hidden"], depth=v["depth"])
        return BackboneConfig.conv_variant(shape, widths, hidden=v["hidden"])

    def build_dataset(self, tasks: list[TaskDataset], seed: int | None = None) -> MultiTaskDataset:
        return MultiTaskDataset(tasks, batch_size=self.values["batch_size"],
                                seed=self.values["seed"] if seed is None else seed)


def parse_config(text: str | None = None, path=None) -> ExperimentConfig:
    """Parse and validate a config from ``text`` or the file at ``path``."""
    if (text is None) == (path is None):
        raise ConfigError("pass exactly one of text or path")
    source = "<text>"
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        source = str(path)
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, _SCHEMA[key][0], lineno)

    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r}")
    if values["data"] not in ("synthetic", "csv"):
        raise ConfigError(f"data must be 'synthetic' or 'csv', got {values['data']!r}")
    if values.get("backbone", "dense") not in ("dense", "conv"):
        raise ConfigError(f"backbone must be 'dense' or 'conv', got {values['backbone']!r}")
    active = {values["mode"], values["loss"], values["data"]}
    for key in values:
        group = _SCHEMA[key][2]
        if group is not None and group not in active:
            raise ConfigError(f"key {key!r} only applies when {'data' if group in ('synthetic', 'csv') else 'mode/loss'} = {group}")
    for key, (_, default, group) in _SCHEMA.items():
        if key not in values and (group is None or group in active):
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            values[key] = default
    cfg = ExperimentConfig(values, source)
    cfg.train_config()  # validates ranges and mode/loss names
    return cfg
