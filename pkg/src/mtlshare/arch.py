"""Single- and multi-task networks over the autodiff core.

Three sharing modes:

* ``hps``: one trunk, one head per task.
* ``sps``: one trunk per task, cross-stitch units mixing same-depth
  activations after every pooling layer (after every weight layer when the
  backbone has no pooling).
* ``lws``: K weight sets per trunk layer; an assignment picks, for every
  (layer, task) cell, which set the task routes through. Heads are never
  part of the pool.

Parameter streams are keyed by task index, so trunk ``k`` of an SPS network,
weight set ``k`` of an LWS network and the single-task network for task ``k``
all start from identical values under the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Prng, ShapeError, Tensor, concat_rows, conv2d, cross_stitch, dense, flatten, he_normal, maxpool2d, relu, rows

MODES = ("stl", "hps", "sps", "lws")


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "dense" | "conv" | "pool"
    size: int  # units, filters, or pool window
    kernel: int = 3

    def __post_init__(self):
        if self.kind not in ("dense", "conv", "pool"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.size < 1 or self.kernel < 1:
            raise ValueError(f"layer sizes must be positive: {self}")


@dataclass(frozen=True)
class BackboneConfig:
    layer_specs: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]
    head_widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "layer_specs", tuple(self.layer_specs))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "head_widths", tuple(int(w) for w in self.head_widths))
        if not any(s.kind != "pool" for s in self.layer_specs):
            raise ValueError("backbone needs at least one shareable weight layer before the heads")
        if not self.head_widths or min(self.head_widths) < 1:
            raise ValueError(f"every task needs a positive class count, got {self.head_widths}")
        self.layer_shapes()  # validate geometry eagerly

    @property
    def n_layers(self) -> int:
        """Weight-bearing layers including the head."""
        return sum(1 for s in self.layer_specs if s.kind != "pool") + 1

    @property
    def weight_layers(self) -> list[int]:
        return [i for i, s in enumerate(self.layer_specs) if s.kind != "pool"]

    @property
    def stitch_points(self) -> list[int]:
        pools = [i for i, s in enumerate(self.layer_specs) if s.kind == "pool"]
        return pools if pools else self.weight_layers

    def layer_shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        """(parameter shape, output shape) per layer; pools have an empty parameter shape."""
        shape = self.input_shape
        out = []
        for spec in self.layer_specs:
            if spec.kind == "dense":
                fan_in = int(np.prod(shape))
                out.append(((fan_in, spec.size), (spec.size,)))
                shape = (spec.size,)
            elif spec.kind == "conv":
                if len(shape) != 3:
                    raise ShapeError(f"conv layer needs (channels, h, w) input, got {shape}")
                c, h, w = shape
                if spec.kernel > h or spec.kernel > w:
                    raise ShapeError(f"conv kernel {spec.kernel} larger than feature map {h}x{w}")
                shape = (spec.size, h - spec.kernel + 1, w - spec.kernel + 1)
                out.append(((spec.size, c, spec.kernel, spec.kernel), shape))
            else:
                if len(shape) != 3:
                    raise ShapeError(f"pool layer needs (channels, h, w) input, got {shape}")
                c, h, w = shape
                if spec.size > h or spec.size > w:
                    raise ShapeError(f"pool window {spec.size} larger than feature map {h}x{w}")
                shape = (c, h // spec.size, w // spec.size)
                out.append(((), shape))
        return out

    @property
    def feature_width(self) -> int:
        return int(np.prod(self.layer_shapes()[-1][1]))

    def for_tasks(self, task_ids: Sequence[int]) -> BackboneConfig:
        return BackboneConfig(self.layer_specs, self.input_shape, tuple(self.head_widths[t] for t in task_ids))

    @classmethod
    def dense_variant(cls, input_dim: int, head_widths: Sequence[int], hidden: int = 64, depth: int = 2) -> BackboneConfig:
        return cls(tuple(LayerSpec("dense", hidden) for _ in range(depth)), (input_dim,), tuple(head_widths))

    @classmethod
    def conv_variant(cls, input_shape: Sequence[int], head_widths: Sequence[int], hidden: int = 64) -> BackboneConfig:
        specs = (
            LayerSpec("conv", 8, 3),
            LayerSpec("pool", 2),
            LayerSpec("conv", 16, 3),
            LayerSpec("pool", 2),
            LayerSpec("dense", hidden),
        )
        return cls(specs, tuple(input_shape), tuple(head_widths))


@dataclass
class CrossStitchUnit:
    h: Tensor
    placement: int  # index into layer_specs after which the unit is applied

    @classmethod
    def initial(cls, k: int, s: float, placement: int, name: str) -> CrossStitchUnit:
        h = np.full((k, k), s, dtype=np.float64)
        np.fill_diagonal(h, 1.0 - s)
        return cls(Tensor(h, requires_grad=True, name=name), placement)


def cross_stitch_forward(unit: CrossStitchUnit, activations: Sequence[Tensor]) -> list[Tensor]:
    """``x~ = H x`` at every location of K same-shape activation maps."""
    return cross_stitch(unit.h, activations)


def _layer_params(spec: LayerSpec, pshape, prng: Prng, prefix: str) -> list[Tensor]:
    if spec.kind == "pool":
        return []
    fan_in = pshape[0] if spec.kind == "dense" else int(np.prod(pshape[1:]))
    out_dim = pshape[1] if spec.kind == "dense" else pshape[0]
    w = Tensor(he_normal(prng, pshape, fan_in), requires_grad=True, name=f"{prefix}.weight")
    b = Tensor(np.zeros(out_dim), requires_grad=True, name=f"{prefix}.bias")
    return [w, b]


@dataclass
class MtlNetwork:
    config: BackboneConfig
    mode: str
    k: int
    trunks: list[list[list[Tensor]]]  # [trunk or weight set][layer index] -> [w, b] or []
    heads: list[list[Tensor]]
    s: float | None = None
    stitches: list[CrossStitchUnit] = field(default_factory=list)

    # -- parameters -----------------------------------------------------------
    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for trunk in self.trunks:
            for layer in trunk:
                out.extend((p.name, p) for p in layer)
        for unit in self.stitches:
            out.append((unit.h.name, unit.h))
        for head in self.heads:
            out.extend((p.name, p) for p in head)
        return out

    def parameters(self, trainable_only: bool = True) -> list[Tensor]:
        return [p for _, p in self.named_parameters() if p.requires_grad or not trainable_only]

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def trunk_parameter_count(self) -> int:
        return sum(p.size for trunk in self.trunks for layer in trunk for p in layer)

    @property
    def n_assignable(self) -> int:
        """Trunk weight layers: the LWS assignment has one row per layer."""
        return len(self.config.weight_layers)

    def freeze_stitches(self) -> None:
        for unit in self.stitches:
            unit.h.requires_grad = False
            unit.h.zero_grad()

    # -- forward --------------------------------------------------------------
    def _apply(self, idx: int, x: Tensor, params: list[Tensor]) -> Tensor:
        spec = self.config.layer_specs[idx]
        if spec.kind == "dense":
            if x.values.ndim > 2:
                x = flatten(x)
            return dense(x, params[0], params[1], activation="relu")
        if spec.kind == "conv":
            return relu(conv2d(x, params[0], params[1]))
        return maxpool2d(x, spec.size)

    def _head(self, task_id: int, x: Tensor) -> Tensor:
        if x.values.ndim > 2:
            x = flatten(x)
        w, b = self.heads[task_id]
        return dense(x, w, b)

    def _check_input(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.shape[1:] != self.config.input_shape:
            raise ShapeError(f"input sample shape {x.shape[1:]} != backbone input {self.config.input_shape}")
        return x

    def _check_assignment(self, assignment) -> np.ndarray | None:
        if self.mode == "lws":
            if assignment is None:
                raise ValueError("LWS forward requires an assignment")
            a = np.asarray(assignment, dtype=np.int64)
            if a.shape != (self.n_assignable, self.k):
                raise ShapeError(f"assignment shape {a.shape} != ({self.n_assignable}, {self.k})")
            if a.min() < 0 or a.max() >= self.k:
                raise ValueError(f"assignment indices must lie in [0, {self.k})")
            return a
        if assignment is not None:
            raise ValueError(f"{self.mode.upper()} forward does not take an assignment")
        return None

    def _route(self, x: Tensor, task_id: int, assignment: np.ndarray) -> Tensor:
        slot = 0
        for idx, spec in enumerate(self.config.layer_specs):
            if spec.kind == "pool":
                x = self._apply(idx, x, [])
            else:
                x = self._apply(idx, x, self.trunks[int(assignment[slot, task_id])][idx])
                slot += 1
        return x

    def _sps_trunks(self, x: Tensor) -> list[Tensor]:
        acts = [x] * self.k
        units = {u.placement: u for u in self.stitches}
        for idx in range(len(self.config.layer_specs)):
            acts = [self._apply(idx, acts[t], self.trunks[t][idx]) for t in range(self.k)]
            if idx in units:
                acts = cross_stitch_forward(units[idx], acts)
        return acts

    def trunk_features(self, x, task_id: int = 0, assignment=None) -> Tensor:
        x = self._check_input(x)
        a = self._check_assignment(assignment)
        if self.mode == "lws":
            return self._route(x, task_id, a)
        if self.mode == "sps":
            return self._sps_trunks(x)[task_id]
        for idx in range(len(self.config.layer_specs)):
            x = self._apply(idx, x, self.trunks[0][idx])
        return x

    def forward(self, x, task_id: int, assignment=None) -> Tensor:
        if not 0 <= task_id < self.k:
            raise ValueError(f"unknown task_id {task_id} for a {self.k}-task network")
        return self._head(task_id, self.trunk_features(x, task_id, assignment))

    def forward_tasks(self, xs: Sequence, assignment=None) -> list[Tensor]:
        """Logits for every task's slice of a multi-task batch.

        HPS and SPS push the union batch through the trunk(s) once; SPS
        needs matched activations of all trunks at every stitch point.
        """
        if len(xs) != self.k:
            raise ValueError(f"expected {self.k} task slices, got {len(xs)}")
        xs = [self._check_input(x) for x in xs]
        a = self._check_assignment(assignment)
        if self.mode == "lws":
            return [self._head(t, self._route(xs[t], t, a)) for t in range(self.k)]
        bounds = np.cumsum([0] + [x.shape[0] for x in xs])
        union = xs[0] if self.k == 1 else concat_rows(xs)
        if self.mode == "sps":
            feats = self._sps_trunks(union)
        else:
            feats = [self.trunk_features(union)] * self.k
        if self.k == 1:
            return [self._head(0, feats[0])]
        return [self._head(t, rows(feats[t], int(bounds[t]), int(bounds[t + 1]))) for t in range(self.k)]


def mtl_forward(net: MtlNetwork, x, task_id: int, assignment=None) -> Tensor:
    return net.forward(x, task_id, assignment)


def build_network(config: BackboneConfig, mode: str, k: int, seed: int, s: float | None = None,
                  task_ids: Sequence[int] | None = None) -> MtlNetwork:
    """Initialize a network for ``k`` tasks.

    ``task_ids`` names the parameter stream (and head width) of each task;
    the single-task network for task ``t`` of a larger problem is
    ``build_network(config, "stl", 1, seed, task_ids=[t])``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if k < 1:
        raise ValueError(f"need at least one task, got K={k}")
    if mode == "stl" and k != 1:
        raise ValueError("STL networks serve exactly one task")
    task_ids = list(range(k)) if task_ids is None else [int(t) for t in task_ids]
    if len(task_ids) != k:
        raise ValueError(f"{len(task_ids)} task ids for K={k}")
    if max(task_ids) >= len(config.head_widths):
        raise ValueError(f"task id {max(task_ids)} has no head width in {config.head_widths}")
    if mode == "sps":
        if s is None:
            raise ValueError("SPS requires a sharing value s")
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"SPS sharing value s must lie in [0, 1], got {s}")
    elif s is not None:
        raise ValueError(f"sharing value s only applies to SPS, not {mode.upper()}")

    prng = Prng(seed)
    shapes = config.layer_shapes()
    n_trunks = 1 if mode in ("stl", "hps") else k
    trunks = []
    for t in range(n_trunks):
        stream = task_ids[t]
        trunk = []
        for idx, spec in enumerate(config.layer_specs):
            trunk.append(_layer_params(spec, shapes[idx][0], prng.child("trunk", stream, idx), f"trunk{t}.layer{idx}"))
        trunks.append(trunk)
    width = config.feature_width
    heads = []
    for t in range(k):
        stream = task_ids[t]
        n_out = config.head_widths[stream]
        w = Tensor(he_normal(prng.child("head", stream), (width, n_out), width), requires_grad=True, name=f"head{t}.weight")
        heads.append([w, Tensor(np.zeros(n_out), requires_grad=True, name=f"head{t}.bias")])
    stitches = []
    if mode == "sps" and k > 1:
        stitches = [CrossStitchUnit.initial(k, s, p, f"stitch{i}.h") for i, p in enumerate(config.stitch_points)]
    return MtlNetwork(config, "hps" if mode == "stl" else mode, k, trunks, heads, s, stitches)
