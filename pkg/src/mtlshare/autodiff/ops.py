"""Layer primitives recorded on the autodiff tape."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor, _result, relu


def dense(x: Tensor, weights: Tensor, bias: Tensor, activation: str = "none") -> Tensor:
    """``activation(x @ weights + bias)`` for ``x`` of shape (batch, in_dim)."""
    if x.values.ndim != 2 or weights.values.ndim != 2 or bias.values.ndim != 1:
        raise ShapeError(
            f"dense expects input (batch, in), weights (in, out), bias (out,); "
            f"got {x.shape}, {weights.shape}, {bias.shape}"
        )
    if x.shape[1] != weights.shape[0]:
        raise ShapeError(f"dense: input width {x.shape[1]} != weights rows {weights.shape[0]}")
    if bias.shape[0] != weights.shape[1]:
        raise ShapeError(f"dense: bias length {bias.shape[0]} != weights columns {weights.shape[1]}")
    xv, wv = x.values, weights.values

    def backward(g):
        return g @ wv.T, xv.T @ g, g.sum(axis=0)

    out = _result(xv @ wv + bias.values, (x, weights, bias), backward)
    if activation == "relu":
        return relu(out)
    if activation != "none":
        raise ValueError(f"unknown activation {activation!r}")
    return out


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Stride-1, valid-padding cross-correlation plus per-filter bias."""
    if x.values.ndim != 4 or kernel.values.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    o, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {kc}")
    if kh > h or kw > w:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than input {h}x{w}")
    if bias.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({o},)")
    xv = np.ascontiguousarray(x.values)
    kv = np.ascontiguousarray(kernel.values)

    def backward(g):
        return kernels.conv2d_backward(xv, kv, np.ascontiguousarray(g))

    return _result(kernels.conv2d_forward(xv, kv, bias.values), (x, kernel, bias), backward)


def maxpool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping ``size``×``size`` max pooling; trailing rows/cols are dropped."""
    if x.values.ndim != 4:
        raise ShapeError(f"maxpool2d expects a 4-d input, got {x.shape}")
    h, w = x.shape[2], x.shape[3]
    if size > h or size > w:
        raise ShapeError(f"maxpool2d: window {size} larger than input {h}x{w}")
    out, idx = kernels.maxpool2d_forward(np.ascontiguousarray(x.values), size)

    def backward(g):
        return (kernels.maxpool2d_backward(np.ascontiguousarray(g), idx, h, w),)

    return _result(out, (x,), backward)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean over the batch of ``-log softmax(logits)[label]``."""
    if logits.values.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects (batch, classes) logits, got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for a batch of {n}")
    bad = np.flatnonzero((labels < 0) | (labels >= k))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"label {int(labels[i])} at index {i} outside [0, {k})")
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(n), labels]
    loss = float((lse - picked).sum()) / n

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(n), labels] -= 1.0
        return (p * (float(g) / n),)

    return _result(np.array(loss), (logits,), backward)


def cross_stitch(h: Tensor, activations: Sequence[Tensor]) -> list[Tensor]:
    """Mix K same-shape activation maps: output k = sum_j h[k, j] * x_j at every location."""
    xs = tuple(activations)
    k = len(xs)
    if h.shape != (k, k):
        raise ShapeError(f"cross_stitch: mixing matrix {h.shape} does not match {k} activation maps")
    for x in xs[1:]:
        if x.shape != xs[0].shape:
            raise ShapeError(f"cross_stitch: activation shapes {xs[0].shape} and {x.shape} differ")
    stacked = np.stack([x.values for x in xs])
    flat = stacked.reshape(k, -1)
    mixed = (h.values @ flat).reshape(stacked.shape)
    outputs = []
    for row in range(k):
        coeffs = h.values[row].copy()

        def backward(g, row=row, coeffs=coeffs):
            gh = np.zeros((k, k))
            gh[row] = flat @ g.reshape(-1)
            return (gh,) + tuple(c * g for c in coeffs)

        outputs.append(_result(mixed[row], (h,) + xs, backward))
    return outputs
