"""Finite-difference checks over every primitive and composed network."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .arch import BackboneConfig, build_network
from .autodiff import (
    Prng,
    Tensor,
    backward,
    conv2d,
    cross_stitch,
    dense,
    flatten,
    grad_check,
    maxpool2d,
    softmax_cross_entropy,
    total,
)
from .autodiff.tensor import mul
from .losses import Combiner


def _param(prng: Prng, shape, name: str, scale: float = 1.0) -> Tensor:
    return Tensor(prng.normal(shape, scale), requires_grad=True, name=name)


def _network_check(mode: str, backbone: BackboneConfig, prng: Prng, s=None, assignment=None):
    net = build_network(backbone, mode, len(backbone.head_widths), 7, s=s)
    if mode == "sps":
        for unit in net.stitches:  # move off the symmetric init
            unit.h.values += prng.normal(unit.h.shape, 0.1)
    for p in net.parameters():  # nonzero biases, so no relu sits exactly at 0
        if p.name.endswith("bias"):
            p.values += prng.normal(p.shape, 0.1)
    xs = [prng.normal((3, *backbone.input_shape)) for _ in backbone.head_widths]
    ys = [prng.integers(0, w, 3) for w in backbone.head_widths]

    def fn():
        logits = net.forward_tasks(xs, assignment)
        out = softmax_cross_entropy(logits[0], ys[0])
        for z, y in zip(logits[1:], ys[1:]):
            out = out + softmax_cross_entropy(z, y)
        return out

    return fn, net.parameters()


def checks(seed: int = 0) -> dict[str, Callable[[], tuple[Callable[[], Tensor], list[Tensor]]]]:
    """Named factories returning (scalar closure, parameters)."""
    prng = Prng(seed).child("gradsuite")

    def dense_none():
        x, w, b = _param(prng, (4, 3), "x"), _param(prng, (3, 2), "w"), _param(prng, (2,), "b")
        c = prng.normal((4, 2))
        return (lambda: total(mul(dense(x, w, b), Tensor(c)))), [x, w, b]

    def dense_relu_ce():
        x = Tensor(prng.normal((5, 4)))
        w1, b1 = _param(prng, (4, 6), "w1"), _param(prng, (6,), "b1", 0.1)
        w2, b2 = _param(prng, (6, 3), "w2"), _param(prng, (3,), "b2", 0.1)
        y = prng.integers(0, 3, 5)
        return (lambda: softmax_cross_entropy(dense(dense(x, w1, b1, "relu"), w2, b2), y)), [w1, b1, w2, b2]

    def conv():
        x, k, b = _param(prng, (2, 2, 5, 6), "x"), _param(prng, (3, 2, 3, 2), "kernel"), _param(prng, (3,), "bias")
        c = prng.normal((2, 3, 3, 5))
        return (lambda: total(mul(conv2d(x, k, b), Tensor(c)))), [x, k, b]

    def conv_pool_dense():
        x = Tensor(prng.normal((2, 1, 8, 8)))
        k, kb = _param(prng, (3, 1, 3, 3), "kernel"), _param(prng, (3,), "kbias", 0.1)
        w, b = _param(prng, (27, 4), "w"), _param(prng, (4,), "b", 0.1)
        y = prng.integers(0, 4, 2)

        def fn():
            h = maxpool2d(conv2d(x, k, kb), 2)
            return softmax_cross_entropy(dense(flatten(h), w, b), y)

        return fn, [k, kb, w, b]

    def softmax_ce():
        z = _param(prng, (3, 4), "logits")
        y = prng.integers(0, 4, 3)
        return (lambda: softmax_cross_entropy(z, y)), [z]

    def stitch():
        h = _param(prng, (2, 2), "h")
        xa, xb = _param(prng, (2, 3, 2, 2), "xa"), _param(prng, (2, 3, 2, 2), "xb")
        ca, cb = prng.normal((2, 3, 2, 2)), prng.normal((2, 3, 2, 2))

        def fn():
            a, b = cross_stitch(h, [xa, xb])
            return total(mul(a, Tensor(ca))) + total(mul(b, Tensor(cb)))

        return fn, [h, xa, xb]

    dense_bb = BackboneConfig.dense_variant(5, (3, 4), hidden=6)
    conv_bb = BackboneConfig.conv_variant((1, 12, 12), (3, 2), hidden=6)
    lws_assign = np.array([[1, 1], [0, 1]])

    def uncertainty_sigma(method: str):
        def factory():
            comb = Combiner(method, 2)
            comb.set_sigma(np.exp(prng.normal(2, 0.3)))
            losses = [_param(prng, (), "l0"), _param(prng, (), "l1")]
            for l in losses:
                l.values = np.array(np.abs(l.values) + 0.5)
            return (lambda: comb.combine(losses)), [comb.log_sigma] + losses

        return factory

    def dwa():
        comb = Combiner("dwa", 2, window=1)
        comb.observe([1.0, 2.0])
        comb.observe([0.8, 1.9])
        losses = [_param(prng, (), "l0"), _param(prng, (), "l1")]
        return (lambda: comb.combine(losses, advance=False)), losses

    return {
        "dense": dense_none,
        "dense_relu_cross_entropy": dense_relu_ce,
        "conv2d": conv,
        "conv_pool_dense": conv_pool_dense,
        "softmax_cross_entropy": softmax_ce,
        "cross_stitch": stitch,
        "hps_network": lambda: _network_check("hps", dense_bb, prng),
        "sps_network": lambda: _network_check("sps", dense_bb, prng, s=0.2),
        "lws_network": lambda: _network_check("lws", dense_bb, prng, assignment=lws_assign),
        "sps_conv_network": lambda: _network_check("sps", conv_bb, prng, s=0.5),
        "lws_conv_network": lambda: _network_check("lws", conv_bb, prng, assignment=np.array([[0, 1], [1, 1], [1, 0]])),
        "uncertainty_sigma": uncertainty_sigma("uncertainty"),
        "automatic_sigma": uncertainty_sigma("automatic"),
        "dwa_combined": dwa,
    }


def sigma_agreement(method: str, seed: int = 0) -> float:
    """Max |autodiff d/dsigma - analytic d/dsigma| at a random point."""
    prng = Prng(seed).child("sigma", method)
    comb = Combiner(method, 3)
    comb.set_sigma(np.exp(prng.normal(3, 0.5)))
    losses = [Tensor(abs(v) + 0.1) for v in prng.normal(3)]
    comb.log_sigma.zero_grad()
    backward(comb.combine(losses))
    autodiff = comb.log_sigma.grad / comb.sigma  # chain rule through sigma = exp(log sigma)
    return float(np.max(np.abs(autodiff - comb.sigma_gradient(losses))))


def run_suite(seed: int = 0) -> dict[str, float]:
    """Max relative error per check."""
    return {name: grad_check(*factory()).max_error for name, factory in checks(seed).items()}
