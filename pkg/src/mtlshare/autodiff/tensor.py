"""Reverse-mode automatic differentiation over float64 numpy arrays."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand dimensions do not conform."""


class Tensor:
    """An n-dimensional float64 array that records how it was produced.

    Leaf tensors created with ``requires_grad=True`` are parameters; calling
    :func:`backward` on a scalar accumulates into their ``grad`` buffers.
    """

    __slots__ = ("values", "requires_grad", "name", "_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.values.shape:
            raise ShapeError(f"grad shape {value.shape} does not match tensor shape {self.values.shape}")
        self._grad = value.copy()

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(()))

    def detach(self) -> Tensor:
        return Tensor(self.values)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # arithmetic: same-shape tensors or python scalars, no broadcasting
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other) if isinstance(other, Tensor) else -float(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / float(other))

    def __rtruediv__(self, other):
        return mul(reciprocal(self), other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index: int) -> Tensor:
        return take(self, index)


def _result(values: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.values = values
    out.name = None
    out._grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (broadcasting is not supported)")


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        _check_same(a, b, "add")
        return _result(a.values + b.values, (a, b), lambda g: (g, g))
    return _result(a.values + float(b), (a,), lambda g: (g,))


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        _check_same(a, b, "mul")
        av, bv = a.values, b.values
        return _result(av * bv, (a, b), lambda g: (g * bv, g * av))
    c = float(b)
    return _result(a.values * c, (a,), lambda g: (g * c,))


def neg(a: Tensor) -> Tensor:
    return _result(-a.values, (a,), lambda g: (-g,))


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.values
    return _result(out, (a,), lambda g: (-g * out * out,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)
    return _result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    av = a.values
    return _result(np.log(av), (a,), lambda g: (g / av,))


def log1p(a: Tensor) -> Tensor:
    av = a.values
    return _result(np.log1p(av), (a,), lambda g: (g / (1.0 + av),))


def square(a: Tensor) -> Tensor:
    av = a.values
    return _result(av * av, (a,), lambda g: (2.0 * av * g,))


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0.0  # subgradient 0 at the kink
    return _result(np.where(mask, a.values, 0.0), (a,), lambda g: (g * mask,))


def total(a: Tensor) -> Tensor:
    """Sum of all elements as a 0-d tensor (row-major order)."""
    shape = a.shape
    return _result(np.array(a.values.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def take(a: Tensor, index: int) -> Tensor:
    """Element ``index`` of a 1-d tensor as a 0-d tensor."""
    if a.values.ndim != 1:
        raise ShapeError(f"take expects a 1-d tensor, got shape {a.shape}")
    n = a.shape[0]
    if not -n <= index < n:
        raise IndexError(f"index {index} out of range for length {n}")

    def backward(g):
        out = np.zeros(n)
        out[index] = g
        return (out,)

    return _result(np.array(a.values[index]), (a,), backward)


def stack_scalars(items: Sequence[Tensor]) -> Tensor:
    parents = tuple(items)
    values = np.array([t.item() for t in parents])
    return _result(values, parents, lambda g: tuple(np.array(gi) for gi in g))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = a.shape
    return _result(a.values.reshape(shape), (a,), lambda g: (g.reshape(src),))


def flatten(a: Tensor) -> Tensor:
    """Collapse all but the leading (batch) axis."""
    return reshape(a, (a.shape[0], int(np.prod(a.shape[1:], dtype=np.int64))))


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Rows ``start:stop`` along the batch axis."""
    src = a.shape

    def backward(g):
        out = np.zeros(src)
        out[start:stop] = g
        return (out,)

    return _result(a.values[start:stop], (a,), backward)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    parents = tuple(parts)
    if not parents:
        raise ShapeError("concat_rows needs at least one tensor")
    trailing = parents[0].shape[1:]
    for p in parents:
        if p.shape[1:] != trailing:
            raise ShapeError(f"concat_rows: trailing shapes {p.shape[1:]} and {trailing} differ")
    bounds = np.cumsum([0] + [p.shape[0] for p in parents])
    return _result(
        np.concatenate([p.values for p in parents], axis=0),
        parents,
        lambda g: tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parents))),
    )


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(p) into ``p.grad`` for every leaf with ``requires_grad``.

    Repeated calls accumulate; callers zero gradients between steps.
    """
    if loss.values.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad  # materialize
            node._grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
