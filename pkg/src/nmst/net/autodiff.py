"""Minimal reverse-mode differentiation over numpy arrays.

Operations on :class:`Tensor` values are appended to the innermost active
:class:`Tape` (a Wengert list) whenever one of their inputs requires a
gradient.  ``Tape.gradients`` replays the list backwards.

    with Tape() as tape:
        loss = (x @ w).tanh().sum()
    grads = tape.gradients(loss, {"w": w})
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping

import numpy as np

_TAPES: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    # arithmetic
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return sum_(self, axis)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records (output, inputs, backward) triples in execution order."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Adjoints of every recorded tensor, keyed by ``id``."""
        if loss.data.size != 1:
            raise ValueError("backward needs a scalar loss")
        adj: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, fn in reversed(self.nodes):
            g = adj.pop(id(out), None) if out is not loss else adj.get(id(out))
            if g is None:
                continue
            for x, gx in zip(inputs, fn(g)):
                if gx is None or not x.requires_grad:
                    continue
                key = id(x)
                if key in adj:
                    adj[key] = adj[key] + gx
                else:
                    adj[key] = gx
        return adj

    def gradients(self, loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
        """Gradient of ``loss`` for each named parameter.

        Frozen parameters (``requires_grad=False``) and parameters the loss does
        not depend on get exact zeros.
        """
        adj = self.backward(loss)
        out = {}
        for name, p in params.items():
            g = adj.get(id(p)) if p.requires_grad else None
            out[name] = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64)
        return out


def _record(data, inputs: Iterable[Tensor], backward: Callable) -> Tensor:
    inputs = tuple(inputs)
    needs = bool(_TAPES) and any(x.requires_grad for x in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        _TAPES[-1].nodes.append((out, inputs, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a) -> Tensor:
    return _record(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b) -> Tensor:
    """``a`` of shape (..., k) times a matrix ``b`` of shape (k, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2:
        raise ValueError("right operand of matmul must be a matrix")

    def backward(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _record(a.data @ b.data, (a, b), backward)


def transpose(a) -> Tensor:
    return _record(a.data.T, (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None
               for p in parts)


def getitem(a, index) -> Tensor:
    basic = _is_basic(index)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _record(a.data[index], (a,), backward)


def sum_(a, axis=None) -> Tensor:
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _record(a.data.sum(axis=axis), (a,), backward)


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _record(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                   lambda g: tuple(np.split(g, splits, axis=axis)))


def where(mask, a, b) -> Tensor:
    """Elementwise select with a constant boolean ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    a, b = as_tensor(a), as_tensor(b)
    return _record(np.where(mask, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(np.where(mask, g, 0.0), a.shape),
                              _unbroadcast(np.where(mask, 0.0, g), b.shape)))


def cumsum(a, axis=-1) -> Tensor:
    def backward(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return _record(np.cumsum(a.data, axis=axis), (a,), backward)


def tanh(a) -> Tensor:
    y = np.tanh(a.data)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Tensor:
    y = _sigmoid(a.data)
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),))


def log_sigmoid(a) -> Tensor:
    x = a.data
    y = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    return _record(y, (a,), lambda g: (g * _sigmoid(-x),))


def exp(a) -> Tensor:
    y = np.exp(a.data)
    return _record(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


def log1mexp(a) -> Tensor:
    """log(1 - exp(x)) for x < 0."""
    x = a.data
    ln2 = math.log(2.0)
    with np.errstate(divide="ignore"):
        y = np.where(x > -ln2, np.log(-np.expm1(np.minimum(x, 0.0))),
                     np.log1p(-np.exp(np.minimum(x, -ln2))))

    def backward(g):
        # d/dx = -exp(x) / (1 - exp(x)) = -1 / expm1(-x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(g == 0.0, 0.0, -g / np.expm1(-x)),)

    return _record(y, (a,), backward)


def logaddexp(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    y = np.logaddexp(a.data, b.data)

    def backward(g):
        return (_unbroadcast(g * np.exp(a.data - y), a.shape),
                _unbroadcast(g * np.exp(b.data - y), b.shape))

    return _record(y, (a, b), backward)


def log_softmax(a, axis=-1) -> Tensor:
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    y = (x - m) - np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(y) * np.sum(g, axis=axis, keepdims=True),)

    return _record(y, (a,), backward)


def dropout(a, prob: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``prob`` is 0 or ``rng`` is None."""
    if prob <= 0.0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= prob) / (1.0 - prob)
    return mul(a, keep)
