"""Dense float64 tensors with a reverse-mode autodiff tape.

Every tensor is a 2-D array. Vectors are ``1 x n`` rows. Operations record
themselves on the active :class:`Tape` only when one is open and at least
one input requires a gradient, so inference with frozen parameters runs
without any bookkeeping.

Example::

    w = Tensor(np.ones((3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = sum_all(matmul(x, w))
        tape.backward(loss)
    w.grad
"""

from __future__ import annotations

import os
from typing import Callable, Iterable, Sequence

import numpy as np

DEBUG = bool(os.environ.get("KGPOOL_DEBUG"))

_active_tape: "Tape | None" = None


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar used by the model code
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)


class Tape:
    """Ordered record of the operations executed while it is active.

    Creation order is a topological order of the computation graph, so the
    backward pass simply walks the record in reverse, visiting each node once.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        global _active_tape
        self._prev = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc) -> None:
        global _active_tape
        _active_tape = self._prev

    def record(self, node: Tensor) -> None:
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
        # intermediate grads are not needed after the sweep
        for node in self.nodes:
            node.grad = None
            node._backward = None
            node._parents = ()
        self.nodes.clear()


def active_tape() -> Tape | None:
    return _active_tape


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    for axis in (0, 1):
        if shape[axis] == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    if DEBUG and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by a forward op")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    tape = _active_tape
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        tape.record(out)
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    for sa, sb in zip(a.shape, b.shape):
        if sa != sb and sa != 1 and sb != 1:
            raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------- primitives


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _result(out_data, (a, b), backward)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        _accum(a, g * c)

    return _result(a.data * c, (a,), backward)


def relu(a: Tensor) -> Tensor:
    gate = a.data > 0

    def backward(g):
        _accum(a, g * gate)

    return _result(np.where(gate, a.data, 0.0), (a,), backward)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - y * y))

    return _result(y, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def backward(g):
        _accum(a, g * y * (1.0 - y))

    return _result(y, (a,), backward)


_ELEMENTWISE = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid, "mul": mul, "add": add}


def elementwise(op: str, *args) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


def softmax(z) -> Tensor:
    """Row-wise softmax with max subtraction."""
    z = as_tensor(z)
    if z.data.size == 0:
        return _result(z.data.copy(), (z,), None)
    shifted = z.data - z.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        _accum(z, y * (g - (g * y).sum(axis=1, keepdims=True)))

    return _result(y, (z,), backward)


rowwise_softmax = softmax


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                _accum(p, g[lo:hi] if axis == 0 else g[:, lo:hi])

    return _result(data, parts, backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, g.T)

    return _result(a.data.T.copy(), (a,), backward)


def take_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            _accum(a, full)

    return _result(a.data[idx], (a,), backward)


def mean_rows(a: Tensor) -> Tensor:
    n = a.shape[0]
    if n == 0:
        raise ShapeError("mean over zero rows")

    def backward(g):
        _accum(a, np.broadcast_to(g / n, a.shape))

    return _result(a.data.mean(axis=0, keepdims=True), (a,), backward)


def max_rows(a: Tensor) -> Tensor:
    """Column-wise max; the gradient goes to the first maximising row."""
    if a.shape[0] == 0:
        raise ShapeError("max over zero rows")
    arg = a.data.argmax(axis=0)
    cols = np.arange(a.shape[1])

    def backward(g):
        full = np.zeros_like(a.data)
        full[arg, cols] = g[0]
        _accum(a, full)

    return _result(a.data[arg, cols][None, :], (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, np.broadcast_to(g, a.shape))

    return _result(np.array([[a.data.sum()]]), (a,), backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rng`` is None or ``p`` is 0."""
    if rng is None or p <= 0.0:
        return a
    keep = (rng.random(a.shape) >= p) / (1.0 - p)

    def backward(g):
        _accum(a, g * keep)

    return _result(a.data * keep, (a,), backward)


def nll(probs: Tensor, gold, floor: float = 1e-12) -> Tensor:
    """Mean of ``-log probs[i, gold[i]]`` with probabilities clamped at ``floor``."""
    gold = np.asarray(gold, dtype=np.intp).reshape(-1)
    rows = np.arange(probs.shape[0])
    if gold.shape[0] != probs.shape[0]:
        raise ShapeError(f"nll: {gold.shape[0]} labels for {probs.shape[0]} rows")
    if np.any(gold < 0) or np.any(gold >= probs.shape[1]):
        raise IndexError(f"gold label out of range for {probs.shape[1]} classes")
    picked = probs.data[rows, gold]
    clamped = np.maximum(picked, floor)
    n = len(gold)
    value = -np.log(clamped).sum() / n

    def backward(g):
        full = np.zeros_like(probs.data)
        full[rows, gold] = np.where(picked >= floor, -1.0 / clamped, 0.0) * (g[0, 0] / n)
        _accum(probs, full)

    return _result(np.array([[value]]), (probs,), backward)


# ------------------------------------------------------------------ checking


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    coords: Iterable[int] | None = None,
    floor: float = 1e-12,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` must build a scalar from ``x`` (and anything it closes over).
    ``coords`` restricts the comparison to some flat indices of ``x``.
    The error is ``|a - n| / (|a| + |n| + floor)``; raise ``floor`` towards
    the finite-difference roundoff (about ``1e-16 |f| / h``) when true
    gradients may be exactly zero.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    was = x.requires_grad
    x.requires_grad = True
    saved_grad = x.grad
    x.grad = None
    try:
        with Tape() as tape:
            out = f(x)
            if out.data.size != 1:
                raise ShapeError(f"grad_check needs a scalar function, got {out.shape}")
            tape.backward(out)
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    finally:
        x.grad = saved_grad
        x.requires_grad = was

    flat = x.data.reshape(-1)
    agrad = analytic.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    worst = 0.0
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x).item()
        flat[i] = orig - h
        fm = f(x).item()
        flat[i] = orig
        num = (fp - fm) / (2.0 * h)
        a = agrad[i]
        err = abs(a - num) / (abs(a) + abs(num) + floor)
        worst = max(worst, err)
    return worst
