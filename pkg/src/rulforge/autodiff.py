"""Reverse-mode automatic differentiation over dense float64 arrays.

Values live in :class:`Tensor`. Operations executed while a :class:`Tape`
is active append one node each, so the tape's creation order is already a
topological order of the graph. `Tape.backward(loss)` seeds d(loss)/d(loss)
with 1 and sweeps the nodes in reverse, accumulating gradients additively
into every tensor's ``grad`` (a tensor used twice receives both
contributions). With no active tape the same functions compute forward
values only, which is what inference uses.

Construction of one tape is single-threaded; distinct tapes may run on
distinct threads because the active-tape stack is thread-local.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from . import kernels
from .errors import (
    EmptyInputError,
    KernelTooLargeError,
    NonScalarLossError,
    PoolOutOfRangeError,
    ShapeMismatchError,
)

_ACTIVE = threading.local()


def _tape_stack() -> list:
    stack = getattr(_ACTIVE, "stack", None)
    if stack is None:
        stack = []
        _ACTIVE.stack = stack
    return stack


def _active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A float64 array plus a gradient slot filled in by backward()."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Tape:
    """Append-only operation record; use as a context manager."""

    __slots__ = ("nodes", "_produced")

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable) -> None:
        self.nodes.append((out, inputs, backward))
        self._produced.add(id(out))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(t) into t.grad for every tensor on the tape."""
        if loss.data.size != 1:
            raise NonScalarLossError(
                f"loss must be scalar, got shape {loss.data.shape}"
            )
        if id(loss) not in self._produced:
            raise ValueError("loss tensor was not produced on this tape")
        for out, inputs, _ in self.nodes:
            out.grad = np.zeros_like(out.data)
            for t in inputs:
                t.grad = np.zeros_like(t.data)
        loss.grad = np.ones_like(loss.data)
        for out, _, backward in reversed(self.nodes):
            backward(out.grad)


def _record(out: Tensor, inputs: tuple[Tensor, ...], make_backward) -> Tensor:
    tape = _active_tape()
    if tape is not None:
        tape.record(out, inputs, make_backward())
    return out


def add(a, b) -> Tensor:
    """Elementwise sum; also accepts a 1-D bias broadcast over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    bias = a.shape != b.shape
    if bias and not (b.data.ndim == 1 and a.shape and a.shape[-1] == b.shape[0]):
        raise ShapeMismatchError(f"add: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)

    def make():
        if bias:
            width = b.shape[0]

            def backward(g):
                a.grad += g
                b.grad += g.reshape(-1, width).sum(axis=0)
        else:
            def backward(g):
                a.grad += g
                b.grad += g
        return backward

    return _record(out, (a, b), make)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"sub: {a.shape} vs {b.shape}")
    out = Tensor(a.data - b.data)

    def make():
        def backward(g):
            a.grad += g
            b.grad -= g
        return backward

    return _record(out, (a, b), make)


def mul(a, b) -> Tensor:
    """Hadamard product of same-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"mul: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)

    def make():
        def backward(g):
            a.grad += g * b.data
            b.grad += g * a.data
        return backward

    return _record(out, (a, b), make)


def relu(x) -> Tensor:
    """max(x, 0); the subgradient at exactly 0 is taken as 0."""
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))

    def make():
        mask = x.data > 0.0

        def backward(g):
            x.grad += g * mask
        return backward

    return _record(out, (x,), make)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    out = Tensor(s)

    def make():
        def backward(g):
            x.grad += g * s * (1.0 - s)
        return backward

    return _record(out, (x,), make)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    out = Tensor(t)

    def make():
        def backward(g):
            x.grad += g * (1.0 - t * t)
        return backward

    return _record(out, (x,), make)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def make():
        def backward(g):
            a.grad += g @ b.data.T
            b.grad += a.data.T @ g
        return backward

    return _record(out, (a, b), make)


def conv1d(x, w, b) -> Tensor:
    """Valid 1-D convolution over (batch, length, channels) input."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 3 or w.data.ndim != 3 or b.data.ndim != 1:
        raise ShapeMismatchError(
            f"conv1d: x{x.shape}, w{w.shape}, b{b.shape}"
        )
    k = w.shape[0]
    if k > x.shape[1]:
        raise KernelTooLargeError(
            f"kernel {k} longer than sequence {x.shape[1]}"
        )
    if w.shape[1] != x.shape[2] or w.shape[2] != b.shape[0]:
        raise ShapeMismatchError(
            f"conv1d channels: x{x.shape}, w{w.shape}, b{b.shape}"
        )
    out = Tensor(kernels.conv1d_forward(x.data, w.data, b.data))

    def make():
        def backward(g):
            gx, gw, gb = kernels.conv1d_backward(x.data, w.data, g)
            x.grad += gx
            w.grad += gw
            b.grad += gb
        return backward

    return _record(out, (x, w, b), make)


def maxpool1d(x, pool: int) -> Tensor:
    """Non-overlapping max pooling along the time axis."""
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ShapeMismatchError(f"maxpool1d expects 3-D input, got {x.shape}")
    if pool < 1:
        raise PoolOutOfRangeError(f"pool must be >= 1, got {pool}")
    values, idx = kernels.maxpool1d_forward(x.data, pool)
    out = Tensor(values)

    def make():
        length = x.shape[1]

        def backward(g):
            x.grad += kernels.maxpool1d_backward(idx, g, length, pool)
        return backward

    return _record(out, (x,), make)


def mse_loss(pred, target) -> Tensor:
    """Mean squared error of two equal-length vectors."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.data.ndim != 1 or pred.shape != target.shape:
        raise ShapeMismatchError(f"mse_loss: {pred.shape} vs {target.shape}")
    n = pred.data.size
    if n == 0:
        raise EmptyInputError("mse_loss of empty vectors")
    diff = pred.data - target.data
    out = Tensor((diff @ diff) / n)

    def make():
        def backward(g):
            scale = g * (2.0 / n)
            pred.grad += scale * diff
            target.grad -= scale * diff
        return backward

    return _record(out, (pred, target), make)


def tensor_sum(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.sum())

    def make():
        def backward(g):
            x.grad += g
        return backward

    return _record(out, (x,), make)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape))

    def make():
        original = x.data.shape

        def backward(g):
            x.grad += g.reshape(original)
        return backward

    return _record(out, (x,), make)


def index_time(x, t: int) -> Tensor:
    """Slice one time step from a (batch, time, features) tensor."""
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ShapeMismatchError(f"index_time expects 3-D input, got {x.shape}")
    if not (0 <= t < x.shape[1]):
        raise ShapeMismatchError(f"time index {t} out of range {x.shape[1]}")
    out = Tensor(x.data[:, t, :].copy())

    def make():
        def backward(g):
            x.grad[:, t, :] += g
        return backward

    return _record(out, (x,), make)


def grad_check(
    fn: Callable[..., Tensor], point: Sequence[np.ndarray], h: float = 1e-5
) -> float:
    """Worst relative error between tape gradients and central differences.

    `fn` maps tensors to a scalar tensor and must be side-effect free; it is
    re-evaluated forward-only (no tape) 2 times per coordinate. The error of
    coordinate i is |analytic - fd| / max(1, |analytic|).
    """
    tensors = [Tensor(np.asarray(p, dtype=np.float64)) for p in point]
    with Tape() as tape:
        out = fn(*tensors)
    tape.backward(out)
    analytic = [t.grad.copy() for t in tensors]
    worst = 0.0
    for tensor, grads in zip(tensors, analytic):
        flat = tensor.data.reshape(-1)
        gflat = grads.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            hi = float(fn(*tensors).data)
            flat[i] = saved - h
            lo = float(fn(*tensors).data)
            flat[i] = saved
            fd = (hi - lo) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(1.0, abs(gflat[i]))
            worst = max(worst, err)
    return worst
