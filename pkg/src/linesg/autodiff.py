"""Minimal dense-tensor reverse-mode autodiff on numpy arrays.

Forward values are float32 by default; every operation also runs in float64
when its inputs are float64, which is how the finite-difference oracles build
their shadow evaluations. Gradients are recorded on an explicit tape: ops
append a backward closure while a `record()` context is active, and
`backward(loss)` replays the tape in exact reverse order, then consumes it.

All execution is single-threaded per tape; tensors outside a recording are
immutable values and safe to share.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "record",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "relu",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "power",
    "clamp_min",
    "reshape",
    "concat",
    "reduce_sum",
    "reduce_mean",
    "gather",
    "scatter_add",
    "pick",
    "softmax",
    "layer_norm",
]


class Tape:
    """Ordered record of executed ops; backward walks it in reverse."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._used = False

    def _append(self, out: "Tensor", parents: tuple["Tensor", ...], bwd: Callable) -> None:
        self._nodes.append((out, parents, bwd))

    def __len__(self) -> int:
        return len(self._nodes)


_TAPES: list[Tape] = []


@contextlib.contextmanager
def record():
    """Activate a fresh tape; ops on grad-requiring tensors record onto it."""
    tape = Tape()
    _TAPES.append(tape)
    try:
        yield tape
    finally:
        _TAPES.pop()


def _active_tape() -> Optional[Tape]:
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """Dense float array; row-major storage, float32 unless built as float64."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float32)
        else:
            arr = np.asarray(data, dtype=dtype)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are promoted to constant tensors
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, float(exponent))


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _check_finite(arr: np.ndarray, op: str) -> None:
    # a non-finite entry propagates into the sum; one pass instead of a bool temp
    if not np.isfinite(arr.sum()):
        if np.all(np.isfinite(arr)):  # the sum itself overflowed
            return
        raise FloatingPointError(f"non-finite values produced by {op}")


def _segment_add(data: np.ndarray, idx: np.ndarray, num_rows: int) -> np.ndarray:
    """Sum rows of `data` into buckets given by `idx` (deterministic order)."""
    out = np.zeros((num_rows,) + data.shape[1:], dtype=data.dtype)
    if data.shape[0] == 0:
        return out
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    boundaries = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    out[sorted_idx[boundaries]] = np.add.reduceat(data[order], boundaries, axis=0)
    return out


def _make(op: str, data: np.ndarray, parents: Sequence[Tensor], bwd: Callable) -> Tensor:
    """Wrap an op result; record the backward closure if a tape is active."""
    _check_finite(data, op)
    tape = _active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape._append(out, tuple(parents), bwd)
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        # copy: g may alias the downstream gradient buffer
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
        if t.grad.shape != t.data.shape:
            t.grad = t.grad.reshape(t.data.shape)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over axes that numpy broadcasting expanded."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; consumes the active tape."""
    tape = _active_tape()
    if tape is None:
        raise RuntimeError("backward called without an active recording")
    if tape._used:
        raise RuntimeError("tape already consumed by a previous backward")
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise RuntimeError("loss does not depend on any recorded tensor")
    tape._used = True
    loss.grad = np.ones_like(loss.data)
    for out, parents, bwd in reversed(tape._nodes):
        if out.grad is None:
            continue
        grads = bwd(out.grad)
        for parent, g in zip(parents, grads):
            if g is not None:
                _accumulate(parent, g)
    tape._nodes.clear()


# ---------------------------------------------------------------------------
# primitive ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make("mul", out, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make("div", out, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _make("matmul", out, (a, b), bwd)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)

    def bwd(g):
        return (g * (a.data > 0),)

    return _make("relu", out, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    # stable two-branch form avoids overflow in exp
    x = a.data
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _make("sigmoid", out, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _make("tanh", out, (a,), bwd)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return _make("exp", out, (a,), bwd)


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)

    def bwd(g):
        return (g / a.data,)

    return _make("log", out, (a,), bwd)


def power(a: Tensor, exponent: float) -> Tensor:
    out = np.power(a.data, exponent)

    def bwd(g):
        return (g * exponent * np.power(a.data, exponent - 1.0),)

    return _make("power", out, (a,), bwd)


def clamp_min(a: Tensor, minimum: float) -> Tensor:
    """Lower clamp; gradient is zero where the clamp is active."""
    out = np.maximum(a.data, minimum)

    def bwd(g):
        return (g * (a.data > minimum),)

    return _make("clamp_min", out, (a,), bwd)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)

    def bwd(g):
        return (g.reshape(a.data.shape),)

    return _make("reshape", out, (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make("concat", out, tuple(tensors), bwd)


def reduce_sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=True),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).astype(a.data.dtype, copy=True),)

    return _make("sum", out, (a,), bwd)


def reduce_mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return reduce_sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """Select rows (axis 0) by integer index; duplicates allowed."""
    idx = np.asarray(index, dtype=np.int64)
    out = a.data[idx]

    def bwd(g):
        return (_segment_add(g, idx, a.data.shape[0]),)

    return _make("gather", out, (a,), bwd)


def scatter_add(a: Tensor, index: np.ndarray, num_rows: int) -> Tensor:
    """Sum rows of `a` into `num_rows` buckets: out[index[i]] += a[i]."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape[0] != a.data.shape[0]:
        raise ValueError("scatter_add: index length must match rows of input")
    out = _segment_add(a.data, idx, num_rows)

    def bwd(g):
        return (g[idx],)

    return _make("scatter_add", out, (a,), bwd)


def pick(a: Tensor, index: np.ndarray) -> Tensor:
    """Per-row column pick: out[i] = a[i, index[i]]."""
    idx = np.asarray(index, dtype=np.int64)
    rows = np.arange(a.data.shape[0])
    out = a.data[rows, idx]

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[rows, idx] = g  # row indices are unique, plain assignment suffices
        return (ga,)

    return _make("pick", out, (a,), bwd)


# ---------------------------------------------------------------------------
# fused ops


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilized softmax along `axis`; output rows sum to 1."""
    if x.data.shape[axis if axis >= 0 else x.data.ndim + axis] == 0:
        raise ValueError("softmax along an empty axis")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make("softmax", out, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize along the last axis, then apply the learned affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    normed = centered * inv
    out = normed * gain.data + bias.data

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        g_gain = (g * normed).sum(axis=lead) if lead else g * normed
        g_bias = g.sum(axis=lead) if lead else g
        dn = g * gain.data
        dx = inv * (dn - dn.mean(axis=-1, keepdims=True)
                    - normed * (dn * normed).mean(axis=-1, keepdims=True))
        return dx, g_gain, g_bias

    return _make("layer_norm", out, (x, gain, bias), bwd)
