"""Small reverse-mode autodiff over float64 numpy arrays.

Operations on :class:`Tensor` values are recorded on the innermost active
:class:`GradTape` whenever at least one input requires a gradient. Outside a
tape everything runs as plain numpy, which is how inference is done.

Example::

    p = Tensor([1.0, 2.0])
    with GradTape() as tape:
        tape.watch(p, "p")
        loss = (p * p).sum()
    grads = backward(tape, loss)   # {"p": Tensor([2., 4.])}
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ContractViolation, DimensionError

_ids = itertools.count()
_local = threading.local()

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """Immutable dense float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "id")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr is data:
            arr = arr.view()
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))


@dataclass
class Node:
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class GradTape:
    """Ordered record of primitive ops; nodes are appended in execution order."""

    nodes: list[Node] = field(default_factory=list)
    watched: dict = field(default_factory=dict)

    def watch(self, tensor: Tensor, name=None) -> Tensor:
        tensor.requires_grad = True
        self.watched[tensor.id if name is None else name] = tensor
        return tensor

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def _current_tape() -> GradTape | None:
    tapes = _stack()
    return tapes[-1] if tapes else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    result = Tensor(out)
    tape = _current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        tape.nodes.append(Node(inputs, result, vjp))
    return result


def backward(tape: GradTape, loss: Tensor) -> dict:
    """Reverse sweep over ``tape``; returns {watch key: gradient Tensor}.

    Parameters that did not influence ``loss`` get zero gradients.
    """
    if loss.size != 1 or loss.ndim != 0:
        raise ContractViolation(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.id: np.ones(())}
    for node in reversed(tape.nodes):
        g = grads.pop(node.output.id, None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp.id in grads:
                grads[inp.id] = grads[inp.id] + gi
            else:
                grads[inp.id] = gi
    out = {}
    for key, t in tape.watched.items():
        g = grads.get(t.id)
        out[key] = Tensor(np.zeros(t.shape) if g is None else np.broadcast_to(g, t.shape).copy())
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _record(out, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * out / b.data, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _record(out, (a,), lambda g: (g * 0.5 / out,))


def gelu(a) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    a = as_tensor(a)
    x = a.data
    cdf = ndtr(x)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return _record(x * cdf, (a,), lambda g: (g * (cdf + x * pdf),))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _record(np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------- reductions

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _record(out, (a,), vjp)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def logsumexp(a, axis: int = -1) -> Tensor:
    """Stable log-sum-exp along one axis; entries of -inf are allowed."""
    a = as_tensor(a)
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    out = (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True)))
    weights = np.exp(x - out)
    return _record(np.squeeze(out, axis=axis), (a,),
                   lambda g: (np.expand_dims(g, axis) * weights,))


# ---------------------------------------------------------------- shape ops

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in parts)

    def vjp(g):
        gx = np.zeros(a.shape)
        if basic:
            gx[idx] = g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    return _record(a.data[idx], (a,), vjp)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                   lambda g: tuple(np.split(g, cuts, axis=axis)))


def diagonal(a) -> Tensor:
    """Main diagonal over the last two (square) axes."""
    a = as_tensor(a)
    n = a.shape[-1]
    if a.shape[-2] != n:
        raise DimensionError(f"diagonal needs square trailing axes, got {a.shape}")
    idx = np.arange(n)

    def vjp(g):
        gx = np.zeros(a.shape)
        gx[..., idx, idx] = g
        return (gx,)

    return _record(a.data[..., idx, idx], (a,), vjp)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands need at least two dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(a.data @ b.data, (a, b), vjp)


def conv1d_dilated(x, kernel, dilation: int = 1, causal_pad: bool = True, bias=None) -> Tensor:
    """1-D dilated convolution over the last axis, output length == input length.

    ``x`` is [..., C_in, T] and ``kernel`` is [C_out, C_in, K]. With
    ``causal_pad`` the input is left-padded by (K-1)*dilation zeros, so
    output t reads only inputs <= t and the last tap sits on t itself.
    Otherwise padding is split evenly (K must be odd).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if dilation < 1:
        raise ContractViolation(f"dilation must be >= 1, got {dilation}")
    if kernel.ndim != 3 or x.ndim < 2:
        raise DimensionError(f"bad conv operand ranks: input {x.shape}, kernel {kernel.shape}")
    c_out, c_in, k = kernel.shape
    if x.shape[-2] != c_in:
        raise DimensionError(f"input has {x.shape[-2]} channels, kernel expects {c_in}")
    total = (k - 1) * dilation
    if causal_pad:
        left, right = total, 0
    else:
        if k % 2 == 0:
            raise ContractViolation("non-causal padding needs an odd kernel width")
        left = right = total // 2
    T = x.shape[-1]
    pad = [(0, 0)] * (x.ndim - 1) + [(left, right)]
    xp = np.pad(x.data, pad)
    # taps stacked tap-major: cols[..., j*C_in + c, t] = xp[..., c, t + j*dilation]
    cols = np.concatenate([xp[..., j * dilation: j * dilation + T] for j in range(k)], axis=-2)
    w2 = np.ascontiguousarray(kernel.data.transpose(0, 2, 1).reshape(c_out, k * c_in))
    out = w2 @ cols
    inputs = (x, kernel)
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data[:, None]
        inputs = inputs + (bias,)

    def vjp(g):
        gcols = w2.T @ g
        gxp = np.zeros(xp.shape)
        for j in range(k):
            gxp[..., j * dilation: j * dilation + T] += gcols[..., j * c_in:(j + 1) * c_in, :]
        g_flat = np.moveaxis(g, -2, 0).reshape(c_out, -1)
        cols_flat = np.moveaxis(cols, -2, 0).reshape(k * c_in, -1)
        gw = (g_flat @ cols_flat.T).reshape(c_out, k, c_in).transpose(0, 2, 1)
        grads = [gxp[..., left:left + T], gw]
        if bias is not None:
            grads.append(g_flat.sum(axis=1))
        return grads

    return _record(out, inputs, vjp)


def maxpool1d_time(x, width: int) -> Tensor:
    """Non-overlapping max over the last axis; a trailing partial window is kept."""
    x = as_tensor(x)
    if width < 1:
        raise ContractViolation(f"pool width must be >= 1, got {width}")
    T = x.shape[-1]
    if T < 1:
        raise DimensionError("cannot pool an empty time axis")
    n = -(-T // width)
    padded = np.full(x.shape[:-1] + (n * width,), -np.inf)
    padded[..., :T] = x.data
    windows = padded.reshape(x.shape[:-1] + (n, width))
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gw = np.zeros(windows.shape)
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        return (gw.reshape(padded.shape)[..., :T],)

    return _record(out, (x,), vjp)
