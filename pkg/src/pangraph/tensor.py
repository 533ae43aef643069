"""Dense arrays with a tape-based reverse-mode gradient engine.

Every differentiable operation executed while a :class:`GradientTape` is active
and touching a tensor with ``requires_grad`` is appended to that tape.
:func:`backward` replays the tape in reverse, so the record order doubles as a
topological order of the computation.

Layout convention for node features throughout the package is channels-last:
``(batch, time, joints, channels)``.
"""
from __future__ import annotations

import builtins
import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor", "Parameter", "GradientTape", "ShapeError", "NumericError", "backward",
    "as_tensor", "add", "sub", "mul", "div", "neg", "matmul", "sum", "mean", "max",
    "reshape", "permute", "concat", "split", "index", "gather_tokens", "relu",
    "tanh", "sigmoid", "exp", "log", "softmax", "log_softmax", "cross_entropy",
    "linear", "conv_temporal", "max_pool_temporal", "batch_norm", "mse",
    "set_finite_checks",
]


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


_CHECK_FINITE = True


def set_finite_checks(enabled: bool) -> bool:
    """Toggle the NaN/Inf guard on op outputs; returns the previous setting."""
    global _CHECK_FINITE
    prev, _CHECK_FINITE = _CHECK_FINITE, bool(enabled)
    return prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_produced", "__weakref__")

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._produced = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dims(self) -> list[int]:
        return list(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"expected a single-element tensor, got dims {self.dims}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # operators
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return max(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)

    def relu(self):
        return relu(self)

    def tanh(self):
        return tanh(self)


class Parameter(Tensor):
    """Learnable tensor; ``name`` is filled in by the owning module."""

    __slots__ = ("name", "decay")

    def __init__(self, data, name: str = "", dtype=None, decay: bool = True):
        super().__init__(np.array(data, dtype=dtype), requires_grad=True)
        self.name = name
        self.decay = decay
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


class _Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


_TAPES: list["GradientTape"] = []


class GradientTape:
    """Ordered record of differentiable ops; use as a context manager."""

    def __init__(self):
        self.records: list[_Record] = []
        self.consumed = False

    def __enter__(self) -> "GradientTape":
        if self.consumed:
            raise RuntimeError("gradient tape already consumed")
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.records)


def _finish(data: np.ndarray, inputs: tuple[Tensor, ...], grad_fn: Callable, name: str) -> Tensor:
    if _CHECK_FINITE and not np.isfinite(data).all():
        raise NumericError(f"non-finite values produced by {name}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out._produced = True
    if _TAPES and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPES[-1].records.append(_Record(out, inputs, grad_fn))
    return out


def backward(loss: Tensor, tape: GradientTape) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf tensor."""
    if loss.size != 1:
        raise ShapeError(f"loss must be a scalar, got dims {loss.dims}")
    if tape.consumed:
        raise RuntimeError("gradient tape already consumed")
    if not tape.records or not any(r.out is loss for r in reversed(tape.records)):
        raise RuntimeError("loss was not produced under this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        needs = tuple(t.requires_grad for t in rec.inputs)
        for t, gi in zip(rec.inputs, rec.backward(g, needs)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            prev = grads.get(key)
            grads[key] = gi if prev is None else prev + gi
            if not t._produced:
                leaves[key] = t
    for key, t in leaves.items():
        g = grads[key]
        t.grad = g.astype(t.dtype, copy=False) if t.grad is None else t.grad + g
    tape.records.clear()
    tape.consumed = True


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape

    def grad_fn(g, needs):
        return (_unbroadcast(g, sa) if needs[0] else None,
                _unbroadcast(g, sb) if needs[1] else None)

    return _finish(a.data + b.data, (a, b), grad_fn, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape

    def grad_fn(g, needs):
        return (_unbroadcast(g, sa) if needs[0] else None,
                _unbroadcast(-g, sb) if needs[1] else None)

    return _finish(a.data - b.data, (a, b), grad_fn, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def grad_fn(g, needs):
        return (_unbroadcast(g * b.data, a.shape) if needs[0] else None,
                _unbroadcast(g * a.data, b.shape) if needs[1] else None)

    return _finish(a.data * b.data, (a, b), grad_fn, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data

    def grad_fn(g, needs):
        return (_unbroadcast(g / b.data, a.shape) if needs[0] else None,
                _unbroadcast(-g * out / b.data, b.shape) if needs[1] else None)

    return _finish(out, (a, b), grad_fn, "div")


def neg(a: Tensor) -> Tensor:
    return _finish(-a.data, (a,), lambda g, needs: (-g,), "neg")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _finish(x.data * mask, (x,), lambda g, needs: (g * mask,), "relu")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _finish(out, (x,), lambda g, needs: (g * (1.0 - out * out),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return _finish(out, (x,), lambda g, needs: (g * out * (1.0 - out),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _finish(out, (x,), lambda g, needs: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return _finish(np.log(x.data), (x,), lambda g, needs: (g / x.data,), "log")


# ---------------------------------------------------------------- contraction

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes with broadcast batch axes."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.dims} x {b.dims}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul batch dims not broadcastable: {a.dims} x {b.dims}") from exc

    def grad_fn(g, needs):
        # numpy's batched matmul is far slower on strided views than on copies
        g = np.ascontiguousarray(g)
        ga = gb = None
        if needs[0]:
            ga = _unbroadcast(np.matmul(g, np.ascontiguousarray(np.swapaxes(b.data, -1, -2))), a.shape)
        if needs[1]:
            gb = _unbroadcast(np.matmul(np.ascontiguousarray(np.swapaxes(a.data, -1, -2)), g), b.shape)
        return ga, gb

    return _finish(out, (a, b), grad_fn, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """1x1 channel projection: ``x[..., C_in] @ weight[C_in, C_out] (+ bias)``."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear dimension mismatch: {x.dims} x {weight.dims}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    if bias is not None:
        out += bias.data
    out = out.reshape(lead + (weight.shape[1],))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def grad_fn(g, needs):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ weight.data.T).reshape(x.shape) if needs[0] else None
        gw = x2.T @ g2 if needs[1] else None
        if bias is None:
            return gx, gw
        return gx, gw, (g2.sum(axis=0) if needs[2] else None)

    return _finish(out, inputs, grad_fn, "linear")


# ---------------------------------------------------------------- reductions

def _norm_axes(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def grad_fn(g, needs):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return _finish(np.asarray(out), (x,), grad_fn, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = math.prod(x.shape[a] for a in axes)
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def grad_fn(g, needs):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape),)

    return _finish(np.asarray(out), (x,), grad_fn, "mean")


def max(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    full = x.data.max(axis=axes, keepdims=True)

    def grad_fn(g, needs):
        if not keepdims:
            g = np.expand_dims(g, axes)
        hit = x.data == full
        return (hit * (g / hit.sum(axis=axes, keepdims=True)),)

    out = full if keepdims else np.squeeze(full, axis=axes)
    return _finish(np.asarray(out), (x,), grad_fn, "max")


# ---------------------------------------------------------------- shape

def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.dims} to {list(shape)}") from exc
    return _finish(out, (x,), lambda g, needs: (g.reshape(x.shape),), "reshape")


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"invalid permutation {axes} for dims {x.dims}")
    inv = tuple(np.argsort(axes))
    # materialized so that downstream batched matmuls see contiguous operands
    return _finish(np.ascontiguousarray(np.transpose(x.data, axes)), (x,),
                   lambda g, needs: (np.ascontiguousarray(np.transpose(g, inv)),), "permute")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"cannot concat dims {[x.dims for x in xs]} on axis {axis}") from exc
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def grad_fn(g, needs):
        return tuple(np.split(g, bounds, axis=axis))

    return _finish(out, tuple(xs), grad_fn, "concat")


def _is_basic(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in items)


def index(x: Tensor, idx) -> Tensor:
    out = x.data[idx]
    basic = _is_basic(idx)

    def grad_fn(g, needs):
        gx = np.zeros_like(x.data)
        if basic:
            gx[idx] = g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    return _finish(np.array(out, copy=True), (x,), grad_fn, "index")


def split(x: Tensor, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    axis = axis % x.ndim
    if builtins.sum(sizes) != x.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover axis {axis} of {x.dims}")
    parts, start = [], 0
    for n in sizes:
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(start, start + n)
        parts.append(index(x, tuple(sl)))
        start += n
    return parts


def gather_tokens(grid: Tensor, idx: np.ndarray) -> Tensor:
    """Per-frame token gather: ``out[n, t, k] = grid[n, t, idx[n, t, k]]``.

    ``grid`` is ``(N, T, G, C)`` and ``idx`` an integer array ``(N, T, K)``.
    """
    n, t, g, _ = grid.shape
    if idx.shape[:2] != (n, t):
        raise ShapeError(f"index dims {list(idx.shape)} do not match grid dims {grid.dims}")
    ni = np.arange(n)[:, None, None]
    ti = np.arange(t)[None, :, None]
    out = grid.data[ni, ti, idx]

    def grad_fn(gr, needs):
        gg = np.zeros_like(grid.data)
        np.add.at(gg, (ni, ti, idx), gr)
        return (gg,)

    return _finish(out, (grid,), grad_fn, "gather_tokens")


# ---------------------------------------------------------------- softmax / losses

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g, needs):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _finish(out, (x,), grad_fn, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def grad_fn(g, needs):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _finish(out, (x,), grad_fn, "log_softmax")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy expects (N, K) logits and (N,) labels, "
                         f"got {logits.dims} and {list(labels.shape)}")
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(n), labels].mean()

    def grad_fn(g, needs):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (p * (g / n),)

    return _finish(np.asarray(loss, dtype=logits.dtype), (logits,), grad_fn, "cross_entropy")


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mse shape mismatch: {a.dims} vs {b.dims}")
    d = a - b
    return mean(d * d)


# ---------------------------------------------------------------- temporal ops

def _pad_time(x: np.ndarray, before: int, after: int, mode: str, fill: float = 0.0) -> np.ndarray:
    if before == 0 and after == 0:
        return x
    width = [(0, 0)] * x.ndim
    width[1] = (before, after)
    if mode == "circular":
        return np.pad(x, width, mode="wrap")
    if mode == "zeros":
        return np.pad(x, width, mode="constant", constant_values=fill)
    raise ValueError(f"unknown padding mode {mode!r}")


def _unpad_time(g: np.ndarray, before: int, t: int, mode: str) -> np.ndarray:
    if mode == "zeros" or g.shape[1] == t:
        return g[:, before:before + t]
    out = np.zeros(g.shape[:1] + (t,) + g.shape[2:], dtype=g.dtype)
    src = (np.arange(g.shape[1]) - before) % t
    np.add.at(out, (slice(None), src), g)
    return out


def conv_temporal(x: Tensor, weight: Tensor, bias: Tensor | None = None, *, kernel: int,
                  dilation: int = 1, stride: int = 1, pad_mode: str = "zeros") -> Tensor:
    """1-D convolution along axis 1 of ``x (N, T, J, C_in)``.

    ``weight`` has shape ``(kernel * C_in, C_out)`` with the tap index varying
    slowest. Padding keeps ``T_out = ceil(T / stride)`` for odd kernels.
    """
    n, t, j, cin = x.shape
    if weight.shape[0] != kernel * cin:
        raise ShapeError(f"conv weight dims {weight.dims} do not match kernel {kernel} x C_in {cin}")
    pad = dilation * (kernel - 1) // 2
    xp = _pad_time(x.data, pad, pad, pad_mode)
    span = dilation * (kernel - 1)
    t_out = (xp.shape[1] - span - 1) // stride + 1
    stop = stride * (t_out - 1) + 1
    cols = np.concatenate([xp[:, k * dilation:k * dilation + stop:stride] for k in range(kernel)], axis=-1)
    c2 = cols.reshape(-1, kernel * cin)
    out = c2 @ weight.data
    if bias is not None:
        out += bias.data
    out = out.reshape(n, t_out, j, -1)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def grad_fn(g, needs):
        g2 = g.reshape(-1, g.shape[-1])
        gx = None
        if needs[0]:
            gc = (g2 @ weight.data.T).reshape(n, t_out, j, kernel * cin)
            gp = np.zeros_like(xp)
            for k in range(kernel):
                gp[:, k * dilation:k * dilation + stop:stride] += gc[..., k * cin:(k + 1) * cin]
            gx = _unpad_time(gp, pad, t, pad_mode)
        gw = c2.T @ g2 if needs[1] else None
        if bias is None:
            return gx, gw
        return gx, gw, (g2.sum(axis=0) if needs[2] else None)

    return _finish(out, inputs, grad_fn, "conv_temporal")


def max_pool_temporal(x: Tensor, kernel: int = 3, stride: int = 1, pad_mode: str = "zeros") -> Tensor:
    """Max over a temporal window; out-of-range taps never win (padded with -inf)."""
    n, t, j, c = x.shape
    pad = (kernel - 1) // 2
    xp = _pad_time(x.data, pad, pad, pad_mode, fill=-np.inf)
    t_out = (xp.shape[1] - kernel) // stride + 1
    stop = stride * (t_out - 1) + 1
    win = np.stack([xp[:, k:k + stop:stride] for k in range(kernel)], axis=0)
    arg = win.argmax(axis=0)
    out = np.take_along_axis(win, arg[None], axis=0)[0]

    def grad_fn(g, needs):
        gp = np.zeros_like(xp)
        for k in range(kernel):
            gp[:, k:k + stop:stride] += g * (arg == k)
        return (_unpad_time(gp, pad, t, pad_mode),)

    return _finish(out, (x,), grad_fn, "max_pool_temporal")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, *, training: bool, momentum: float = 0.9,
               eps: float = 1e-5) -> Tensor:
    """Normalise over every axis but the last.

    In training mode the running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch`` (unbiased variance).
    """
    axes = tuple(range(x.ndim - 1))
    count = x.size // x.shape[-1]
    if training:
        mu = x.data.mean(axis=axes)
        xc = x.data - mu
        var = (xc * xc).mean(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var * (count / builtins.max(count - 1, 1))
    else:
        mu, var = running_mean, running_var
        xc = x.data - mu
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def grad_fn(g, needs):
        gg = (g * xhat).sum(axis=axes) if needs[1] else None
        gb = g.sum(axis=axes) if needs[2] else None
        gx = None
        if needs[0]:
            gh = g * gamma.data
            if training:
                gx = inv * (gh - gh.mean(axis=axes) - xhat * (gh * xhat).mean(axis=axes))
            else:
                gx = gh * inv
        return gx, gg, gb

    return _finish(out.astype(x.dtype, copy=False), (x, gamma, beta), grad_fn, "batch_norm")
