"""Differentiable ops used by the pipeline, each with a registered derivative."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autograd import Tensor, as_tensor, make_result, register_derivative


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` back down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise binary -------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result("add", a.data + b.data, (a, b))


@register_derivative("add")
def _(out, g):
    a, b = out.inputs
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result("sub", a.data - b.data, (a, b))


@register_derivative("sub")
def _(out, g):
    a, b = out.inputs
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result("mul", a.data * b.data, (a, b))


@register_derivative("mul")
def _(out, g):
    a, b = out.inputs
    ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
    gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
    return ga, gb


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result("div", a.data / b.data, (a, b))


@register_derivative("div")
def _(out, g):
    a, b = out.inputs
    ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
    gb = _unbroadcast(-g * out.data / b.data, b.shape) if b.requires_grad else None
    return ga, gb


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result("neg", -a.data, (a,))


@register_derivative("neg")
def _(out, g):
    return (-g,)


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes (both operands >= 2-D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    return make_result("matmul", np.matmul(a.data, b.data), (a, b))


@register_derivative("matmul")
def _(out, g):
    a, b = out.inputs
    ga = gb = None
    if a.requires_grad:
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
    if b.requires_grad:
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
    return ga, gb


# -- elementwise unary --------------------------------------------------------

def exp(a) -> Tensor:
    a = as_tensor(a)
    return make_result("exp", np.exp(a.data), (a,))


@register_derivative("exp")
def _(out, g):
    return (g * out.data,)


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):  # reported as NonFiniteError instead
        out = np.log(a.data)
    return make_result("log", out, (a,))


@register_derivative("log")
def _(out, g):
    return (g / out.inputs[0].data,)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    return make_result("tanh", np.tanh(a.data), (a,))


@register_derivative("tanh")
def _(out, g):
    return (g * (1.0 - out.data**2),)


def _logistic(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    return make_result("sigmoid", _logistic(a.data), (a,))


@register_derivative("sigmoid")
def _(out, g):
    return (g * out.data * (1.0 - out.data),)


def relu(a) -> Tensor:
    a = as_tensor(a)
    return make_result("relu", np.maximum(a.data, 0.0), (a,))


@register_derivative("relu")
def _(out, g):
    return (g * (out.inputs[0].data > 0),)


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return make_result("abs", np.abs(a.data), (a,))


@register_derivative("abs")
def _(out, g):
    return (g * np.sign(out.inputs[0].data),)


def square(a) -> Tensor:
    a = as_tensor(a)
    return make_result("square", a.data * a.data, (a,))


@register_derivative("square")
def _(out, g):
    return (2.0 * g * out.inputs[0].data,)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; the gradient is zero wherever clamping was active."""
    a = as_tensor(a)
    return make_result("clip", np.clip(a.data, lo, hi), (a,), saved=(lo, hi))


@register_derivative("clip")
def _(out, g):
    lo, hi = out.saved
    x = out.inputs[0].data
    return (g * ((x >= lo) & (x <= hi)),)


# -- reductions ---------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    return make_result("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,), saved=(axes, keepdims))


@register_derivative("sum")
def _(out, g):
    axes, keepdims = out.saved
    x = out.inputs[0]
    if not keepdims:
        g = np.expand_dims(g, axes)
    return (np.broadcast_to(g, x.shape).copy(),)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return make_result("mean", a.data.mean(axis=axes, keepdims=keepdims), (a,), saved=(axes, keepdims, count))


@register_derivative("mean")
def _(out, g):
    axes, keepdims, count = out.saved
    x = out.inputs[0]
    if not keepdims:
        g = np.expand_dims(g, axes)
    return (np.broadcast_to(g / count, x.shape).copy(),)


def max_argmax(a, axis: int) -> tuple[Tensor, np.ndarray]:
    """Maximum along one axis; the gradient goes only to the argmax element.

    Ties go to the lowest index, as ``np.argmax`` does.
    """
    a = as_tensor(a)
    axis = axis % a.ndim
    idx = np.argmax(a.data, axis=axis)
    vals = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    return make_result("max", vals, (a,), saved=(axis, idx)), idx


@register_derivative("max")
def _(out, g):
    axis, idx = out.saved
    x = out.inputs[0]
    gx = np.zeros_like(x.data)
    np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
    return (gx,)


def sort(a, axis: int = -1) -> tuple[Tensor, np.ndarray]:
    """Ascending sort; returns values and the source permutation.

    Stable, so equal values keep their source order (lowest index first).
    """
    a = as_tensor(a)
    axis = axis % a.ndim
    perm = np.argsort(a.data, axis=axis, kind="stable")
    vals = np.take_along_axis(a.data, perm, axis=axis)
    return make_result("sort", vals, (a,), saved=(axis, perm)), perm


@register_derivative("sort")
def _(out, g):
    axis, perm = out.saved
    gx = np.zeros_like(out.inputs[0].data)
    np.put_along_axis(gx, perm, g, axis=axis)
    return (gx,)


def l2_normalize(a, axis: int = -1, eps: float = 1e-8) -> Tensor:
    """x / ||x|| along ``axis``; vectors with norm below ``eps`` map to exact zeros
    and pass no gradient."""
    a = as_tensor(a)
    norm = np.sqrt((a.data**2).sum(axis=axis, keepdims=True))
    live = norm >= eps
    safe = np.where(live, norm, 1.0)
    out = np.where(live, a.data / safe, 0.0)
    return make_result("l2_normalize", out, (a,), saved=(axis, safe, live))


@register_derivative("l2_normalize")
def _(out, g):
    axis, safe, live = out.saved
    y = out.data
    proj = (g * y).sum(axis=axis, keepdims=True)
    return (np.where(live, (g - y * proj) / safe, 0.0),)


# -- shape manipulation -------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return make_result("reshape", a.data.reshape(shape), (a,))


@register_derivative("reshape")
def _(out, g):
    return (g.reshape(out.inputs[0].shape),)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    return make_result("transpose", a.data.transpose(axes), (a,), saved=tuple(axes))


@register_derivative("transpose")
def _(out, g):
    return (g.transpose(np.argsort(out.saved)),)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    return make_result("getitem", a.data[index], (a,), saved=index)


@register_derivative("getitem")
def _(out, g):
    gx = np.zeros_like(out.inputs[0].data)
    index = out.saved if isinstance(out.saved, tuple) else (out.saved,)
    if all(isinstance(i, (slice, int)) or i is Ellipsis or i is None for i in index):
        gx[out.saved] = g  # basic indexing never repeats an element
    else:
        np.add.at(gx, out.saved, g)
    return (gx,)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    axis = axis % ts[0].ndim
    sizes = [t.shape[axis] for t in ts]
    return make_result("concat", np.concatenate([t.data for t in ts], axis=axis), ts, saved=(axis, sizes))


@register_derivative("concat")
def _(out, g):
    axis, sizes = out.saved
    return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    axis = axis % (ts[0].ndim + 1)
    return make_result("stack", np.stack([t.data for t in ts], axis=axis), ts, saved=axis)


@register_derivative("stack")
def _(out, g):
    axis = out.saved
    return tuple(np.moveaxis(g, axis, 0))


def avg_pool2x2(a) -> Tensor:
    """2x2 spatial average over axes (-3, -2) of a channels-last tensor."""
    a = as_tensor(a)
    *lead, h, w, c = a.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2x2 needs even spatial extents, got {h}x{w}")
    x = a.reshape(*lead, h // 2, 2, w // 2, 2, c)
    return mean(x, axis=(-4, -2))
