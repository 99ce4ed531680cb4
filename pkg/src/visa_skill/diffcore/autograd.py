"""Tape-free reverse-mode differentiation over numpy arrays.

Every op produces a :class:`Tensor` that remembers its op name, its inputs and
whatever it saved for the backward pass.  Derivatives live in a registry keyed
by op name so they can be inspected, overridden in tests, or found missing.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

# op name -> fn(out, grad_out) -> tuple of input grads (None for "no grad")
DERIVATIVES: dict[str, Callable[["Tensor", np.ndarray], tuple]] = {}

_grad_enabled = True
_check_finite = True


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        msg = f"non-finite values produced by op '{op}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class MissingDerivativeError(RuntimeError):
    pass


def register_derivative(op: str):
    def deco(fn):
        DERIVATIVES[op] = fn
        return fn

    return deco


@contextlib.contextmanager
def override_derivative(op: str, fn):
    """Temporarily swap the derivative of ``op`` (``fn=None`` removes it)."""
    had = op in DERIVATIVES
    old = DERIVATIVES.get(op)
    if fn is None:
        DERIVATIVES.pop(op, None)
    else:
        DERIVATIVES[op] = fn
    try:
        yield
    finally:
        if had:
            DERIVATIVES[op] = old
        else:
            DERIVATIVES.pop(op, None)


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A dense float64 array plus the bookkeeping needed to differentiate it."""

    __slots__ = ("data", "grad", "op", "inputs", "saved", "requires_grad")
    __array_ufunc__ = None  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.op: str | None = None
        self.inputs: tuple[Tensor, ...] = ()
        self.saved = None
        self.requires_grad = requires_grad

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
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar; implementations live in ops.py
    def __add__(self, other):
        return _ops().add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _ops().sub(self, other)

    def __rsub__(self, other):
        return _ops().sub(other, self)

    def __mul__(self, other):
        return _ops().mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _ops().div(self, other)

    def __rtruediv__(self, other):
        return _ops().div(other, self)

    def __neg__(self):
        return _ops().neg(self)

    def __matmul__(self, other):
        return _ops().matmul(self, other)

    def __getitem__(self, index):
        return _ops().getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return _ops().sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return _ops().mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops().transpose(self, axes or None)


class Parameter(Tensor):
    """A named leaf tensor whose gradient is kept between op graphs."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(np.array(data, dtype=DTYPE), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(op: str, data: np.ndarray, inputs: Sequence[Tensor], saved=None) -> Tensor:
    """Wrap an op's output, attaching graph links only when a gradient can flow."""
    data = np.asarray(data, dtype=DTYPE)
    if _check_finite and not np.isfinite(data).all():
        raise NonFiniteError(op)
    out = Tensor(data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.op = op
        out.inputs = tuple(inputs)
        out.saved = saved
    return out


def zero_grad(params: Iterable[Parameter]):
    for p in params:
        p.zero_grad()


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.inputs):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, zero_first: bool = True) -> None:
    """Populate ``.grad`` of every leaf reachable from the scalar ``loss``.

    Reachable parameters have their gradients zeroed first unless
    ``zero_first`` is False, in which case this pass accumulates onto them.
    """
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any parameter")
    order = _topological_order(loss)
    for node in order:
        if node.op is None and node.requires_grad:
            if zero_first or node.grad is None:
                node.grad = np.zeros_like(node.data)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.op is None:
            node.grad = node.grad + g
            continue
        fn = DERIVATIVES.get(node.op)
        if fn is None:
            raise MissingDerivativeError(f"no derivative registered for op '{node.op}'")
        in_grads = fn(node, g)
        for parent, pg in zip(node.inputs, in_grads):
            if pg is None or not parent.requires_grad:
                continue
            if _check_finite and not np.isfinite(pg).all():
                raise NonFiniteError(node.op, "in backward")
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def _ops():
    from . import ops

    return ops
