"""Dense float64 tensors with a reverse-mode automatic differentiation tape.

Every operation materializes a fresh row-major float64 array, verifies the
result is finite, and registers the allocation with the memory meter.  When
gradient recording is enabled and an operand requires gradients, the output
keeps parent links and a backward rule; `backward` replays those rules in
reverse topological order.

Tapes are implicit (parent links), belong to a single training step, and are
never shared across threads.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from .errors import NumericFault, ShapeMismatch
from .memory import METER

_GRAD_ENABLED = True

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715


@contextmanager
def no_grad():
    """Disable tape recording inside the context (evaluation / sampling)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _check_finite(data: np.ndarray, op: str) -> None:
    # NaN and Inf both propagate through the sum, so one reduction suffices.
    if not np.isfinite(data.sum()):
        raise NumericFault(f"non-finite values produced by {op}")


def _contiguous(values) -> np.ndarray:
    """Coerce to a C-contiguous float64 array, preserving 0-d shapes."""
    arr = np.asarray(values, dtype=np.float64)
    if not arr.flags.c_contiguous:
        arr = arr.copy()
    return arr


class Tensor:
    """A float64 array plus optional autodiff bookkeeping."""

    __slots__ = ("data", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        data = _contiguous(values)
        _check_finite(data, "tensor construction")
        self.data = data
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        METER.track(data)

    @classmethod
    def _from_op(cls, data: np.ndarray, parents, backward, op: str) -> "Tensor":
        data = _contiguous(data)
        _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        METER.track(data)
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """The underlying array; treat as read-only."""
        return self.data

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar; scalars route to scale/shift.
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, float(other))

    def __radd__(self, other):
        return shift(self, float(other))

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return shift(self, -float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)


def _broadcastable(sa: tuple, sb: tuple) -> bool:
    for a, b in zip(reversed(sa), reversed(sb)):
        if a != b and a != 1 and b != 1:
            return False
    return True


def _require_broadcastable(a: Tensor, b: Tensor, op: str) -> None:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`; always returns a fresh array."""
    if grad.shape == shape:
        return grad.copy()
    summed = False
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
        summed = True
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] > 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
        summed = True
    return grad if summed else grad.copy()


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_broadcastable(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_broadcastable(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_broadcastable(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        return (c * g,)

    return Tensor._from_op(a.data * c, (a,), backward, "scale")


def shift(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        return (g.copy(),)

    return Tensor._from_op(a.data + c, (a,), backward, "shift")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: inner extents differ for {a.shape} and {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeMismatch(f"transpose needs a 2-D operand, got {a.shape}")

    def backward(g):
        return (np.ascontiguousarray(g.T),)

    return Tensor._from_op(a.data.T, (a,), backward, "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeMismatch(f"cannot reshape {a.shape} (size {a.size}) to {shape}")

    def backward(g):
        return (g.reshape(a.shape).copy(),)

    return Tensor._from_op(a.data.reshape(shape), (a,), backward, "reshape")


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(int(ax) for ax in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeMismatch(f"permute axes {axes} invalid for shape {a.shape}")
    inverse = tuple(int(ax) for ax in np.argsort(axes))

    def backward(g):
        return (np.ascontiguousarray(g.transpose(inverse)),)

    return Tensor._from_op(a.data.transpose(axes), (a,), backward, "permute")


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix multiply over matching leading axes."""
    if a.ndim < 2 or b.ndim < 2 or a.ndim != b.ndim:
        raise ShapeMismatch(f"bmm needs equal-rank stacks of matrices, got {a.shape} and {b.shape}")
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"bmm: shapes {a.shape} and {b.shape} do not conform")

    def backward(g):
        return (np.ascontiguousarray(g @ np.swapaxes(b.data, -1, -2)),
                np.ascontiguousarray(np.swapaxes(a.data, -1, -2) @ g))

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "bmm")


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax along the last axis (numerically stabilized)."""
    x = a.data
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return Tensor._from_op(out, (a,), backward, "softmax")


def gelu(a: Tensor) -> Tensor:
    """GELU in its tanh form."""
    x = a.data
    u = _SQRT_2_OVER_PI * (x + _GELU_CUBIC * x ** 3)
    t = np.tanh(u)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        du = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_CUBIC * x ** 2)
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * du
        return (g * d,)

    return Tensor._from_op(out, (a,), backward, "gelu")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return Tensor._from_op(np.where(mask, a.data, 0.0), (a,), backward, "relu")


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean and unit variance.

    Learnable gain/shift are applied by the caller with `mul`/`add` so each
    primitive keeps a simple backward rule.
    """
    x = a.data
    if x.shape[-1] == 0:
        raise ShapeMismatch("layer_norm over empty last axis")
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return Tensor._from_op(xhat, (a,), backward, "layer_norm")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    axis = axis % max(tensors[0].ndim, 1)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        grads = []
        for i, t in enumerate(tensors):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            grads.append(np.array(g[tuple(sl)]))
        return tuple(grads)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._from_op(data, tuple(tensors), backward, "concat")


def slice_(a: Tensor, key) -> Tensor:
    """Basic (slice/integer) indexing with scatter-back gradients."""
    out_data = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    return Tensor._from_op(out_data, (a,), backward, "slice")


def _reduce(a: Tensor, axis, keepdims: bool, mean: bool, op: str) -> Tensor:
    if mean:
        out_data = a.data.mean(axis=axis, keepdims=keepdims)
        count = a.data.size if axis is None else a.shape[axis % a.ndim]
    else:
        out_data = a.data.sum(axis=axis, keepdims=keepdims)
        count = 1

    def backward(g):
        if axis is None:
            full = np.full(a.shape, float(g) / count if mean else float(g))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            full = np.broadcast_to(gg, a.shape) / count if mean else np.broadcast_to(gg, a.shape).copy()
            if mean:
                full = np.ascontiguousarray(full)
        return (np.ascontiguousarray(full),)

    return Tensor._from_op(np.asarray(out_data), (a,), backward, op)


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return _reduce(a, axis, keepdims, mean=False, op="sum")


def mean_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    if a.size == 0:
        raise ShapeMismatch("mean of an empty tensor")
    return _reduce(a, axis, keepdims, mean=True, op="mean")


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mse_loss: shapes {a.shape} and {b.shape} differ")
    if a.size == 0:
        raise ShapeMismatch("mse_loss of empty tensors")
    diff = a.data - b.data
    out = np.asarray(np.mean(diff ** 2))
    n = a.size

    def backward(g):
        base = (2.0 / n) * float(g) * diff
        return base, -base

    return Tensor._from_op(out, (a, b), backward, "mse_loss")


def backward(loss: Tensor, params=None) -> dict:
    """Reverse-mode sweep from a scalar loss.

    Returns a dict mapping gradient-requiring leaf tensors to their total
    derivatives.  Leaves listed in `params` but unreachable from the loss
    get zero gradients.  Gradients accumulate additively on fan-out.
    """
    if loss.data.size != 1:
        raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {}
    result: dict[Tensor, np.ndarray] = {}

    if loss.requires_grad:
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(loss, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        seed = np.ones_like(loss.data)
        METER.track(seed)
        grads[id(loss)] = seed
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                result[node] = g
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                METER.track(pg)
                acc = grads.get(id(p))
                if acc is None:
                    grads[id(p)] = pg
                else:
                    total = acc + pg
                    METER.track(total)
                    grads[id(p)] = total

    if params is not None:
        for p in params:
            if p not in result:
                zero = np.zeros_like(p.data)
                METER.track(zero)
                result[p] = zero
    return result
