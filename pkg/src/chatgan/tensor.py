"""numpy-backed dense tensors with reverse-mode automatic differentiation.

Storage defaults to float32; ``set_default_dtype(np.float64)`` switches the
whole engine to 64-bit (gradient checks run in that mode). Graphs are built
and consumed by a single thread; a graph can be backpropagated once.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "GraphError",
    "set_default_dtype",
    "default_dtype",
    "set_debug_checks",
    "debug_checks_enabled",
    "no_grad",
    "grad_enabled",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "softmax",
    "log",
    "exp",
    "tanh",
    "relu",
    "tsum",
    "tmean",
    "transpose",
    "reshape",
    "concat",
    "embedding_lookup",
    "layer_norm_core",
]

_DEFAULT_DTYPE = np.float32
_DEBUG_CHECKS = False

# grad mode is thread-local so concurrent read-only inference cannot disturb
# a training thread's graph recording
_MODE = threading.local()


def _mode_enabled() -> bool:
    return getattr(_MODE, "grad", True)


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class GraphError(RuntimeError):
    """Backward-graph misuse: non-scalar loss or double backward."""


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dt}; use float32 or float64")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


def set_debug_checks(enabled: bool) -> None:
    """Toggle non-finite input detection on every op (debug mode)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def debug_checks_enabled() -> bool:
    return _DEBUG_CHECKS


@contextlib.contextmanager
def no_grad():
    """Suspend graph recording (inference mode)."""
    prev = _mode_enabled()
    _MODE.grad = False
    try:
        yield
    finally:
        _MODE.grad = prev


def grad_enabled() -> bool:
    return _mode_enabled()


class Tensor:
    """n-dimensional float array with an optional gradient and graph node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_spent")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype != _DEFAULT_DTYPE:
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = ""
        self._spent = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f", op={self._op!r}" if self._op else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # arithmetic sugar; constants wrap as non-grad tensors
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)

    def log(self):
        return log(self)

    def exp(self):
        return exp(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _debug_check(op: str, *tensors: Tensor) -> None:
    if _DEBUG_CHECKS:
        for i, t in enumerate(tensors):
            if not np.all(np.isfinite(t.data)):
                raise FloatingPointError(f"{op}: non-finite values in input {i}")


def _result(data, op: str, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data)
    out.grad = None
    out._spent = False
    live = tuple(p for p in parents if p.requires_grad) if _mode_enabled() else ()
    if live:
        out.requires_grad = True
        out._parents = live
        out._backward = backward_fn
        out._op = op
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        out._op = ""
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _broadcast_shape(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    # right-aligned; mismatched axes only where one side is 1 (leading-1 rule)
    out = []
    for i in range(1, max(len(a), len(b)) + 1):
        da = a[-i] if i <= len(a) else 1
        db = b[-i] if i <= len(b) else 1
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: shapes {a} and {b} are not broadcastable")
        out.append(max(da, db))
    return tuple(reversed(out))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _elementwise_binary(op: str, a, b, fwd, da_fn, db_fn) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _debug_check(op, a, b)
    _broadcast_shape(op, a.shape, b.shape)
    data = fwd(a.data, b.data)
    need_a, need_b = a.requires_grad, b.requires_grad

    def backward_fn(g):
        if need_a:
            _accum(a, _unbroadcast(da_fn(g, a.data, b.data), a.data.shape))
        if need_b:
            _accum(b, _unbroadcast(db_fn(g, a.data, b.data), b.data.shape))

    return _result(data, op, (a, b), backward_fn)


def add(a, b) -> Tensor:
    return _elementwise_binary("add", a, b, lambda x, y: x + y,
                               lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _elementwise_binary("sub", a, b, lambda x, y: x - y,
                               lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _elementwise_binary("mul", a, b, lambda x, y: x * y,
                               lambda g, x, y: g * y, lambda g, x, y: g * x)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _debug_check("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >= 2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ: {a.shape} vs {b.shape}")
    _broadcast_shape("matmul", a.shape[:-2], b.shape[:-2])
    data = a.data @ b.data
    need_a, need_b = a.requires_grad, b.requires_grad

    def backward_fn(g):
        if need_a:
            _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        if need_b:
            _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _result(data, "matmul", (a, b), backward_fn)


def _elementwise_unary(op: str, x, fwd, dx_fn) -> Tensor:
    x = _as_tensor(x)
    _debug_check(op, x)
    data = fwd(x.data)

    def backward_fn(g):
        _accum(x, dx_fn(g, x.data, data))

    return _result(data, op, (x,), backward_fn)


def log(x) -> Tensor:
    return _elementwise_unary("log", x, np.log, lambda g, xd, out: g / xd)


def exp(x) -> Tensor:
    return _elementwise_unary("exp", x, np.exp, lambda g, xd, out: g * out)


def tanh(x) -> Tensor:
    return _elementwise_unary("tanh", x, np.tanh, lambda g, xd, out: g * (1.0 - out * out))


def relu(x) -> Tensor:
    return _elementwise_unary("relu", x, lambda v: np.maximum(v, 0.0),
                              lambda g, xd, out: g * (xd > 0))


def softmax(x) -> Tensor:
    """Softmax over the last axis, max-shifted for stability."""
    x = _as_tensor(x)
    _debug_check("softmax", x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward_fn(g):
        # dx = (g - sum(g*y)) * y, row-wise over the last axis
        dot = (g * data).sum(axis=-1, keepdims=True)
        _accum(x, (g - dot) * data)

    return _result(data, "softmax", (x,), backward_fn)


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = _as_tensor(x)
    _debug_check("sum", x)
    data = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def backward_fn(g):
        if axis is None:
            _accum(x, np.broadcast_to(g.reshape((1,) * x.data.ndim), x.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(ge, x.data.shape).copy())

    return _result(data, "sum", (x,), backward_fn)


def tmean(x, axis=None, keepdims=False) -> Tensor:
    x = _as_tensor(x)
    _debug_check("mean", x)
    data = np.asarray(x.data.mean(axis=axis, keepdims=keepdims))
    n = x.data.size if axis is None else x.data.shape[axis]

    def backward_fn(g):
        scale = 1.0 / n
        if axis is None:
            _accum(x, np.broadcast_to((g * scale).reshape((1,) * x.data.ndim), x.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(ge * scale, x.data.shape).copy())

    return _result(data, "mean", (x,), backward_fn)


def transpose(x, axes=None) -> Tensor:
    x = _as_tensor(x)
    _debug_check("transpose", x)
    data = np.transpose(x.data, axes)
    inv = None if axes is None else tuple(np.argsort(axes))

    def backward_fn(g):
        _accum(x, np.transpose(g, inv))

    return _result(data, "transpose", (x,), backward_fn)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    _debug_check("reshape", x)
    try:
        data = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from e

    def backward_fn(g):
        _accum(x, g.reshape(x.data.shape))

    return _result(data, "reshape", (x,), backward_fn)


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: need at least one input")
    _debug_check("concat", *parts)
    nd = parts[0].ndim
    for p in parts[1:]:
        if p.ndim != nd or any(
            i != (axis % nd) and p.shape[i] != parts[0].shape[i] for i in range(nd)
        ):
            raise ShapeError(
                f"concat: incompatible shapes {[q.shape for q in parts]} along axis {axis}"
            )
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    flags = [p.requires_grad for p in parts]

    def backward_fn(g):
        for p, f, s, e in zip(parts, flags, offsets[:-1], offsets[1:]):
            if f:
                idx = [slice(None)] * g.ndim
                idx[axis % g.ndim] = slice(int(s), int(e))
                _accum(p, g[tuple(idx)])

    return _result(data, "concat", parts, backward_fn)


def _getitem(x: Tensor, key) -> Tensor:
    _debug_check("slice", x)
    data = x.data[key]

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        _accum(x, gx)

    return _result(np.asarray(data), "slice", (x,), backward_fn)


def embedding_lookup(table, ids) -> Tensor:
    """Rows of `table` selected by integer ids; grad scatters back into the table."""
    table = _as_tensor(table)
    _debug_check("embedding-lookup", table)
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding-lookup: ids must be integers, got dtype {ids.dtype}")
    if table.ndim != 2:
        raise ShapeError(f"embedding-lookup: table must be 2-d, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(
            f"embedding-lookup: index out of range [0, {table.shape[0]}): "
            f"min={int(ids.min())}, max={int(ids.max())}"
        )
    data = table.data[ids]

    def backward_fn(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        _accum(table, gt)

    return _result(data, "embedding-lookup", (table,), backward_fn)


def layer_norm_core(x, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    x = _as_tensor(x)
    _debug_check("layer-norm-core", x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    data = xc * inv

    def backward_fn(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * data).mean(axis=-1, keepdims=True)
        _accum(x, inv * (g - gm - data * gym))

    return _result(data, "layer-norm-core", (x,), backward_fn)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order  # parents precede consumers


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; accumulates into leaf grads."""
    if loss.data.size != 1:
        raise GraphError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _topo_order(loss)
    if any(n._spent for n in order):
        raise GraphError("backward: graph already consumed (double backward is unsupported)")
    if loss.grad is None:
        loss.grad = np.zeros_like(loss.data)
    loss.grad += np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            if node.grad is not None:
                node._backward(node.grad)
            node._spent = True
