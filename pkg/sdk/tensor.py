"""Dense float64 tensors with reverse-mode automatic differentiation."""
import threading
from collections.abc import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from sdk.errors import GraphError, NonFiniteError, ShapeError

Backward = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


class no_grad:
    """Context manager that stops recording ops on the current thread."""

    def __enter__(self):
        self._prev = is_grad_enabled()
        _state.enabled = False

    def __exit__(self, *exc):
        _state.enabled = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: "Tensor", b: "Tensor") -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


class Tensor:
    # Makes `ndarray <op> Tensor` dispatch to the Tensor's reflected operator.
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, *, _parents: tuple = (), _op: str = "leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"{_op} produced non-finite values (shape {arr.shape})")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward: Backward | None = None
        self._op = _op
        self._consumed = False

    # --- basic properties ---

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return self.swapaxes(-1, -2)

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag})"

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item: expected a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # --- autodiff ---

    def backward(self):
        if self.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("backward: loss does not depend on any requires_grad leaf")
        if self._consumed:
            raise GraphError("backward: this graph was already differentiated; rebuild the forward pass")

        record = computation_record(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(record):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
        self._consumed = True

    # --- operators ---

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return index_select(self, index)

    # --- method forms ---

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis, keepdims)

    def max(self, axis: int = -1) -> tuple["Tensor", np.ndarray]:
        return reduce_max(self, axis)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def take(self, indices, axis: int) -> "Tensor":
        return take(self, indices, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def from_op(data, parents: Sequence[Tensor], op: str, backward: Backward) -> Tensor:
    """Wrap an op result, recording it only when grad mode is on and a parent needs it."""
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track, _parents=tuple(parents) if track else (), _op=op)
    if track:
        out._backward = backward
    return out


def computation_record(root: Tensor) -> list[Tensor]:
    """Topologically ordered nodes that `root` depends on (parents before children)."""
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


# --- elementwise binary ---

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return from_op(a.data + b.data, (a, b), "add",
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return from_op(a.data - b.data, (a, b), "sub",
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return from_op(a.data * b.data, (a, b), "mul",
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return from_op(out, (a, b), "div", backward)


def power(a: Tensor, exponent: float) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data ** exponent
    return from_op(out, (a,), "pow", lambda g: (g * exponent * a.data ** (exponent - 1),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return from_op(out, (a, b), "matmul", backward)


# --- elementwise unary ---

def relu(x: Tensor) -> Tensor:
    # Exact zero takes the zero branch of the subgradient.
    mask = x.data > 0
    return from_op(np.where(mask, x.data, 0.0), (x,), "relu", lambda g: (g * mask,))


def softplus(x: Tensor) -> Tensor:
    return from_op(np.logaddexp(0.0, x.data), (x,), "softplus",
                   lambda g: (g * _sigmoid(x.data),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def sqrt(x: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)
    positive = out > 0

    def backward(g):
        # d sqrt(x)/dx is taken as 0 at x == 0 so zero features stay differentiable.
        safe = np.where(positive, out, 1.0)
        return (np.where(positive, g / (2.0 * safe), 0.0),)

    return from_op(out, (x,), "sqrt", backward)


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return from_op(out, (x,), "exp", lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return from_op(out, (x,), "log", lambda g: (g / x.data,))


# --- reductions and shape ops ---

def _normalize_axis(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return from_op(out, (x,), "sum", backward)


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return reduce_sum(x, axis, keepdims) * (1.0 / count)


def reduce_max(x: Tensor, axis: int = -1) -> tuple[Tensor, np.ndarray]:
    """Max over one axis; returns the values and the argmax (lowest index on ties)."""
    axis = axis % x.ndim
    index = np.argmax(x.data, axis=axis)
    expanded = np.expand_dims(index, axis)
    out = np.take_along_axis(x.data, expanded, axis=axis).squeeze(axis)

    def backward(g):
        grad = np.zeros_like(x.data)
        np.put_along_axis(grad, expanded, np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return from_op(out, (x,), "max", backward), index


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None
    return from_op(out, (x,), "reshape", lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(a % x.ndim for a in axes)
    inverse = tuple(np.argsort(axes))
    return from_op(np.transpose(x.data, axes), (x,), "transpose",
                   lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: shapes {shapes} do not line up on axis {axis}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return from_op(out, tensors, "concat", lambda g: tuple(np.split(g, splits, axis=axis)))


def index_select(x: Tensor, index) -> Tensor:
    """Basic or advanced indexing; the backward pass scatter-adds repeated indices."""
    if isinstance(index, Tensor):
        raise ShapeError("index_select: index must be an int/slice/array, not a Tensor")
    try:
        out = x.data[index]
    except IndexError as e:
        raise ShapeError(f"index_select: {e} for shape {x.shape}") from None

    def backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return from_op(out, (x,), "index", backward)


def take(x: Tensor, indices, axis: int) -> Tensor:
    axis = axis % x.ndim
    indices = np.asarray(indices, dtype=np.intp)
    return index_select(x, (slice(None),) * axis + (indices,))


# --- composite primitives ---

def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)
    return from_op(out, (x,), "log_softmax",
                   lambda g: (g - probs * g.sum(axis=axis, keepdims=True),))


def conv2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Channels-last convolution: x (B,H,W,Cin), weight (kh,kw,Cin,Cout) -> (B,Ho,Wo,Cout)."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[-1] != weight.shape[2]:
        raise ShapeError(f"conv2d: input {x.shape} and kernel {weight.shape} are incompatible")
    kh, kw = weight.shape[:2]
    padded = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    if padded.shape[1] < kh or padded.shape[2] < kw:
        raise ShapeError(f"conv2d: kernel {weight.shape[:2]} larger than padded input {padded.shape[1:3]}")
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    out = np.einsum("bhwcij,ijco->bhwo", windows, weight.data, optimize=True)
    out_h, out_w = out.shape[1:3]

    def backward(g):
        gw = np.einsum("bhwcij,bhwo->ijco", windows, g, optimize=True)
        gwin = np.einsum("bhwo,ijco->bhwcij", g, weight.data, optimize=True)
        gpad = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                gpad[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride, :] += gwin[..., i, j]
        h, w = x.shape[1:3]
        return gpad[:, padding:padding + h, padding:padding + w, :], gw

    return from_op(out, (x, weight), "conv2d", backward)
