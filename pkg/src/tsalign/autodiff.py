"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operations the forecasting pipeline needs are implemented:
broadcast arithmetic, (batched) matmul, reshape/transpose/slice/concat,
softmax, GELU, layer normalization and reductions. Everything is float64.

Gradients flow through every node whose inputs require gradients; a node
built purely from non-gradient tensors is a constant leaf and retains no
graph, so frozen subcomputations cost no backward work.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "matmul",
    "reshape",
    "swapaxes",
    "concat",
    "tensor_sum",
    "tensor_mean",
    "softmax",
    "gelu",
    "layer_norm",
    "backward",
]


class Tensor:
    """A numpy array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # operator sugar; non-Tensor operands become constants
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __neg__(self):
        return mul(self, as_tensor(-1.0))

    def __getitem__(self, idx):
        return _slice(self, idx)


def as_tensor(value):
    """Wrap arrays/scalars as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _node(data, parents, backward_fn):
    """Build a graph node; collapses to a constant when no parent needs grad."""
    if any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(parents)
        out._backward = backward_fn
        return out
    return Tensor(data)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(a.data + b.data, (a, b), backward_fn)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(a.data - b.data, (a, b), backward_fn)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _node(a.data * b.data, (a, b), backward_fn)


def matmul(a, b):
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _node(np.matmul(a.data, b.data), (a, b), backward_fn)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.data.shape

    def backward_fn(g):
        return (g.reshape(old),)

    return _node(a.data.reshape(shape), (a,), backward_fn)


def swapaxes(a, axis1, axis2):
    a = as_tensor(a)

    def backward_fn(g):
        return (np.swapaxes(g, axis1, axis2),)

    return _node(np.swapaxes(a.data, axis1, axis2), (a,), backward_fn)


def _slice(a, idx):
    """Basic (view) indexing; gradient scatters back into a zero buffer."""
    a = as_tensor(a)

    def backward_fn(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _node(a.data[idx], (a,), backward_fn)


def concat(parts, axis=0):
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        moved = np.moveaxis(g, axis, 0)
        grads = []
        for i in range(len(parts)):
            piece = moved[offsets[i]:offsets[i + 1]]
            grads.append(np.moveaxis(piece, 0, axis))
        return tuple(grads)

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward_fn)


def tensor_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.data.shape

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward_fn)


def tensor_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.data.shape
    if axis is None:
        count = a.data.size
    else:
        count = shape[axis]

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g / count, shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _node(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward_fn)


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _node(y, (a,), backward_fn)


# tanh approximation, as used by GPT-style feed-forward stacks
_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)

    def backward_fn(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
        return (g * dy,)

    return _node(0.5 * x * (1.0 + t), (a,), backward_fn)


def layer_norm(a, gain, bias, eps=1e-5):
    """Normalize the last axis of `a`, then scale/shift by gain and bias."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv

    def backward_fn(g):
        gx = g * gain.data
        m1 = gx.mean(axis=-1, keepdims=True)
        m2 = (gx * xhat).mean(axis=-1, keepdims=True)
        da = inv * (gx - m1 - xhat * m2)
        batch_axes = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=batch_axes)
        dbias = g.sum(axis=batch_axes)
        return da, dgain, dbias

    return _node(xhat * gain.data + bias.data, (a, gain, bias), backward_fn)


def backward(loss):
    """Backpropagate from a scalar `loss` tensor, accumulating `.grad`."""
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
            else:
                parent.grad = parent.grad + g
