"""Reverse-mode automatic differentiation on numpy arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure which pushes the output gradient back to them.  ``backward`` walks the
graph in reverse topological order.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = None
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        # intermediate grads are not needed after the sweep
        for node in order:
            if node._parents and not node.requires_grad:
                node.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __pow__(self, p):
        if p != 2:
            raise ValueError("only squaring is supported")
        return square(self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, op, backward):
    parents = tuple(p for p in parents if p.requires_grad or p._parents)
    out = Tensor(data, _parents=parents, _op=op)
    if parents:
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), "add", backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), "mul", backward)


def neg(a):
    return _make(-a.data, (a,), "neg", lambda g: a._accumulate(-g))


def square(a):
    return _make(a.data**2, (a,), "square", lambda g: a._accumulate(2.0 * a.data * g))


def sqrt(a):
    out = np.sqrt(a.data)
    return _make(out, (a,), "sqrt", lambda g: a._accumulate(g / (2.0 * out)))


def tabs(a):
    return _make(np.abs(a.data), (a,), "abs", lambda g: a._accumulate(g * np.sign(a.data)))


def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(out, (a,), "sum", backward)


def tmean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    return _make(a.data.reshape(shape), (a,), "reshape", lambda g: a._accumulate(g.reshape(a.shape)))


def transpose(a, axes=None):
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (a,), "transpose", lambda g: a._accumulate(np.transpose(g, inv)))


def matmul(a, b):
    """2-D matrix product."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(g @ b.data.T)
        if b.requires_grad or b._parents:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), "matmul", backward)


def stop_gradient(a):
    return Tensor(a.data)


def relu(a):
    mask = a.data > 0
    return _make(a.data * mask, (a,), "relu", lambda g: a._accumulate(g * mask))


def leaky_relu(a, slope=0.2):
    scale = np.where(a.data > 0, 1.0, slope)
    return _make(a.data * scale, (a,), "leaky_relu", lambda g: a._accumulate(g * scale))


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), "sigmoid", lambda g: a._accumulate(g * out * (1.0 - out)))


def soft_threshold(x, tau):
    """Shrink ``x`` toward zero by ``tau``; values inside ``[-tau, tau]`` become 0.

    ``tau`` broadcasts against ``x`` (typically shape ``(N, C, 1)`` for a
    ``(N, C, L)`` feature map).  Both inputs receive gradients.
    """
    x, tau = as_tensor(x), as_tensor(tau)
    if np.any(tau.data < 0):
        raise ValueError("soft threshold needs tau >= 0")
    upper = x.data > tau.data
    lower = x.data < -tau.data
    out = np.where(upper, x.data - tau.data, np.where(lower, x.data + tau.data, 0.0))

    def backward(g):
        if x.requires_grad or x._parents:
            x._accumulate(g * (upper | lower))
        if tau.requires_grad or tau._parents:
            tau._accumulate(_unbroadcast(g * (lower.astype(float) - upper), tau.shape))

    return _make(out, (x, tau), "soft_threshold", backward)


def mse(pred, target):
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes {pred.shape} and {target.shape}")
    return tmean(square(pred - target))


def concat(tensors, axis=0):
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad or t._parents:
                t._accumulate(np.take(g, np.arange(lo, hi), axis=axis))

    return _make(data, tuple(tensors), "concat", backward)


def take_rows(table, idx):
    """``table[idx]`` for a 2-D table; gradients scatter-add back into the rows."""
    idx = np.asarray(idx)

    def backward(g):
        gt = np.zeros(table.shape)
        np.add.at(gt, idx, g)
        table._accumulate(gt)

    return _make(table.data[idx], (table,), "take_rows", backward)
