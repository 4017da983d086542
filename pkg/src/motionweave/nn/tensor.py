"""Reverse-mode automatic differentiation over numpy arrays.

Small by design: the handful of ops the models need, float32/float64,
broadcasting on elementwise ops and matmul, and nothing else. Gradients of
every op are exercised against central finite differences in the test
suite, so keep backward closures exact rather than clever.
"""

from __future__ import annotations

import numpy as np

from .. import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order = []
        seen = set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            order.append(node)

        visit(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, mul(other, -1.0))
        return add(self, -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / np.asarray(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _accum(t: Tensor, g):
    # .grad is never mutated in place, so storing views here is safe
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.asarray(g)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- arithmetic

def add(a, b):
    # python-scalar operands stay scalars so float32 is not promoted
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        a, b = b, a
    if isinstance(b, (int, float)):
        a = as_tensor(a)
        data = a.data + b

        def backward(g):
            _accum(a, g)

        return _result(data, (a,), backward)
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _result(data, (a, b), backward)


def mul(a, b):
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        a, b = b, a
    if isinstance(b, (int, float)):
        a = as_tensor(a)
        data = a.data * b

        def backward(g):
            _accum(a, g * b)

        return _result(data, (a,), backward)
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), backward)


def power(a, exponent):
    a = as_tensor(a)
    data = a.data ** exponent

    def backward(g):
        _accum(a, g * exponent * a.data ** (exponent - 1))

    return _result(data, (a,), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires >= 2-D operands")
    data = a.data @ b.data

    def backward(g):
        _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _result(data, (a, b), backward)


def exp(a):
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        _accum(a, g * data)

    return _result(data, (a,), backward)


def log(a):
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _result(data, (a,), backward)


def sqrt(a):
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def backward(g):
        _accum(a, g * 0.5 / data)

    return _result(data, (a,), backward)


def tanh(a):
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - data * data))

    return _result(data, (a,), backward)


def clip(a, lo, hi):
    """Clamp with zero gradient outside [lo, hi]."""
    a = as_tensor(a)
    data = np.clip(a.data, lo, hi)
    inside = ((a.data >= lo) & (a.data <= hi)).astype(a.data.dtype)

    def backward(g):
        _accum(a, g * inside)

    return _result(data, (a,), backward)


def where(cond, a, b):
    """Select by a constant boolean mask (not differentiated through cond)."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    data = np.where(cond, a.data, b.data)

    def backward(g):
        _accum(a, _unbroadcast(np.where(cond, g, 0.0), a.data.shape))
        _accum(b, _unbroadcast(np.where(cond, 0.0, g), b.data.shape))

    return _result(data, (a, b), backward)


# ---------------------------------------------------------------- activations

def relu(a):
    a = as_tensor(a)
    pos = a.data > 0
    data = np.where(pos, a.data, 0.0)

    def backward(g):
        _accum(a, np.where(pos, g, 0.0))

    return _result(data, (a,), backward)


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    pos = a.data > 0
    data = np.where(pos, a.data, slope * a.data)

    def backward(g):
        _accum(a, np.where(pos, g, slope * g))

    return _result(data, (a,), backward)


def elu(a, alpha=1.0):
    a = as_tensor(a)
    neg = alpha * (np.exp(np.minimum(a.data, 0.0)) - 1.0)
    pos = a.data > 0
    data = np.where(pos, a.data, neg)

    def backward(g):
        _accum(a, np.where(pos, g, g * (neg + alpha)))

    return _result(data, (a,), backward)


def gelu(a):
    a = as_tensor(a)
    y, t = kernels.gelu_fwd(a.data)

    def backward(g):
        _accum(a, kernels.gelu_bwd(a.data, t, g))

    return _result(y, (a,), backward)


# ---------------------------------------------------------------- shape ops

def reshape(a, shape):
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _result(data, (a,), backward)


def transpose(a, axes):
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    inv = np.argsort(axes)

    def backward(g):
        _accum(a, np.transpose(g, inv))

    return _result(data, (a,), backward)


def getitem(a, idx):
    a = as_tensor(a)
    data = a.data[idx]

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        _accum(a, buf)

    return _result(data, (a,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, stop)
            _accum(t, g[tuple(sl)])

    return _result(data, tuple(tensors), backward)


def take_rows(table, idx):
    """Gather rows of a 2-D table; scatter-add on the way back."""
    table = as_tensor(table)
    idx = np.asarray(idx)
    data = table.data[idx]

    def backward(g):
        buf = np.zeros_like(table.data)
        np.add.at(buf, idx, g)
        _accum(table, buf)

    return _result(data, (table,), backward)


# ---------------------------------------------------------------- reductions

def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape))
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _result(data, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis] if isinstance(axis, int) else int(
            np.prod([a.data.shape[ax] for ax in axis]))
    return mul(sum_(a, axis, keepdims), 1.0 / count)


# ------------------------------------------------------- kernel-backed ops

def softmax(a, mask=None):
    """Softmax over the last axis; optional boolean validity mask."""
    a = as_tensor(a)
    cols = a.data.shape[-1]
    flat = np.ascontiguousarray(a.data.reshape(-1, cols))
    mflat = None
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.data.shape)
        mflat = np.ascontiguousarray(mask.reshape(-1, cols).astype(np.uint8))
    y = kernels.softmax_fwd(flat, mflat)
    data = y.reshape(a.data.shape)

    def backward(g):
        gflat = np.ascontiguousarray(g.reshape(-1, cols))
        _accum(a, kernels.softmax_bwd(y, gflat).reshape(a.data.shape))

    return _result(data, (a,), backward)


def layer_norm(a, gamma, beta, eps=1e-5):
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    cols = a.data.shape[-1]
    flat = np.ascontiguousarray(a.data.reshape(-1, cols))
    y, mu, rstd = kernels.layernorm_fwd(flat, gamma.data, beta.data, eps)
    data = y.reshape(a.data.shape)

    def backward(g):
        gflat = np.ascontiguousarray(g.reshape(-1, cols))
        dx, dgamma, dbeta = kernels.layernorm_bwd(
            flat, gamma.data, mu, rstd, gflat)
        _accum(a, dx.reshape(a.data.shape))
        _accum(gamma, dgamma)
        _accum(beta, dbeta)

    return _result(data, (a, gamma, beta), backward)
