"""A small reverse-mode automatic differentiation engine over numpy arrays.

Each :class:`Tensor` records its parents and a closure that pushes its
gradient to them. :meth:`Tensor.backward` walks the graph once in reverse
topological order. Only the operations the toy networks and losses need
are provided.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .. import kernels

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}{', grad' if self.requires_grad else ''})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self._accum(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # interior gradients are not needed once propagated
                    node.grad = None

    # arithmetic -----------------------------------------------------------

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
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _make(data, parents, backward):
    parents = tuple(p for p in parents if p.requires_grad)
    if not parents:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accum(unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accum(unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def neg(a) -> Tensor:
    return _make(-a.data, (a,), lambda g: a._accum(-g))


def reciprocal(a) -> Tensor:
    out = 1.0 / a.data
    return _make(out, (a,), lambda g: a._accum(-g * out * out))


def square(a) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: a._accum(2.0 * g * a.data))


def sqrt(a) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: a._accum(0.5 * g / out))


def log(a) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: a._accum(g / a.data))


def exp(a) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: a._accum(g * out))


def tabs(a) -> Tensor:
    return _make(np.abs(a.data), (a,), lambda g: a._accum(g * np.sign(a.data)))


def abs_diff(a, b) -> Tensor:
    """|a - b| with broadcasting; subgradient 0 at a == b."""
    a, b = as_tensor(a), as_tensor(b)
    d = a.data - b.data
    s = np.sign(d)

    def backward(g):
        if a.requires_grad:
            a._accum(unbroadcast(g * s, a.shape))
        if b.requires_grad:
            b._accum(unbroadcast(-g * s, b.shape))

    return _make(np.abs(d), (a, b), backward)


def relu(a) -> Tensor:
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: a._accum(g * pos))


def leaky_relu(a, slope=0.2) -> Tensor:
    pos = a.data > 0
    scale = np.where(pos, 1.0, slope)
    return _make(a.data * scale, (a,), lambda g: a._accum(g * scale))


def sigmoid(a) -> Tensor:
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    out[~pos] = e / (1.0 + e)
    return _make(out, (a,), lambda g: a._accum(g * out * (1.0 - out)))


def tanh(a) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: a._accum(g * (1.0 - out * out)))


def clamp(a, lo, hi) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: a._accum(g * inside))


# shape ------------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: a._accum(g.reshape(a.shape)))


def transpose(a, axes) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: a._accum(g.transpose(inv)))


def getitem(a, idx) -> Tensor:
    def backward(g):
        full = np.zeros_like(a.data)
        if _fancy(idx):
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        a._accum(full)

    return _make(a.data[idx], (a,), backward)


def _fancy(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis=1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc
    return _make(data, tensors, backward)


# reductions -------------------------------------------------------------------

def tsum(a, axis=None, keepdims=False) -> Tensor:
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.shape))

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


# linear algebra ---------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accum(unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accum(unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(a.data @ b.data, (a, b), backward)


def softmax(a, axis=-1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        a._accum(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (a,), backward)


def layer_norm(a, weight=None, bias=None, eps=1e-5) -> Tensor:
    """Normalise over the last axis, then apply an optional affine map."""
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = a.shape[-1]

    def backward(g):
        a._accum(inv * (g - g.mean(axis=-1, keepdims=True)
                        - xhat * (g * xhat).sum(axis=-1, keepdims=True) / n))

    out = _make(xhat, (a,), backward)
    if weight is not None:
        out = out * weight
    if bias is not None:
        out = out + bias
    return out


def conv2d(x, w, b=None, stride=1, pad=1) -> Tensor:
    """NCHW convolution (cross-correlation) with square zero padding."""
    x, w = as_tensor(x), as_tensor(w)
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeMismatch(f"conv2d input has {c} channels, kernel expects {cw}")
    oh, ow = kernels.out_size(h, kh, stride, pad), kernels.out_size(wd, kw, stride, pad)
    cols = kernels.im2col(x.data, kh, kw, stride, pad)          # (N, C*kh*kw, OH*OW)
    wm = w.data.reshape(f, -1)
    out = np.matmul(wm, cols)                                     # (N, F, OH*OW)
    if b is not None:
        out += b.data.reshape(1, f, 1)
    out = out.reshape(n, f, oh, ow)
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g2 = g.reshape(n, f, oh * ow)
        if w.requires_grad:
            w._accum(np.einsum("nfp,nkp->fk", g2, cols).reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accum(g2.sum(axis=(0, 2)))
        if x.requires_grad:
            x._accum(kernels.col2im(np.matmul(wm.T, g2), x.shape, kh, kw, stride, pad))

    return _make(out, parents, backward)


def upsample_nearest(x, factor=2) -> Tensor:
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)
    n, c, h, w = x.shape

    def backward(g):
        x._accum(g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)))

    return _make(out, (x,), backward)


# losses -----------------------------------------------------------------------

def bce_with_clamp(p, target, eps=1e-7) -> Tensor:
    """Mean binary cross-entropy of probabilities ``p`` against a constant target."""
    t = np.broadcast_to(np.asarray(target, dtype=DTYPE), p.shape)
    q = np.clip(p.data, eps, 1.0 - eps)
    inside = (p.data >= eps) & (p.data <= 1.0 - eps)
    val = -np.mean(t * np.log(q) + (1.0 - t) * np.log1p(-q))

    def backward(g):
        dq = -(t / q - (1.0 - t) / (1.0 - q)) / q.size
        p._accum(g * dq * inside)

    return _make(np.asarray(val), (p,), backward)
