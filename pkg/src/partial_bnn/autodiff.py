"""Minimal reverse-mode autodiff over float64 numpy arrays.

A ``Var`` wraps an ndarray and remembers how it was produced; ``backward``
walks the tape and accumulates vector-Jacobian products. The free functions
(``tanh``, ``relu``, ``vsum``, ...) dispatch on their argument, so the same
model code runs traced (Var in, Var out) or plain (ndarray in, ndarray out).
Everything is float64; tapes are rebuilt per evaluation and are not reusable
across threads.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient contributions back down to `shape` after broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """One node of the tape: value plus (parent, vjp) links."""

    __slots__ = ("value", "grad", "parents")

    # numpy must defer to our reflected operators, never build object arrays
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return "Var(%r)" % (self.value,)

    # ---- arithmetic ----

    def __add__(self, other):
        o, ov = _split(other)
        out = Var(self.value + ov)
        links = [(self, lambda g: _unbroadcast(g, self.value.shape))]
        if o is not None:
            links.append((o, lambda g: _unbroadcast(g, o.value.shape)))
        out.parents = tuple(links)
        return out

    __radd__ = __add__

    def __neg__(self):
        return Var(-self.value, ((self, lambda g: -g),))

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) + (-self)

    def __mul__(self, other):
        o, ov = _split(other)
        out = Var(self.value * ov)
        links = [(self, lambda g: _unbroadcast(g * ov, self.value.shape))]
        if o is not None:
            sv = self.value
            links.append((o, lambda g: _unbroadcast(g * sv, o.value.shape)))
        out.parents = tuple(links)
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        o, ov = _split(other)
        out = Var(self.value / ov)
        links = [(self, lambda g: _unbroadcast(g / ov, self.value.shape))]
        if o is not None:
            sv = self.value
            links.append((o, lambda g: _unbroadcast(-g * sv / (ov * ov), o.value.shape)))
        out.parents = tuple(links)
        return out

    def __rtruediv__(self, other):
        return _lift(other) / self

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise TypeError("Var exponents are not supported; use exp/log")
        p = float(exponent)
        out = Var(self.value ** p)
        sv = self.value
        out.parents = ((self, lambda g: g * p * sv ** (p - 1.0)),)
        return out

    def __matmul__(self, other):
        o, ov = _split(other)
        out = Var(self.value @ ov)
        links = [(self, lambda g: _matmul_vjp_left(g, self.value, ov))]
        if o is not None:
            sv = self.value
            links.append((o, lambda g: _matmul_vjp_right(g, sv, o.value)))
        out.parents = tuple(links)
        return out

    def __rmatmul__(self, other):
        ov = np.asarray(other, dtype=np.float64)
        out = Var(ov @ self.value)
        out.parents = ((self, lambda g: _matmul_vjp_right(g, ov, self.value)),)
        return out

    # ---- shape ops ----

    def __getitem__(self, idx):
        out = Var(self.value[idx])
        shape = self.value.shape

        def back(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            return full

        out.parents = ((self, back),)
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.value.shape
        out = Var(self.value.reshape(shape))
        out.parents = ((self, lambda g: g.reshape(old)),)
        return out

    @property
    def T(self):
        out = Var(self.value.T)
        out.parents = ((self, lambda g: g.T),)
        return out

    def sum(self, axis=None, keepdims=False):
        out = Var(self.value.sum(axis=axis, keepdims=keepdims))
        shape = self.value.shape

        def back(g):
            g = np.asarray(g)
            if axis is None:
                return np.broadcast_to(g, shape).copy()
            if not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        out.parents = ((self, back),)
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(n)


def _lift(x):
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


def _split(other):
    """Return (Var or None, value array) for a binary-op operand."""
    if isinstance(other, Var):
        return other, other.value
    return None, np.asarray(other, dtype=np.float64)


def _matmul_vjp_left(g, a, b):
    if a.ndim == 1 and b.ndim == 1:
        return g * b
    if a.ndim == 1:
        return g @ b.T
    if b.ndim == 1:
        return np.outer(g, b)
    return g @ b.T


def _matmul_vjp_right(g, a, b):
    if a.ndim == 1 and b.ndim == 1:
        return g * a
    if b.ndim == 1:
        return a.T @ g
    if a.ndim == 1:
        return np.outer(a, g)
    return a.T @ g


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


# ---- elementwise functions, dispatching on ndarray vs Var ----

def exp(x):
    if isinstance(x, Var):
        e = np.exp(x.value)
        return Var(e, ((x, lambda g: g * e),))
    return np.exp(x)


def log(x):
    if isinstance(x, Var):
        return Var(np.log(x.value), ((x, lambda g: g / x.value),))
    return np.log(x)


def sqrt(x):
    if isinstance(x, Var):
        s = np.sqrt(x.value)
        return Var(s, ((x, lambda g: g * 0.5 / s),))
    return np.sqrt(x)


def absolute(x):
    if isinstance(x, Var):
        s = np.sign(x.value)
        return Var(np.abs(x.value), ((x, lambda g: g * s),))
    return np.abs(x)


def tanh(x):
    if isinstance(x, Var):
        t = np.tanh(x.value)
        return Var(t, ((x, lambda g: g * (1.0 - t * t)),))
    return np.tanh(x)


def sigmoid(x):
    if isinstance(x, Var):
        s = 1.0 / (1.0 + np.exp(-x.value))
        return Var(s, ((x, lambda g: g * s * (1.0 - s)),))
    return 1.0 / (1.0 + np.exp(-x))


def softplus(x):
    # log1p(exp(-|x|)) + max(x, 0) is stable for large |x|
    if isinstance(x, Var):
        v = x.value
        out = Var(np.log1p(np.exp(-np.abs(v))) + np.maximum(v, 0.0))
        s = 1.0 / (1.0 + np.exp(-v))
        out.parents = ((x, lambda g: g * s),)
        return out
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def relu(x):
    # subgradient 0 at the kink
    if isinstance(x, Var):
        m = (x.value > 0.0).astype(np.float64)
        return Var(x.value * m, ((x, lambda g: g * m),))
    return np.maximum(x, 0.0)


def leaky_relu(x, slope=0.01):
    if isinstance(x, Var):
        m = np.where(x.value > 0.0, 1.0, slope)
        return Var(x.value * m, ((x, lambda g: g * m),))
    return np.where(x > 0.0, x, slope * x)


def silu(x):
    if isinstance(x, Var):
        v = x.value
        s = 1.0 / (1.0 + np.exp(-v))
        out = Var(v * s)
        out.parents = ((x, lambda g: g * (s * (1.0 + v * (1.0 - s)))),)
        return out
    return x / (1.0 + np.exp(-x))


def vsum(x, axis=None, keepdims=False):
    if isinstance(x, Var):
        return x.sum(axis=axis, keepdims=keepdims)
    return np.sum(x, axis=axis, keepdims=keepdims)


def vmean(x, axis=None, keepdims=False):
    if isinstance(x, Var):
        return x.mean(axis=axis, keepdims=keepdims)
    return np.mean(x, axis=axis, keepdims=keepdims)


def square(x):
    return x * x


def logsumexp(x, axis=-1):
    if isinstance(x, Var):
        v = x.value
        m = np.max(v, axis=axis, keepdims=True)
        e = np.exp(v - m)
        s = np.sum(e, axis=axis, keepdims=True)
        out = Var(np.squeeze(m + np.log(s), axis=axis))
        soft = e / s
        shape = v.shape

        def back(g):
            g = np.expand_dims(np.asarray(g), axis)
            return np.broadcast_to(g, shape) * soft

        out.parents = ((x, back),)
        return out
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)), axis=axis)


def concat(parts, axis=0):
    if any(isinstance(p, Var) for p in parts):
        parts = [_lift(p) for p in parts]
        vals = [p.value for p in parts]
        out = Var(np.concatenate(vals, axis=axis))
        sizes = [v.shape[axis] for v in vals]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        links = []
        for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * out.value.ndim
            sl[axis] = slice(int(a), int(b))
            links.append((p, lambda g, sl=tuple(sl): g[sl]))
        out.parents = tuple(links)
        return out
    return np.concatenate(parts, axis=axis)


def scatter(base: np.ndarray, idx, values):
    """Copy of `base` with `values` written at `idx`; gradient flows to values only."""
    if isinstance(values, Var):
        v = base.astype(np.float64, copy=True)
        v[idx] = values.value
        return Var(v, ((values, lambda g: g[idx]),))
    v = base.astype(np.float64, copy=True)
    v[idx] = values
    return v


def backward(out: Var, seed=None):
    """Accumulate gradients of `out` (scalar unless `seed` given) into the tape."""
    if seed is None:
        if out.value.shape != ():
            raise ValueError("backward() without seed requires a scalar output")
        seed = np.ones(())
    order = _toposort(out)
    for node in order:
        node.grad = None
    out.grad = np.asarray(seed, dtype=np.float64)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            if parent.grad is None:
                parent.grad = np.asarray(contrib, dtype=np.float64).copy()
            else:
                parent.grad += contrib


def _toposort(root: Var):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def gradient(loss: Var, wrt):
    """Backward pass returning gradients for each Var in `wrt`."""
    backward(loss)
    out = []
    for v in wrt:
        if v.grad is None:
            out.append(np.zeros_like(v.value))
        else:
            out.append(v.grad)
    return out
