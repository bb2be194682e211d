"""Minimal reverse-mode differentiation over numpy arrays.

A :class:`Tensor` wraps an array and remembers how it was computed. The
module-level functions accept either Tensors or plain arrays; when no
argument is a Tensor they return a plain array, so model code can run
unchanged with or without a tape.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError


class Tensor:
    __array_ufunc__ = None  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, value, parents=(), requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents  # tuple of (Tensor, vjp)
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Tensor({self.value!r})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf on the tape."""
        order = _toposort(self)
        grads = {id(self): np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=np.float64)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in node.parents:
                if not parent.requires_grad:
                    continue
                pg = vjp(g)
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _toposort(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


def leaf(value, name=None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def value_of(x):
    return x.value if isinstance(x, Tensor) else x


def _any_tensor(*xs) -> bool:
    return any(isinstance(x, Tensor) for x in xs)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _wrap(value, *links):
    parents = tuple((t, f) for t, f in links if isinstance(t, Tensor))
    return Tensor(value, parents)


def add(a, b):
    if not _any_tensor(a, b):
        return a + b
    av, bv = value_of(a), value_of(b)
    out = av + bv
    return _wrap(out, (a, lambda g: _unbroadcast(g, np.shape(av))), (b, lambda g: _unbroadcast(g, np.shape(bv))))


def neg(a):
    if not isinstance(a, Tensor):
        return -a
    return _wrap(-a.value, (a, lambda g: -g))


def mul(a, b):
    if not _any_tensor(a, b):
        return a * b
    av, bv = value_of(a), value_of(b)
    return _wrap(av * bv, (a, lambda g: _unbroadcast(g * bv, np.shape(av))), (b, lambda g: _unbroadcast(g * av, np.shape(bv))))


def div(a, b):
    if not _any_tensor(a, b):
        return a / b
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _wrap(out, (a, lambda g: _unbroadcast(g / bv, np.shape(av))), (b, lambda g: _unbroadcast(-g * out / bv, np.shape(bv))))


def power(a, p: float):
    if not isinstance(a, Tensor):
        return a**p
    av = a.value
    return _wrap(av**p, (a, lambda g: g * p * av ** (p - 1)))


def matmul(a, b):
    """Dense or sparse matrix product; sparse operands are treated as constants."""
    if not _any_tensor(a, b):
        out = a @ b
        return np.asarray(out.todense()) if sp.issparse(out) else out
    av, bv = value_of(a), value_of(b)
    out = np.asarray(av @ bv)

    def grad_a(g):
        if bv.ndim == 1:
            return np.outer(g, bv) if av.ndim == 2 else g * bv
        return np.asarray(g @ bv.T)

    def grad_b(g):
        if av.ndim == 1:
            return np.outer(av, g) if bv.ndim == 2 else g * av
        return np.asarray(av.T @ g)

    return _wrap(out, (a, grad_a), (b, grad_b))


def transpose(a):
    if not isinstance(a, Tensor):
        return a.T
    return _wrap(a.value.T, (a, lambda g: g.T))


def total(a, axis=None, keepdims=False):
    if not isinstance(a, Tensor):
        return np.sum(a, axis=axis, keepdims=keepdims)
    av = a.value
    out = np.sum(av, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape).copy()

    return _wrap(out, (a, vjp))


def mean(a, axis=None):
    n = value_of(a).size if axis is None else value_of(a).shape[axis]
    return mul(total(a, axis=axis), 1.0 / n)


def getitem(a, idx):
    if not isinstance(a, Tensor):
        return a[idx]
    av = a.value

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return out

    return _wrap(av[idx], (a, vjp))


def concat(parts, axis=1):
    if not _any_tensor(*parts):
        return np.concatenate(parts, axis=axis)
    vals = [value_of(p) for p in parts]
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    links = []
    for k, p in enumerate(parts):
        lo, hi = bounds[k], bounds[k + 1]
        sl = [slice(None)] * vals[k].ndim
        sl[axis] = slice(lo, hi)
        links.append((p, lambda g, sl=tuple(sl): g[sl]))
    return _wrap(np.concatenate(vals, axis=axis), *links)


def _unary(fn, dfn):
    def op(a):
        if not isinstance(a, Tensor):
            return fn(a)
        av = a.value
        out = fn(av)
        return _wrap(out, (a, lambda g: g * dfn(av, out)))

    return op


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    return np.logaddexp(0.0, x)


tanh = _unary(np.tanh, lambda x, y: 1.0 - y * y)
sigmoid = _unary(lambda x: _sigmoid(np.asarray(x, dtype=np.float64)), lambda x, y: y * (1.0 - y))
relu = _unary(lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(np.float64))
softplus = _unary(_softplus, lambda x, y: _sigmoid(np.asarray(x, dtype=np.float64)))
exp = _unary(np.exp, lambda x, y: y)
log = _unary(np.log, lambda x, y: 1.0 / x)
square = _unary(np.square, lambda x, y: 2.0 * x)
identity = _unary(lambda x: x, lambda x, y: np.ones_like(x))


def clip(a, lo, hi):
    """Clamp with zero gradient outside ``[lo, hi]``."""
    if not isinstance(a, Tensor):
        return np.clip(a, lo, hi)
    av = a.value
    inside = ((av >= lo) & (av <= hi)).astype(np.float64)
    return _wrap(np.clip(av, lo, hi), (a, lambda g: g * inside))


NONLINEARITIES = {
    "identity": identity,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "softplus": softplus,
}


def nonlinearity(name: str):
    try:
        return NONLINEARITIES[name]
    except KeyError:
        raise ValidationError(f"unknown nonlinearity {name!r}; choose from {sorted(NONLINEARITIES)}") from None
