"""Reverse-mode automatic differentiation on dense float64 arrays of rank <= 2.

Each op returns a new :class:`Tensor` that remembers its parents and a
closure pushing the upstream gradient back to them.  ``backward`` walks the
recorded graph in reverse topological order.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op=""):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim > 2:
            raise ShapeError(f"tensors have rank <= 2, got shape {data.shape}")
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward without a gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order, seen = [], set()
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g):
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match value shape {self.data.shape}")
        self.grad = g.copy() if self.grad is None else self.grad + g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("only division by constants is supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _make(data, parents, backward, op):
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward, op)
    return Tensor(data, op=op)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward, "mul")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: a._accumulate(-g), "neg")


def _unary(a, value, local_grad, op):
    a = as_tensor(a)
    out = value(a.data)

    def backward(g):
        a._accumulate(g * local_grad(a.data, out))

    return _make(out, (a,), backward, op)


def relu(a) -> Tensor:
    # gradient at exactly 0 is 0
    return _unary(a, lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(float), "relu")


def leaky_relu(a, slope=0.2) -> Tensor:
    return _unary(a, lambda x: np.where(x > 0, x, slope * x), lambda x, y: np.where(x > 0, 1.0, slope), "leaky_relu")


def sigmoid(a) -> Tensor:
    def value(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    return _unary(a, value, lambda x, y: y * (1.0 - y), "sigmoid")


def tanh(a) -> Tensor:
    return _unary(a, np.tanh, lambda x, y: 1.0 - y * y, "tanh")


def exp(a) -> Tensor:
    return _unary(a, np.exp, lambda x, y: y, "exp")


def log(a) -> Tensor:
    return _unary(a, np.log, lambda x, y: 1.0 / x, "log")


def square(a) -> Tensor:
    return _unary(a, np.square, lambda x, y: 2.0 * x, "square")


def clip(a, lo, hi) -> Tensor:
    """Clamp values; gradient passes only where the input was inside."""
    return _unary(a, lambda x: np.clip(x, lo, hi), lambda x, y: ((x >= lo) & (x <= hi)).astype(float), "clip")


# -- shape and linear algebra ---------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.T, (a,), lambda g: a._accumulate(g.T), "transpose")


def concat(tensors, axis=1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = [t.shape for t in tensors]
    if any(len(s) != 2 for s in shapes) or len({s[1 - axis] for s in shapes}) != 1:
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}")
    sizes = np.cumsum([s[axis] for s in shapes])[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, sizes, axis=axis)):
            if t.requires_grad:
                t._accumulate(part)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def lookup_rows(table, index) -> Tensor:
    table = as_tensor(table)
    index = np.asarray(index, dtype=int)
    if table.data.ndim != 2 or index.ndim != 1:
        raise ShapeError(f"lookup_rows: table {table.shape} with index shape {index.shape}")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise ShapeError(f"lookup_rows: index out of range for table with {table.shape[0]} rows")

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, index, g)
        table._accumulate(full)

    return _make(table.data[index], (table,), backward, "lookup_rows")


def _segment_sum(index, values, n):
    """Rows of ``values`` summed into ``n`` buckets by ``index``."""
    out = np.zeros((n,) + values.shape[1:])
    if index.size:
        order = np.argsort(index, kind="stable")
        idx = index[order]
        starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
        out[idx[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


def scatter_rows(rows, cols, weights, n_rows, a) -> Tensor:
    """``out[r] += w * a[c]`` for each triple: a sparse-times-dense product
    with a constant left factor given as coordinate lists."""
    a = as_tensor(a)
    rows, cols = np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)
    weights = np.asarray(weights, dtype=float)
    if a.data.ndim != 2 or not (rows.shape == cols.shape == weights.shape):
        raise ShapeError(f"scatter_rows: {rows.shape} coordinates onto value shape {a.shape}")
    if cols.size and (cols.max() >= a.shape[0] or rows.max() >= n_rows):
        raise ShapeError(f"scatter_rows: coordinates out of range for shape {a.shape}")
    out = _segment_sum(rows, weights[:, None] * a.data[cols], n_rows)

    def backward(g):
        a._accumulate(_segment_sum(cols, weights[:, None] * g[rows], a.shape[0]))

    return _make(out, (a,), backward, "scatter_rows")


def block_matmul(blocks, mask, a) -> Tensor:
    """Block-diagonal constant times ``a``, with the blocks zero-padded to a
    common size: ``blocks`` is ``(k, m, m)`` and ``mask`` marks, per block,
    which of the ``m`` slots hold real rows of ``a`` (in order)."""
    a = as_tensor(a)
    blocks = np.asarray(blocks, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if a.data.ndim != 2 or blocks.ndim != 3 or blocks.shape[:2] != mask.shape or blocks.shape[1] != blocks.shape[2]:
        raise ShapeError(f"block_matmul: blocks {blocks.shape}, mask {mask.shape}, value shape {a.shape}")
    if int(mask.sum()) != a.shape[0]:
        raise ShapeError(f"block_matmul: mask covers {int(mask.sum())} rows, value has {a.shape[0]}")
    padded = np.zeros(mask.shape + (a.shape[1],))
    padded[mask] = a.data

    def backward(g):
        gp = np.zeros(mask.shape + (a.shape[1],))
        gp[mask] = g
        a._accumulate((np.swapaxes(blocks, 1, 2) @ gp)[mask])

    return _make((blocks @ padded)[mask], (a,), backward, "block_matmul")


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return _make(out, (a,), backward, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    if n == 0:
        raise ShapeError(f"mean: empty tensor of shape {a.shape}")
    return mul(sum(a, axis, keepdims), 1.0 / n)


def mean_rows(a) -> Tensor:
    """Column means as a ``(1, F)`` row."""
    return mean(a, axis=0, keepdims=True)


def softmax(a, axis=1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        a._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (a,), backward, "softmax")


def log_softmax(a, axis=1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def backward(g):
        a._accumulate(g - sm * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), backward, "log_softmax")


# -- finite differences --------------------------------------------------------------------

def gradient_check(fn, params, h=1e-5, floor=1e-6):
    """Largest relative error between analytic and central-difference gradients.

    ``fn`` maps the list of parameter tensors to a scalar tensor.  The error
    for each parameter is ``|g - g_fd| / max(|g|, |g_fd|, floor)`` in the
    Euclidean norm.  Rounding puts about 1e-11 of noise on each difference
    quotient at ``h = 1e-5``, so gradients whose norm is below ``floor`` are
    in effect compared in absolute terms.
    """
    for p in params:
        p.grad = None
    fn(params).backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = fn(params).item()
            flat[i] = old - h
            down = fn(params).item()
            flat[i] = old
            num_flat[i] = (up - down) / (2 * h)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
        worst = max(worst, np.linalg.norm(analytic - numeric) / denom)
    return worst
