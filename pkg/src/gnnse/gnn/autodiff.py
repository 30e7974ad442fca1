"""Minimal tape-based reverse-mode differentiation on numpy arrays.

Only the operations the message-passing model needs are provided, including
a few fused graph primitives (row gather, segment sums, segment softmax).
Every operation is deterministic: reductions run in a fixed order that only
depends on the order of the inputs.
"""
import numpy as np

from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring it."""
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data) if grad is None else grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # interior gradients are no longer needed
                    node.grad = None


def const(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _accum(t, g):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _result(data, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --------------------------------------------------------------------------- elementwise

def add(a, b):
    a, b = const(a), const(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))
    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = const(a), const(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))
    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = const(a), const(b)

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))
    return _result(a.data * b.data, (a, b), backward)


def relu(a):
    out = np.maximum(a.data, 0)
    return _result(out, (a,), lambda g: _accum(a, g * (out > 0).astype(out.dtype)))


def leaky_relu(a, slope=0.2):
    x = a.data
    scale = (x > 0).astype(x.dtype)
    scale += slope * (1 - scale)
    return _result(x * scale, (a,), lambda g: _accum(a, g * scale))


def sigmoid(a):
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _result(out, (a,), lambda g: _accum(a, g * out * (1.0 - out)))


def tanh(a):
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: _accum(a, g * (1.0 - out * out)))


# --------------------------------------------------------------------------- shapes

def reshape(a, shape):
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: _accum(a, g.reshape(old)))


def rows(a, start, stop):
    def backward(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        _accum(a, full)
    return _result(a.data[start:stop], (a,), backward)


def cols(a, start, stop):
    def backward(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        _accum(a, full)
    return _result(a.data[:, start:stop], (a,), backward)


def split_cols(a, widths):
    """Column blocks of ``a``; ``a`` must have no other consumers."""
    edges = np.cumsum([0] + list(widths))
    if edges[-1] != a.shape[1]:
        raise ValueError("widths do not add up to the column count")
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        def backward(g, lo=lo, hi=hi):
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[:, lo:hi] += g
        out.append(_result(np.ascontiguousarray(a.data[:, lo:hi]), (a,), backward))
    return out


def concat(tensors, axis=0):
    tensors = [const(t) for t in tensors]
    sizes = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, sizes[:-1], sizes[1:]):
            if t.requires_grad:
                _accum(t, np.take(g, np.arange(lo, hi), axis=axis))
    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def mean0(a):
    """Mean over axis 0; zeros for an empty input."""
    n = a.shape[0]
    if n == 0:
        return _result(np.zeros(a.shape[1:], a.data.dtype), (a,), lambda g: None)
    out = a.data.mean(axis=0)
    return _result(out, (a,), lambda g: _accum(a, np.broadcast_to(g / n, a.shape)))


def sum_all(a):
    return _result(np.asarray(a.data.sum()), (a,),
                   lambda g: _accum(a, np.full_like(a.data, g)))


def outer(u, v):
    """``u[:, None] * v[None, :]`` for 1-d ``u`` and ``v``."""
    return mul(reshape(u, (-1, 1)), reshape(v, (1, -1)))


def add_outer(x, u, v):
    """``x + u[:, None] * v[None, :]`` without the intermediate product."""
    out = np.array(x.data, copy=True)
    out += u.data[:, None] * v.data[None, :]

    def backward(g):
        _accum(x, g)
        if u.requires_grad:
            _accum(u, mm(g, v.data[:, None])[:, 0])
        if v.requires_grad:
            _accum(v, u.data @ g)
    return _result(out, (x, u, v), backward)


# --------------------------------------------------------------------------- linear algebra

def mm(x, w):
    """Dense product whose rows do not depend on the other rows in the call.

    OpenBLAS picks different kernels for a single row (gemv) and for column
    counts that are not a multiple of 16, which changes the rounding of a
    row depending on the batch it is part of. Padding avoids both cases.
    """
    if x.shape[0] == 1:
        return mm(np.vstack([x, np.zeros_like(x)]), w)[:1]
    pad = -w.shape[1] % 16
    if pad:
        return (x @ np.hstack([w, np.zeros((w.shape[0], pad), dtype=w.dtype)]))[:, :w.shape[1]]
    return x @ w


def matmul(a, b):
    a, b = const(a), const(b)

    def backward(g):
        if a.requires_grad:
            _accum(a, mm(g, b.data.T))
        if b.requires_grad:
            _accum(b, a.data.T @ g)
    return _result(mm(a.data, b.data), (a, b), backward)


def linear(x, w, b):
    """``x @ w + b``."""
    out = mm(x.data, w.data)
    out += b.data

    def backward(g):
        if x.requires_grad:
            _accum(x, mm(g, w.data.T))
        if w.requires_grad:
            _accum(w, x.data.T @ g)
        if b.requires_grad:
            _accum(b, g.sum(axis=0))
    return _result(out, (x, w, b), backward)


# --------------------------------------------------------------------------- graph primitives

class Segments:
    """Assignment of ``E`` items to ``n`` segments (e.g. edges to receiving nodes)."""

    def __init__(self, ids, n):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.n = int(n)
        self.order = np.argsort(self.ids, kind="stable")
        sorted_ids = self.ids[self.order]
        if len(sorted_ids):
            self._starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
            self._heads = sorted_ids[self._starts]

    def __len__(self):
        return len(self.ids)

    def sum(self, values):
        if values.ndim == 1:
            return np.bincount(self.ids, weights=values, minlength=self.n).astype(values.dtype, copy=False)
        return kernels.scatter_rows(values, self.ids, self.n)

    def max(self, values):
        out = np.full(self.n, -np.inf, dtype=values.dtype)
        if len(self.ids):
            out[self._heads] = np.maximum.reduceat(values[self.order], self._starts)
        return out


def take(a, seg):
    """Rows ``a[seg.ids]``; the backward pass scatters into ``seg.n`` rows."""
    def backward(g):
        _accum(a, seg.sum(g))
    return _result(np.take(a.data, seg.ids, axis=0), (a,), backward)


def gather_add(r, s, bias, seg_r, seg_s, slope=None):
    """``act(r[seg_r.ids] + s[seg_s.ids] + bias)``; ``act`` is identity, relu
    (slope 0) or leaky relu."""
    act = slope is not None
    k = r.data.dtype.type(slope or 0)
    out = kernels.gather_add(r.data, s.data, bias.data, seg_r.ids, seg_s.ids, act, k)

    def backward(g):
        dr, ds, db = kernels.gather_add_backward(np.ascontiguousarray(g), out, seg_r.ids, seg_s.ids,
                                                 seg_r.n, seg_s.n, act, k)
        _accum(r, dr)
        _accum(s, ds)
        _accum(bias, db)
    return _result(out, (r, s, bias), backward)


def gru_cell(gi, gh, h):
    """Gated recurrent update from input/hidden gate pre-activations ``[r | z | n]``."""
    k = h.shape[1]
    gi_, gh_ = gi.data, gh.data
    r = 1 / (1 + np.exp(-(gi_[:, :k] + gh_[:, :k])))
    z = 1 / (1 + np.exp(-(gi_[:, k:2 * k] + gh_[:, k:2 * k])))
    n = np.tanh(gi_[:, 2 * k:] + r * gh_[:, 2 * k:])
    out = n + z * (h.data - n)

    def backward(g):
        dgi, dgh, dh = kernels.gru_backward(np.ascontiguousarray(g), gh.data, h.data, r, z, n)
        _accum(h, dh)
        _accum(gi, dgi)
        _accum(gh, dgh)
    return _result(out, (gi, gh, h), backward)


def segment_sum(a, seg):
    return _result(seg.sum(a.data), (a,), lambda g: _accum(a, np.take(g, seg.ids, axis=0)))


def segment_softmax(scores, seg):
    """Softmax of 1-d ``scores`` within each segment."""
    s = scores.data
    shifted = s - np.take(seg.max(s), seg.ids)
    e = np.exp(shifted)
    denom = seg.sum(e)
    alpha = e / np.take(denom, seg.ids)

    def backward(g):
        inner = seg.sum(alpha * g)
        _accum(scores, alpha * (g - np.take(inner, seg.ids)))
    return _result(alpha, (scores,), backward)


def weighted_segment_sum(weights, values, seg):
    """``out[r] = sum_{e: ids[e] = r} weights[e] * values[e]``."""
    return centered_segment_sum(weights, values, seg)[0]


def centered_segment_sum(weights, values, seg, center=None):
    """``out[r] = sum_{e: ids[e] = r} weights[e] * (values[e] - mu)``.

    ``center`` is ``None`` (``mu = 0``), ``"batch"`` (``mu`` is the mean of
    ``values`` over all edges and is differentiated through) or a fixed
    vector. Returns ``(tensor, mu)``.
    """
    w, v = weights.data, values.data
    if center is None:
        mu = np.zeros(v.shape[1], dtype=v.dtype)
    elif isinstance(center, str):
        mu = v.mean(axis=0) if len(v) else np.zeros(v.shape[1], dtype=v.dtype)
    else:
        mu = np.asarray(center, dtype=v.dtype)
    out = kernels.weighted_scatter(w, v, mu, seg.ids, seg.n)

    def backward(g):
        g = np.ascontiguousarray(g)
        shift = np.zeros_like(mu)
        if isinstance(center, str) and len(v):
            # d mu / d values spreads -(sum_r S_r g_r) / E over every edge
            mass = np.bincount(seg.ids, weights=w, minlength=seg.n).astype(w.dtype)
            shift = -(mass @ g) / len(v)
        dv, dw = kernels.weighted_scatter_backward(g, w, v, mu, shift, seg.ids)
        _accum(values, dv)
        _accum(weights, dw)
    return _result(out, (weights, values), backward), mu


def mse(pred, target):
    target = np.asarray(target, dtype=pred.data.dtype)
    diff = pred.data - target
    n = diff.size
    return _result(np.asarray((diff * diff).sum() / n), (pred,),
                   lambda g: _accum(pred, (2.0 / n) * g * diff))
