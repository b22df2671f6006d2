"""Dense float64 tensors with reverse-mode differentiation.

Every op records its inputs and a backward closure; calling ``backward()``
on a scalar output walks the graph in reverse topological order and
accumulates gradients into each participating tensor that has
``requires_grad=True``.  Discrete outputs (sort ranks, argmax indices,
positivity indicators) are constants during the backward pass: gradients
flow through values, never through index choices.

All data lives in numpy float64 arrays.  Reductions run in numpy's fixed
native order, so repeated evaluation of the same graph is deterministic.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NORM_EPS = 1e-12  # guard for vector norms before division


class ShapeError(ValueError):
    """Raised when an op receives operands of incompatible shape."""


class Tensor:
    """A numpy-backed value node in the computation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._backward = None
        self._prev = ()

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ------------------------------------------------------

    def backward(self):
        """Backprop from this scalar through the recorded graph.

        Gradients of every tensor reachable from this node are reset to
        zero first, so each call yields fresh gradients (they do not
        accumulate across calls).
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar output, got shape {self.shape}")

        # iterative topological sort; children tuples keep deterministic order
        topo = []
        visited = set()
        stack = [(self, iter(self._prev))]
        visited.add(id(self))
        while stack:
            node, children = stack[-1]
            advanced = False
            for child in children:
                if id(child) not in visited:
                    visited.add(id(child))
                    stack.append((child, iter(child._prev)))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                topo.append(node)

        for node in topo:
            node.grad = np.zeros_like(node.data) if node.requires_grad else None
        if self.requires_grad:
            self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_wrap(other))

    def __rsub__(self, other):
        return add(_wrap(other), -self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return powc(self, exponent)

    # -- method sugar ----------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def t(self):
        return transpose2d(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data, parents, backward) -> Tensor:
    """Build a graph node; the backward closure is kept only when needed."""
    parents = [p for p in parents if isinstance(p, Tensor)]
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._prev = tuple(parents)
        out._backward = backward
    return out


def custom_op(data, parents, backward) -> Tensor:
    """Public hook for fused ops defined outside this module.

    ``backward`` is a closure reading ``out.grad`` and adding into the
    parents' ``grad`` arrays (which are pre-zeroed by ``backward()``).
    """
    return _node(data, parents, backward)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _add_grad(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        t.grad += _unbroadcast(g, t.data.shape)


# -- elementwise arithmetic ----------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = _node(a.data + b.data, (a, b), None)

    def backward():
        _add_grad(a, out.grad)
        _add_grad(b, out.grad)

    out._backward = backward if out.requires_grad else None
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = _node(a.data * b.data, (a, b), None)

    def backward():
        _add_grad(a, out.grad * b.data)
        _add_grad(b, out.grad * a.data)

    out._backward = backward if out.requires_grad else None
    return out


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = _node(a.data / b.data, (a, b), None)

    def backward():
        _add_grad(a, out.grad / b.data)
        _add_grad(b, -out.grad * a.data / (b.data * b.data))

    out._backward = backward if out.requires_grad else None
    return out


def powc(a, exponent: float) -> Tensor:
    """Raise to a constant (non-learned) exponent."""
    a = _wrap(a)
    c = float(exponent)
    out = _node(a.data**c, (a,), None)

    def backward():
        _add_grad(a, out.grad * c * a.data ** (c - 1.0))

    out._backward = backward if out.requires_grad else None
    return out


def log(a) -> Tensor:
    """Natural logarithm; defined for strictly positive inputs."""
    a = _wrap(a)
    out = _node(np.log(a.data), (a,), None)

    def backward():
        _add_grad(a, out.grad / a.data)

    out._backward = backward if out.requires_grad else None
    return out


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out = _node(np.sqrt(a.data), (a,), None)

    def backward():
        _add_grad(a, out.grad * 0.5 / out.data)

    out._backward = backward if out.requires_grad else None
    return out


def relu(a) -> Tensor:
    a = _wrap(a)
    out = _node(np.maximum(a.data, 0.0), (a,), None)

    def backward():
        _add_grad(a, out.grad * (a.data > 0.0))

    out._backward = backward if out.requires_grad else None
    return out


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    x = a.data
    pos = x >= 0
    y = np.empty_like(x)
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = _node(y, (a,), None)

    def backward():
        _add_grad(a, out.grad * out.data * (1.0 - out.data))

    out._backward = backward if out.requires_grad else None
    return out


def clamp_passthrough(a, lo: float, hi: float) -> Tensor:
    """Clip values to [lo, hi] but let gradients pass unchanged.

    Used to shed float noise from quantities whose mathematical range is
    already [lo, hi] (for example cosines of unit vectors).
    """
    a = _wrap(a)
    out = _node(np.clip(a.data, lo, hi), (a,), None)

    def backward():
        _add_grad(a, out.grad)

    out._backward = backward if out.requires_grad else None
    return out


# -- reductions and reshaping ---------------------------------------------


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), None)

    def backward():
        g = out.grad
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(ax % a.data.ndim for ax in axes)
            g = np.expand_dims(g, tuple(sorted(axes)))
        _add_grad(a, np.broadcast_to(g, a.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = 1
        for ax in axes:
            count *= a.data.shape[ax]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = _node(a.data.reshape(shape), (a,), None)

    def backward():
        _add_grad(a, out.grad.reshape(a.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def transpose2d(a) -> Tensor:
    a = _wrap(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose2d needs a matrix, got shape {a.shape}")
    out = _node(a.data.T.copy(), (a,), None)

    def backward():
        _add_grad(a, out.grad.T)

    out._backward = backward if out.requires_grad else None
    return out


def index0(a, i: int) -> Tensor:
    """Select one slice along axis 0."""
    a = _wrap(a)
    out = _node(a.data[i], (a,), None)

    def backward():
        if a.requires_grad:
            a.grad[i] += out.grad

    out._backward = backward if out.requires_grad else None
    return out


def stack(tensors) -> Tensor:
    """Stack tensors of equal shape along a new leading axis."""
    tensors = [_wrap(t) for t in tensors]
    out = _node(np.stack([t.data for t in tensors]), tensors, None)

    def backward():
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.grad += out.grad[i]

    out._backward = backward if out.requires_grad else None
    return out


def gather_pixels(x, indices) -> Tensor:
    """Gather channel vectors from a [N, C, H, W] tensor.

    ``indices`` is a sequence of (n, h, w) triples; the result has shape
    [len(indices), C].  The backward pass scatter-adds into the source.
    """
    x = _wrap(x)
    if x.data.ndim != 4:
        raise ShapeError(f"gather_pixels needs [N, C, H, W], got shape {x.shape}")
    rows = np.stack([x.data[n, :, h, w] for n, h, w in indices])
    out = _node(rows, (x,), None)

    def backward():
        if x.requires_grad:
            for k, (n, h, w) in enumerate(indices):
                x.grad[n, :, h, w] += out.grad[k]

    out._backward = backward if out.requires_grad else None
    return out


# -- contractions ----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Strict 2-D matrix product [R, K] x [K, S] -> [R, S]."""
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul needs two matrices, got shapes {a.shape} and {b.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ: {a.shape} x {b.shape}"
        )
    out = _node(a.data @ b.data, (a, b), None)

    def backward():
        if a.requires_grad:
            a.grad += out.grad @ b.data.T
        if b.requires_grad:
            b.grad += a.data.T @ out.grad

    out._backward = backward if out.requires_grad else None
    return out


def _parse_einsum2(subscripts: str):
    lhs, out_sub = subscripts.replace(" ", "").split("->")
    a_sub, b_sub = lhs.split(",")
    for sub in (a_sub, b_sub, out_sub):
        if len(set(sub)) != len(sub):
            raise ShapeError(f"einsum2 does not support repeated indices: {subscripts}")
    known = set(a_sub) | set(b_sub)
    if not set(out_sub) <= known:
        raise ShapeError(f"einsum2 output uses unknown indices: {subscripts}")
    for sub, other in ((a_sub, b_sub), (b_sub, a_sub)):
        for ch in sub:
            if ch not in out_sub and ch not in other:
                raise ShapeError(
                    f"einsum2 cannot differentiate lone summed index {ch!r}: {subscripts}"
                )
    return a_sub, b_sub, out_sub


def einsum2(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum with automatic backward.

    Every index of each operand must appear in the output or in the other
    operand, which covers all contraction patterns used in this package.
    """
    a, b = _wrap(a), _wrap(b)
    a_sub, b_sub, out_sub = _parse_einsum2(subscripts)
    out = _node(np.einsum(subscripts, a.data, b.data, optimize=True), (a, b), None)

    def backward():
        if a.requires_grad:
            a.grad += np.einsum(f"{out_sub},{b_sub}->{a_sub}", out.grad, b.data, optimize=True)
        if b.requires_grad:
            b.grad += np.einsum(f"{out_sub},{a_sub}->{b_sub}", out.grad, a.data, optimize=True)

    out._backward = backward if out.requires_grad else None
    return out


def pointwise_conv(x, w, b) -> Tensor:
    """Per-pixel affine map over channels: [N, Cin, H, W] -> [N, Cout, H, W]."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    if x.data.ndim != 4 or w.data.ndim != 2:
        raise ShapeError(
            f"pointwise_conv needs x[N,C,H,W] and w[Cout,Cin], got {x.shape} and {w.shape}"
        )
    if w.data.shape[1] != x.data.shape[1]:
        raise ShapeError(
            f"pointwise_conv: channel mismatch: x has {x.shape[1]}, w expects {w.shape[1]}"
        )
    if b.data.shape != (w.data.shape[0],):
        raise ShapeError(
            f"pointwise_conv: bias shape {b.shape} does not match {w.shape[0]} outputs"
        )
    data = np.einsum("oc,nchw->nohw", w.data, x.data, optimize=True) + b.data[None, :, None, None]
    out = _node(data, (x, w, b), None)

    def backward():
        g = out.grad
        if x.requires_grad:
            x.grad += np.einsum("oc,nohw->nchw", w.data, g, optimize=True)
        if w.requires_grad:
            w.grad += np.einsum("nohw,nchw->oc", g, x.data, optimize=True)
        if b.requires_grad:
            b.grad += g.sum(axis=(0, 2, 3))

    out._backward = backward if out.requires_grad else None
    return out


def conv3x3(x, w, b, stride: int = 1) -> Tensor:
    """3x3 convolution with unit zero padding: [N, Cin, H, W] -> [N, Cout, H', W']."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    if x.data.ndim != 4 or w.data.ndim != 4 or w.data.shape[2:] != (3, 3):
        raise ShapeError(
            f"conv3x3 needs x[N,C,H,W] and w[Cout,Cin,3,3], got {x.shape} and {w.shape}"
        )
    if w.data.shape[1] != x.data.shape[1]:
        raise ShapeError(
            f"conv3x3: channel mismatch: x has {x.shape[1]}, w expects {w.shape[1]}"
        )
    n, c, h, wdt = x.data.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, ::stride, ::stride]
    data = np.einsum("nchwij,ocij->nohw", windows, w.data, optimize=True) + b.data[None, :, None, None]
    out = _node(data, (x, w, b), None)

    def backward():
        g = out.grad
        ho, wo = g.shape[2], g.shape[3]
        if w.requires_grad:
            w.grad += np.einsum("nohw,nchwij->ocij", g, windows, optimize=True)
        if b.requires_grad:
            b.grad += g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gx = np.zeros_like(xp)
            for i in range(3):
                for j in range(3):
                    gx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                        np.einsum("oc,nohw->nchw", w.data[:, :, i, j], g, optimize=True)
                    )
            x.grad += gx[:, :, 1 : 1 + h, 1 : 1 + wdt]

    out._backward = backward if out.requires_grad else None
    return out


def upsample2(x) -> Tensor:
    """Nearest-neighbour 2x spatial upsampling of [N, C, H, W]."""
    x = _wrap(x)
    if x.data.ndim != 4:
        raise ShapeError(f"upsample2 needs [N, C, H, W], got shape {x.shape}")
    data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    out = _node(data, (x,), None)

    def backward():
        if x.requires_grad:
            n, c, h2, w2 = out.grad.shape
            x.grad += out.grad.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))

    out._backward = backward if out.requires_grad else None
    return out


# -- row softmax and channel normalization ----------------------------------


def softmax_rows(a) -> Tensor:
    """Row-wise softmax of a matrix, stabilized by max subtraction."""
    a = _wrap(a)
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs a matrix, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = _node(y, (a,), None)

    def backward():
        g = out.grad
        dot = (g * out.data).sum(axis=1, keepdims=True)
        _add_grad(a, out.data * (g - dot))

    out._backward = backward if out.requires_grad else None
    return out


def l2_normalize(a, axis: int = 1) -> Tensor:
    """Scale vectors along ``axis`` to unit length.

    The norm is guarded by max(norm, NORM_EPS), so exact zero vectors map
    to zero vectors instead of dividing by zero.
    """
    a = _wrap(a)
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    denom = np.maximum(norm, NORM_EPS)
    out = _node(a.data / denom, (a,), None)

    def backward():
        g = out.grad
        live = norm > NORM_EPS  # below the guard the denominator is constant
        dot = (g * a.data).sum(axis=axis, keepdims=True)
        norm_safe = np.where(live, norm, 1.0)
        correction = np.where(live, a.data * dot / (denom * denom * norm_safe), 0.0)
        _add_grad(a, g / denom - correction)

    out._backward = backward if out.requires_grad else None
    return out


# -- discrete ops (constants under differentiation) --------------------------


def descending_rank(a) -> Tensor:
    """Per-row descending ranks: 0 marks the row's largest entry.

    Ties rank in order of lower column index.  The result is integer
    valued and never carries gradient.
    """
    data = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError(f"descending_rank needs a matrix, got shape {data.shape}")
    order = np.argsort(-data, axis=1, kind="stable")
    ranks = np.empty_like(order)
    cols = np.broadcast_to(np.arange(data.shape[1]), data.shape)
    np.put_along_axis(ranks, order, cols, axis=1)
    return Tensor(ranks.astype(np.float64))


# -- gradient verification ---------------------------------------------------


def grad_check(f, x: Tensor, h: float = 1e-4) -> float:
    """Compare analytic gradients of ``f`` against central differences.

    ``f`` maps the tensor ``x`` to a scalar Tensor.  Returns the maximum
    over coordinates of |analytic - numeric| / max(1, |numeric|).  ``f``
    must be deterministic; any discrete choices inside it have to be
    frozen so that repeated evaluation follows the same branch.
    """
    if not x.requires_grad:
        raise ValueError("grad_check needs a tensor with requires_grad=True")
    out = f(x)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ShapeError("grad_check needs f to produce a scalar Tensor")
    out.backward()
    analytic = x.grad.copy()

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        f_plus = f(x).item()
        flat[i] = keep - h
        f_minus = f(x).item()
        flat[i] = keep
        numeric = (f_plus - f_minus) / (2.0 * h)
        err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
        if err > worst:
            worst = err
    return worst
