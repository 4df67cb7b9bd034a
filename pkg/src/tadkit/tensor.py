"""Minimal dense-tensor engine with reverse-mode differentiation.

Covers exactly the operations the detection network needs: 1D convolution
and max pooling over (time, channels) arrays, the usual activations, and
the handful of elementwise/reduction ops that the losses are built from.
Everything is float64 and numpy-backed; forward passes are pure functions
of their inputs.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigError, UsageError

DTYPE = np.float64


def _asarray(x) -> np.ndarray:
    return np.asarray(x, dtype=DTYPE)


class Tensor:
    """A numpy array plus the bookkeeping needed for backpropagation.

    Gradients are accumulated into ``.grad`` (lazily created) when
    ``backward()`` is called on a downstream scalar.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = _asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from a scalar through the recorded graph."""
        if self.data.size != 1:
            raise UsageError("backward() is only defined for scalar tensors")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in visited:
                continue
            if expanded:
                visited.add(id(node))
                topo.append(node)
                continue
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Tensor, np.ndarray, list)):
            return mul(self, reciprocal(as_tensor(other)))
        return mul(self, 1.0 / float(other))

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)


class Parameter(Tensor):
    """A named leaf tensor updated by the optimizer."""

    __slots__ = ("name",)

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True)
        self.name = str(name)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def as_tensor(x) -> Tensor:
    """Wrap arrays/scalars as constant tensors; pass tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(_asarray(x))


def _binary_shapes(a, b):
    if a.data.shape == b.data.shape:
        return
    if a.data.ndim == 0 or b.data.ndim == 0:
        return
    raise UsageError(
        f"elementwise op requires equal shapes or a scalar, got {a.data.shape} and {b.data.shape}"
    )


def _reduce_to(g, shape):
    # undo scalar broadcasting
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=DTYPE).reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(g, b.data.shape))

    out._backward_fn = backward_fn
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(g * a.data, b.data.shape))

    out._backward_fn = backward_fn
    return out


def square(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * a.data, parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(2.0 * a.data * g)

    out._backward_fn = backward_fn
    return out


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(1.0 / a.data, parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(-g / (a.data * a.data))

    out._backward_fn = backward_fn
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.exp(a.data), parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(out.data * g)

    out._backward_fn = backward_fn
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.data), parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    out._backward_fn = backward_fn
    return out


def clip(a, lo, hi) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes through the interior."""
    a = as_tensor(a)
    out = Tensor(np.clip(a.data, lo, hi), parents=(a,))
    mask = (a.data >= lo) & (a.data <= hi)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    out._backward_fn = backward_fn
    return out


def smooth_l1(a) -> Tensor:
    """Elementwise smooth L1: 0.5*x^2 for |x| < 1, |x| - 0.5 otherwise."""
    a = as_tensor(a)
    absx = np.abs(a.data)
    inner = absx < 1.0
    out = Tensor(np.where(inner, 0.5 * a.data * a.data, absx - 0.5), parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g * np.where(inner, a.data, np.sign(a.data)))

    out._backward_fn = backward_fn
    return out


def tsum(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(), parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(np.full(a.data.shape, float(g), dtype=DTYPE))

    out._backward_fn = backward_fn
    return out


def tmean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    if n == 0:
        raise UsageError("mean of an empty tensor")
    out = Tensor(a.data.mean(), parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(np.full(a.data.shape, float(g) / n, dtype=DTYPE))

    out._backward_fn = backward_fn
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    out._backward_fn = backward_fn
    return out


def take(a, index) -> Tensor:
    """Differentiable indexing (slices, integer arrays, tuples thereof)."""
    a = as_tensor(a)
    out = Tensor(a.data[index], parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, index, g)
            a._accumulate(full)

    out._backward_fn = backward_fn
    return out


def concat(tensors: Sequence, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise UsageError("concat of an empty sequence")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    out._backward_fn = backward_fn
    return out


def _require_finite(name, data):
    if not np.isfinite(data).all():
        raise UsageError(f"{name} requires finite inputs")


def relu(a) -> Tensor:
    a = as_tensor(a)
    _require_finite("relu", a.data)
    out = Tensor(np.maximum(a.data, 0.0), parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0))

    out._backward_fn = backward_fn
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    _require_finite("sigmoid", a.data)
    # evaluate exp only on the sign that cannot overflow
    x = np.atleast_1d(a.data)
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    s[~pos] = e / (1.0 + e)
    out = Tensor(s.reshape(a.data.shape), parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g * out.data * (1.0 - out.data))

    out._backward_fn = backward_fn
    return out


def softmax(a, axis=-1) -> Tensor:
    """Rowwise softmax with max subtraction for stability."""
    a = as_tensor(a)
    _require_finite("softmax", a.data)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            dot = (g * out.data).sum(axis=axis, keepdims=True)
            a._accumulate(out.data * (g - dot))

    out._backward_fn = backward_fn
    return out


def logsumexp(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    _require_finite("logsumexp", a.data)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    sums = e.sum(axis=axis, keepdims=True)
    out = Tensor(np.squeeze(m + np.log(sums), axis=axis), parents=(a,))
    soft = e / sums

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(np.expand_dims(g, axis) * soft)

    out._backward_fn = backward_fn
    return out


def _same_padding(length, kernel, stride):
    out_len = -(-length // stride)  # ceil division
    pad = max((out_len - 1) * stride + kernel - length, 0)
    left = pad // 2
    return out_len, left, pad - left


def conv1d(x, kernel, bias, stride=1, padding="same") -> Tensor:
    """Temporal cross-correlation of a (T, C_in) input with a (K, C_in, C_out) kernel.

    Same padding is symmetric zeros with the extra zero on the right;
    output length is ceil(T / stride).
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.data.ndim != 2 or kernel.data.ndim != 3:
        raise ConfigError(
            f"conv1d expects (T, C_in) input and (K, C_in, C_out) kernel, "
            f"got {x.data.shape} and {kernel.data.shape}"
        )
    T, c_in = x.data.shape
    K, kc_in, c_out = kernel.data.shape
    if K < 1:
        raise ConfigError("conv1d kernel size must be >= 1")
    if stride < 1:
        raise ConfigError(f"conv1d stride must be >= 1, got {stride}")
    if kc_in != c_in:
        raise ConfigError(f"kernel expects {kc_in} input channels, input has {c_in}")
    if bias.data.shape != (c_out,):
        raise ConfigError(f"bias shape {bias.data.shape} does not match {c_out} filters")

    if padding == "same":
        out_len, left, right = _same_padding(T, K, stride)
    elif padding == "valid":
        if T < K:
            raise ConfigError(f"valid conv needs input length >= kernel ({T} < {K})")
        out_len, left, right = (T - K) // stride + 1, 0, 0
    else:
        raise ConfigError(f"unknown padding mode {padding!r}")

    padded = np.zeros((left + T + right, c_in), dtype=DTYPE)
    padded[left:left + T] = x.data
    out_data = np.tile(bias.data, (out_len, 1))
    for j in range(K):
        out_data += padded[j:j + stride * out_len:stride] @ kernel.data[j]
    out = Tensor(out_data, parents=(x, kernel, bias))

    def backward_fn(g):
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0))
        if kernel.requires_grad:
            kg = np.empty_like(kernel.data)
            for j in range(K):
                kg[j] = padded[j:j + stride * out_len:stride].T @ g
            kernel._accumulate(kg)
        if x.requires_grad:
            pg = np.zeros_like(padded)
            for j in range(K):
                pg[j:j + stride * out_len:stride] += g @ kernel.data[j].T
            x._accumulate(pg[left:left + T])

    out._backward_fn = backward_fn
    return out


def maxpool1d(x, window, stride) -> Tensor:
    """Per-channel windowed max with same padding (-inf fill).

    Output length is ceil(T / stride); the gradient routes to the first
    maximum inside each window.
    """
    x = as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[0] == 0:
        raise ConfigError(f"maxpool1d expects a nonempty (T, C) input, got {x.data.shape}")
    if window < 1:
        raise ConfigError(f"maxpool1d window must be >= 1, got {window}")
    if stride < 1:
        raise ConfigError(f"maxpool1d stride must be >= 1, got {stride}")
    T, C = x.data.shape
    out_len, left, right = _same_padding(T, window, stride)
    padded = np.full((left + T + right, C), -np.inf, dtype=DTYPE)
    padded[left:left + T] = x.data
    stacked = np.stack(
        [padded[j:j + stride * out_len:stride] for j in range(window)], axis=1
    )  # (out_len, window, C)
    arg = stacked.argmax(axis=1)  # first max wins ties
    out = Tensor(stacked.max(axis=1), parents=(x,))

    def backward_fn(g):
        if x.requires_grad:
            pg = np.zeros_like(padded)
            rows = np.arange(out_len)[:, None] * stride + arg
            np.add.at(pg, (rows, np.arange(C)[None, :]), g)
            x._accumulate(pg[left:left + T])

    out._backward_fn = backward_fn
    return out
