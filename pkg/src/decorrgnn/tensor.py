"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Define-by-run: every operation appends a backward closure to the tensors it
produces, and ``grad`` runs one reverse topological sweep.  Tapes are
rebuilt on every forward pass and are confined to a single thread.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "ParameterError",
    "grad",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "relu",
    "sigmoid",
    "softplus",
    "exp",
    "log",
    "power",
    "tsum",
    "tmean",
    "row_softmax",
    "rbf_kernel",
    "neighbor_max",
    "as_tensor",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not compose."""


class ParameterError(ValueError):
    """Raised on invalid scalar parameters (e.g. non-positive bandwidth)."""


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr


class Tensor:
    """A float64 array plus an optional gradient slot and backward rule.

    ``data`` is treated as immutable once the tensor participates in an
    operation; gradients accumulate into ``grad`` during the backward sweep.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done",
                 "_grad_shared")

    def __init__(self, values, requires_grad: bool = False):
        self.data = _as_array(values)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self._done = False
        self._grad_shared = False

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        # First contribution keeps a reference (most nodes have one consumer);
        # later ones copy-on-write so shared upstream buffers stay intact.
        if self.grad is None:
            self.grad = g
            self._grad_shared = True
        elif self._grad_shared:
            self.grad = self.grad + g
            self._grad_shared = False
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _slice(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` to undo numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# -- elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def power(a, p: float) -> Tensor:
    """Elementwise power with a constant exponent."""
    a = as_tensor(a)
    data = a.data**p

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * p * a.data ** (p - 1.0))

    return _make(data, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    keep = a.data > 0
    data = np.where(keep, a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * keep)

    return _make(data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * data * (1.0 - data))

    return _make(data, (a,), backward)


def softplus(a) -> Tensor:
    """log(1 + exp(x)) computed without overflow for large |x|."""
    a = as_tensor(a)
    x = a.data
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    sig = 1.0 / (1.0 + np.exp(-x))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * sig)

    return _make(data, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * data)

    return _make(data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _make(data, (a,), backward)


# -- shape ops ---------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product; batched over leading dimensions like numpy matmul."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul: {a.shape} does not compose with {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2) if b.data.ndim > 1 else np.outer(g, b.data)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), backward)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    data = np.swapaxes(a.data, -1, -2)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.swapaxes(g, -1, -2))

    return _make(data, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return _make(data, (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _make(data, tuple(tensors), backward)


def _slice(a, key) -> Tensor:
    a = as_tensor(a)
    data = a.data[key]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, key, g)
            a._accumulate(full)

    return _make(data, (a,), backward)


# -- reductions ---------------------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape).copy())

    return _make(data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        n = a.data.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


# -- composite / specialized ---------------------------------------------------


def row_softmax(x, mask=None) -> Tensor:
    """Softmax over the last axis; rows where ``mask`` is 0 come out all-zero.

    Stabilized by max subtraction.  ``mask`` has the shape of ``x`` minus its
    last axis.
    """
    x = as_tensor(x)
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != x.shape[:-1]:
            raise ShapeError(f"row_softmax mask {mask.shape} vs rows {x.shape[:-1]}")
    shift = x - x.data.max(axis=-1, keepdims=True)
    e = exp(shift)
    out = e * power(e.sum(axis=-1, keepdims=True), -1.0)
    if mask is not None:
        out = out * mask[..., None]
    return out


def _pairwise_sq_dists(x: Tensor) -> Tensor:
    sq = tsum(x * x, axis=-1, keepdims=True)
    d = sq + transpose(sq) - 2.0 * matmul(x, transpose(x))
    return relu(d)  # clamp the negative round-off


def rbf_kernel(x, bandwidth: float) -> Tensor:
    """K_ij = exp(-||x_i - x_j||^2 / (2 bandwidth^2)) for row samples of x."""
    if bandwidth <= 0:
        raise ParameterError(f"rbf_kernel bandwidth must be positive, got {bandwidth}")
    x = as_tensor(x)
    d = _pairwise_sq_dists(x)
    return exp(d * (-1.0 / (2.0 * bandwidth**2)))


def neighbor_max(values, adjacency) -> Tensor:
    """Per-node elementwise max of ``values`` over graph neighbors.

    values: (..., n, c); adjacency: (..., n, n) nonnegative, entry [v, u] > 0
    meaning u is a neighbor of v.  Nodes without neighbors get a zero row.
    Backward routes each channel's gradient to the argmax neighbor.
    """
    values = as_tensor(values)
    adj = np.asarray(adjacency, dtype=np.float64)
    nbr = adj > 0
    expanded = np.where(nbr[..., None], values.data[..., None, :, :], -np.inf)
    raw = expanded.max(axis=-2)
    arg = expanded.argmax(axis=-2)
    has_nbr = nbr.any(axis=-1)
    data = np.where(has_nbr[..., None], raw, 0.0)

    def backward(g):
        if not values.requires_grad:
            return
        gv = np.zeros_like(values.data)
        g_eff = g * has_nbr[..., None]
        lead = np.indices(arg.shape, sparse=False)
        idx = tuple(lead[:-2]) + (arg,) + (lead[-1],)
        np.add.at(gv, idx, g_eff)
        values._accumulate(gv)

    return _make(data, (values,), backward)


# -- backward sweep -------------------------------------------------------------


def grad(loss: Tensor):
    """Run the reverse sweep from a scalar loss, filling ``.grad`` fields."""
    if loss.data.size != 1:
        raise ShapeError(f"grad expects a scalar loss, got shape {loss.shape}")
    if loss._done:
        raise RuntimeError("grad already called on this tape; rebuild the forward pass")
    loss._done = True

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

    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
