"""Kernel-independence regularizer and per-batch sample-weight learning.

Dependence between two variable blocks is scored with the biased HSIC
estimator (m-1)^-2 tr(K P L P) on RBF kernels.  A batch's sample weights
live on the scaled simplex (sum = m) via m * softmax(logits) and are fitted
by plain gradient descent to minimize the sum of weighted HSIC values over
all block pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .pooling import HighLevelBatch
from .tensor import Tensor

BANDWIDTH_FLOOR = 1e-8


@dataclass
class HsicConfig:
    bandwidth_rule: str = "median_heuristic"  # or "fixed"
    bandwidth: float = 1.0  # used when bandwidth_rule == "fixed"
    decor_epochs: int = 50
    weight_lr: float = 1.3

    def __post_init__(self):
        if self.decor_epochs < 1:
            raise T.ParameterError("decor_epochs must be >= 1")
        if self.weight_lr <= 0:
            raise T.ParameterError("weight_lr must be positive")
        if self.bandwidth_rule not in ("median_heuristic", "fixed"):
            raise T.ParameterError(f"unknown bandwidth rule {self.bandwidth_rule!r}")


@dataclass
class SampleWeights:
    """Per-graph weights parameterized by pre-softmax logits; sum equals m."""

    logits: np.ndarray
    trajectory: list = field(default_factory=list)

    def weights(self) -> np.ndarray:
        z = self.logits - self.logits.max()
        e = np.exp(z)
        return len(self.logits) * e / e.sum()

    @classmethod
    def uniform(cls, m: int) -> "SampleWeights":
        return cls(np.zeros(m))


def _sq_dists(x: np.ndarray) -> np.ndarray:
    sq = (x * x).sum(axis=1, keepdims=True)
    return np.maximum(sq + sq.T - 2.0 * x @ x.T, 0.0)


def _median_from_sq_dists(d2: np.ndarray) -> float:
    iu = np.triu_indices(d2.shape[0], k=1)
    med = float(np.median(np.sqrt(d2[iu])))
    return max(med, BANDWIDTH_FLOOR)


def median_bandwidth(x: np.ndarray) -> float:
    """Median pairwise euclidean distance, floored away from zero."""
    return _median_from_sq_dists(_sq_dists(x))


def _center(k: np.ndarray) -> np.ndarray:
    row = k.mean(axis=1, keepdims=True)
    col = k.mean(axis=0, keepdims=True)
    return k - row - col + k.mean()


def _centered_kernel(x: Tensor, config: HsicConfig) -> Tensor:
    """P K P for the RBF kernel of x's rows, as one fused tape node.

    Centering is linear and self-adjoint, so the upstream gradient is simply
    centered and then routed through the RBF kernel; the bandwidth is treated
    as a constant of the forward pass.
    """
    x = T.as_tensor(x)
    d2 = _sq_dists(x.data)
    if config.bandwidth_rule == "fixed":
        bw = config.bandwidth
    else:
        bw = _median_from_sq_dists(d2)
    k = np.exp(d2 * (-1.0 / (2.0 * bw * bw)))
    data = _center(k)

    def backward(g):
        if not x.requires_grad:
            return
        gd2 = _center(g) * k * (-1.0 / (2.0 * bw * bw))
        s = gd2 + gd2.T
        x._accumulate(2.0 * (s.sum(axis=1, keepdims=True) * x.data - s @ x.data))

    return T._make(data, (x,), backward)


def _pair_term(kc: Tensor, lc: Tensor, m: int) -> Tensor:
    # tr(K P L P) == sum((P K P) * (P L P)) by idempotence and symmetry of P
    return T.tsum(kc * lc) * (1.0 / (m - 1) ** 2)


def _pairwise_trace_sum(kernels, m: int) -> Tensor:
    """sum_{i<j} tr-product of centered kernels, in O(len(kernels)) work."""
    scale = 1.0 / (m - 1) ** 2
    total = np.zeros_like(kernels[0].data)
    for k in kernels:
        total += k.data
    value = 0.5 * scale * (float((total * total).sum())
                           - sum(float((k.data * k.data).sum()) for k in kernels))

    def backward(g):
        coeff = float(g) * scale
        for k in kernels:
            if k.requires_grad:
                k._accumulate(coeff * (total - k.data))

    return T._make(np.asarray(value), tuple(kernels), backward)


def hsic0(u, v, config: HsicConfig | None = None) -> Tensor:
    """Biased HSIC estimate between row samples of u and v; >= 0, symmetric."""
    config = config or HsicConfig()
    u, v = T.as_tensor(u), T.as_tensor(v)
    m = u.shape[0]
    if v.shape[0] != m:
        raise T.ShapeError(f"sample counts differ: {u.shape[0]} vs {v.shape[0]}")
    if m < 2:
        raise T.ParameterError(f"HSIC needs at least 2 samples, got {m}")
    return _pair_term(_centered_kernel(u, config), _centered_kernel(v, config), m)


def _weight_tensor(w) -> Tensor:
    """Weights as a column Tensor; accepts SampleWeights, Tensor or array."""
    if isinstance(w, SampleWeights):
        logits = Tensor(w.logits)
        return _softmax_weights(logits)
    return T.reshape(T.as_tensor(w), (-1, 1))


def _softmax_weights(logits: Tensor) -> Tensor:
    m = logits.shape[0]
    shifted = logits - logits.data.max()
    e = T.exp(shifted)
    return T.reshape(e * T.power(e.sum(), -1.0) * float(m), (m, 1))


def weighted_hsic(u, v, w, config: HsicConfig | None = None) -> Tensor:
    """HSIC of the row-reweighted samples (w_i scales row i of both inputs)."""
    config = config or HsicConfig()
    u, v = T.as_tensor(u), T.as_tensor(v)
    wcol = _weight_tensor(w)
    return hsic0(u * wcol, v * wcol, config)


def global_objective(h: HighLevelBatch, w, config: HsicConfig | None = None) -> Tensor:
    """Sum of weighted HSIC over all block pairs i < j."""
    config = config or HsicConfig()
    if h.n_blocks < 2:
        return Tensor(0.0)
    m = h.h.shape[0]
    wcol = _weight_tensor(w)
    kernels = [_centered_kernel(h.block(k) * wcol, config) for k in range(h.n_blocks)]
    return _pairwise_trace_sum(kernels, m)


def single_treatment_objective(h: HighLevelBatch, treatment_index: int, w,
                               config: HsicConfig | None = None) -> Tensor:
    """Dependence of one block on all the others (diagnostic view)."""
    config = config or HsicConfig()
    if not 0 <= treatment_index < h.n_blocks:
        raise T.ParameterError(
            f"treatment index {treatment_index} out of range [0, {h.n_blocks})")
    m = h.h.shape[0]
    wcol = _weight_tensor(w)
    kernels = [_centered_kernel(h.block(k) * wcol, config) for k in range(h.n_blocks)]
    total = Tensor(0.0)
    for p in range(h.n_blocks):
        if p != treatment_index:
            total = total + _pair_term(kernels[treatment_index], kernels[p], m)
    return total


def learn_weights(h: HighLevelBatch, config: HsicConfig | None = None) -> SampleWeights:
    """Fit sample weights by gradient descent on the global objective.

    ``h`` is treated as a constant: gradients flow to the weight logits only.
    The objective value at each step (including the start) is recorded on the
    returned weights' ``trajectory``.
    """
    config = config or HsicConfig()
    h = h.detached()
    m = h.h.shape[0]
    logits = Tensor(np.zeros(m), requires_grad=True)
    trajectory = []
    for _ in range(config.decor_epochs):
        obj = global_objective(h, _softmax_weights(logits), config)
        value = float(obj.data)
        if not np.isfinite(value):
            raise FloatingPointError(
                f"decorrelation objective became non-finite at step {len(trajectory)}")
        trajectory.append(value)
        logits.zero_grad()
        T.grad(obj)
        logits = Tensor(logits.data - config.weight_lr * logits.grad, requires_grad=True)
    final = global_objective(h, _softmax_weights(logits), config)
    trajectory.append(float(final.data))
    return SampleWeights(logits=logits.data.copy(), trajectory=trajectory)
