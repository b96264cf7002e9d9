"""Differentiable pooling into cluster-level variables.

One pooling unit maps a (padded) graph to a fixed number of clusters via a
learned row-stochastic assignment, then the cluster rows are concatenated in
row order so that cluster k occupies the same column block for every graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import GnnStack
from .tensor import Tensor


@dataclass
class PoolResult:
    coarse_adjacency: Tensor  # (..., n_clusters, n_clusters)
    coarse_features: Tensor  # (..., n_clusters, d)
    assignment: Tensor  # (..., n_nodes, n_clusters), valid rows sum to 1


def diffpool(adjacency, features, mask, embed_stack: GnnStack,
             pool_stack: GnnStack, training: bool = True) -> PoolResult:
    """One coarsening step: assignment from the pool stack, features from the
    embed stack; padded node rows of the assignment are zeroed so padding
    contributes nothing to the coarse graph."""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    z = embed_stack(adjacency, features, mask, training)
    s_logits = pool_stack(adjacency, features, mask, training)
    # BN + masking zeroes padded logit rows; real rows still softmax correctly.
    s = T.row_softmax(s_logits, mask)
    st = T.transpose(s)
    coarse_features = T.matmul(st, z)
    coarse_adjacency = T.matmul(T.matmul(st, Tensor(adjacency)), s)
    return PoolResult(coarse_adjacency, coarse_features, s)


def auxiliary_losses(result: PoolResult, adjacency, mask) -> Tensor:
    """Optional pooling regularizers, off by default in training.

    Link-prediction term ‖A − S·Sᵀ‖²_F plus the mean entropy of valid
    assignment rows, both averaged over graphs.
    """
    adjacency = np.asarray(adjacency, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    s = result.assignment
    m = float(np.prod(mask.shape[:-1])) if mask.ndim > 1 else 1.0
    diff = Tensor(adjacency) - T.matmul(s, T.transpose(s))
    diff = diff * mask[..., None] * mask[..., None, :]
    link = T.tsum(diff * diff) * (1.0 / m)
    # entropy of valid rows; padded rows are all-zero and contribute nothing
    ent = T.tsum(s * T.log(s + 1e-12) * (-1.0)) * (1.0 / max(mask.sum(), 1.0))
    return link + ent


def align_concat(coarse_features: Tensor) -> Tensor:
    """Concatenate cluster rows in row order: (..., n_c, d) -> (..., n_c * d)."""
    shape = coarse_features.shape
    return T.reshape(coarse_features, shape[:-2] + (shape[-1] * shape[-2],))


def stack_batch(h_list) -> Tensor:
    """Stack per-graph vectors into an (m, n_c * d) matrix."""
    lengths = {t.shape[-1] for t in h_list}
    if len(lengths) != 1:
        raise T.ShapeError(f"ragged high-level vectors: lengths {sorted(lengths)}")
    return T.concat([T.reshape(t, (1, t.shape[-1])) for t in h_list], axis=0)


@dataclass
class HighLevelBatch:
    """Aligned high-level variables: block k is columns [k*d, (k+1)*d)."""

    h: Tensor  # m x (n_blocks * block_dim)
    n_blocks: int
    block_dim: int

    def __post_init__(self):
        if self.h.shape[-1] != self.n_blocks * self.block_dim:
            raise T.ShapeError(
                f"{self.h.shape[-1]} columns do not split into "
                f"{self.n_blocks} blocks of {self.block_dim}")

    def block(self, k: int) -> Tensor:
        """k-th variable block, 0-based."""
        if not 0 <= k < self.n_blocks:
            raise T.ParameterError(f"block index {k} out of range [0, {self.n_blocks})")
        return self.h[:, k * self.block_dim:(k + 1) * self.block_dim]

    def detached(self) -> "HighLevelBatch":
        return HighLevelBatch(Tensor(self.h.data.copy()), self.n_blocks, self.block_dim)
