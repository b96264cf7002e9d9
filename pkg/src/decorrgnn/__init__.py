"""Graph classification that stays stable under distribution shift.

A differentiable pooling stage turns each graph into a fixed set of aligned
cluster-level variables; per-batch sample weights learned against a kernel
independence criterion decorrelate those variables; the classifier is then
fit on the reweighted loss.  Ships with a synthetic motif benchmark whose
train/test correlation shift is controllable.
"""

from .cvd import (HsicConfig, SampleWeights, global_objective, hsic0,
                  learn_weights, single_treatment_objective, weighted_hsic)
from .data import (Dataset, DenseBatch, Graph, batch, generate_dataset,
                   generate_graph, load_dataset, make_motif, save_dataset,
                   unbatch)
from .pooling import HighLevelBatch, align_concat, diffpool, stack_batch
from .rng import Rng
from .training import (TrainConfig, build_model, evaluate, load_model,
                       save_model, train, weighted_loss)

__all__ = [
    "HsicConfig", "SampleWeights", "global_objective", "hsic0", "learn_weights",
    "single_treatment_objective", "weighted_hsic", "Dataset", "DenseBatch",
    "Graph", "batch", "generate_dataset", "generate_graph", "load_dataset",
    "make_motif", "save_dataset", "unbatch", "HighLevelBatch", "align_concat",
    "diffpool", "stack_batch", "Rng", "TrainConfig", "build_model", "evaluate",
    "load_model", "save_model", "train", "weighted_loss",
]
