"""Alternating training loop: warm-up, per-batch weight learning, weighted
parameter updates, plateau learning-rate schedule and best-epoch selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .cvd import HsicConfig, SampleWeights, learn_weights
from .data import FEATURE_DIM, Dataset, DenseBatch, batch
from .layers import GnnStack
from .metrics import evaluate_scores
from .pooling import HighLevelBatch, align_concat, auxiliary_losses, diffpool
from .rng import Rng
from .tensor import Tensor

SNAPSHOT_VERSION = 1

VARIANTS = ("stable_sage", "stable_gcn", "baseline_sage", "baseline_gcn")
_LAYER_VARIANT = {"sage": "sage", "gcn": "gcn"}
_DEFAULT_CLUSTERS = {"sage": 7, "gcn": 8}


@dataclass
class TrainConfig:
    variant: str = "stable_sage"
    epochs: int = 50
    warmup_epochs: int = 20
    batch_size: int = 250
    lr: float = 1e-3
    weight_decay: float = 0.0
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    hidden: int = 64
    n_clusters: int = 0  # 0 = per-variant default
    seed: int = 0
    decor: HsicConfig = field(default_factory=HsicConfig)
    use_cvd: bool = True
    aux_pool_weight: float = 0.0  # optional pooling regularizers, off by default

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.warmup_epochs > self.epochs:
            raise ValueError("warmup_epochs must not exceed epochs")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (pairwise estimators need it)")
        if self.n_clusters == 0:
            self.n_clusters = _DEFAULT_CLUSTERS[self.family]

    @property
    def family(self) -> str:
        return self.variant.split("_")[1]

    @property
    def is_stable(self) -> bool:
        return self.variant.startswith("stable")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_f1: float
    val_auc: float
    mean_hsic: float
    lr: float


class BaselineModel:
    """5-layer message-passing stack, masked mean readout, linear head."""

    def __init__(self, config: TrainConfig, rng: Rng, d_in: int = FEATURE_DIM):
        h = config.hidden
        self.variant = config.variant
        self.d_in = d_in
        self.hidden = h
        self.n_clusters = 1
        self.stack = GnnStack(rng.child(0), _LAYER_VARIANT[config.family],
                              [d_in] + [h] * 5)
        self.head_w = Tensor(np.zeros((h, 1)), requires_grad=True)
        self.head_w.data[:] = _head_init(rng.child(1), h)
        self.head_b = Tensor(np.zeros(1), requires_grad=True)

    def forward(self, dense: DenseBatch, training: bool = True):
        mask = dense.node_mask
        h = self.stack(dense.adjacency, dense.features, mask, training)
        cnt = mask.sum(axis=-1, keepdims=True)
        readout = T.tsum(h * mask[..., None], axis=-2) * (1.0 / cnt)
        logits = T.reshape(readout @ self.head_w + self.head_b, (-1,))
        return HighLevelBatch(readout, 1, self.hidden), logits

    def named_params(self):
        yield from self.stack.named_params("stack")
        yield "head.weight", self.head_w
        yield "head.bias", self.head_b

    def bn_modules(self):
        for layer in self.stack.layers:
            yield layer.bn


class StableModel:
    """Embedding stack, one differentiable pooling unit, aligned concatenation
    of cluster rows, linear head on the high-level vector."""

    def __init__(self, config: TrainConfig, rng: Rng, d_in: int = FEATURE_DIM):
        h = config.hidden
        lv = _LAYER_VARIANT[config.family]
        self.variant = config.variant
        self.d_in = d_in
        self.hidden = h
        self.n_clusters = config.n_clusters
        self.smooth_stack = GnnStack(rng.child(0), lv, [d_in, h, h, h])
        self.embed_stack = GnnStack(rng.child(1), lv, [h, h, h, h])
        self.pool_stack = GnnStack(rng.child(2), lv, [h, h, h, self.n_clusters])
        self.head_w = Tensor(np.zeros((self.n_clusters * h, 1)), requires_grad=True)
        self.head_w.data[:] = _head_init(rng.child(3), self.n_clusters * h)
        self.head_b = Tensor(np.zeros(1), requires_grad=True)

    def forward(self, dense: DenseBatch, training: bool = True):
        mask = dense.node_mask
        smoothed = self.smooth_stack(dense.adjacency, dense.features, mask, training)
        pooled = diffpool(dense.adjacency, smoothed, mask,
                          self.embed_stack, self.pool_stack, training)
        self.last_pool = pooled
        h_mat = align_concat(pooled.coarse_features)
        logits = T.reshape(h_mat @ self.head_w + self.head_b, (-1,))
        return HighLevelBatch(h_mat, self.n_clusters, self.hidden), logits

    def named_params(self):
        yield from self.smooth_stack.named_params("smooth")
        yield from self.embed_stack.named_params("embed")
        yield from self.pool_stack.named_params("pool")
        yield "head.weight", self.head_w
        yield "head.bias", self.head_b

    def bn_modules(self):
        for stack in (self.smooth_stack, self.embed_stack, self.pool_stack):
            for layer in stack.layers:
                yield layer.bn


def _head_init(rng: Rng, fan_in: int) -> np.ndarray:
    limit = (6.0 / (fan_in + 1)) ** 0.5
    return rng.uniform(-limit, limit, size=(fan_in, 1))


def build_model(config: TrainConfig, d_in: int = FEATURE_DIM):
    cls = StableModel if config.is_stable else BaselineModel
    return cls(config, Rng(config.seed).child(0), d_in)


# -- state snapshots -----------------------------------------------------------


def state_dict(model) -> dict:
    state = {name: p.data.copy() for name, p in model.named_params()}
    for i, bn in enumerate(model.bn_modules()):
        state[f"__bn{i}.running_mean"] = bn.running_mean.copy()
        state[f"__bn{i}.running_var"] = bn.running_var.copy()
    return state


def load_state(model, state: dict):
    for name, p in model.named_params():
        p.data = state[name].copy()
    for i, bn in enumerate(model.bn_modules()):
        bn.running_mean = state[f"__bn{i}.running_mean"].copy()
        bn.running_var = state[f"__bn{i}.running_var"].copy()


def save_model(model, config: TrainConfig, path):
    entries = [{"name": name, "shape": list(arr.shape), "values": arr.ravel().tolist()}
               for name, arr in state_dict(model).items()]
    doc = {"version": SNAPSHOT_VERSION, "variant": model.variant,
           "hidden": model.hidden, "n_clusters": model.n_clusters,
           "d_in": model.d_in, "params": entries}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {doc.get('version')}")
    config = TrainConfig(variant=doc["variant"], hidden=doc["hidden"],
                         n_clusters=doc["n_clusters"])
    model = build_model(config, d_in=doc["d_in"])
    state = {e["name"]: np.asarray(e["values"]).reshape(e["shape"])
             for e in doc["params"]}
    load_state(model, state)
    return model


# -- loss and optimizer ----------------------------------------------------------


def weighted_loss(logits: Tensor, labels: np.ndarray, weights: np.ndarray) -> Tensor:
    """Sum of per-sample binary cross-entropies scaled by sample weights."""
    labels = np.asarray(labels, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    per_sample = T.softplus(logits) - logits * labels
    return T.tsum(per_sample * weights)


class Adam:
    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad**2
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p.data = p.data - self.lr * (mhat / (np.sqrt(vhat) + self.eps)
                                         + self.weight_decay * p.data)


class PlateauScheduler:
    """Halve the learning rate when the tracked loss stops improving."""

    def __init__(self, optimizer: Adam, factor: float = 0.5, patience: int = 5):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.best = np.inf
        self.stale = 0

    def step(self, loss: float):
        if loss < self.best:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale > self.patience:
                self.optimizer.lr *= self.factor
                self.stale = 0


# -- train / evaluate ----------------------------------------------------------


def predict_scores(model, graphs, chunk: int = 250) -> np.ndarray:
    """Sigmoid scores in dataset order, eval mode, frozen parameters."""
    scores = []
    for lo in range(0, len(graphs), chunk):
        dense = batch(graphs[lo:lo + chunk])
        _, logits = model.forward(dense, training=False)
        scores.append(1.0 / (1.0 + np.exp(-logits.data)))
    return np.concatenate(scores)


def evaluate(model, dataset: Dataset) -> dict:
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    scores = predict_scores(model, dataset.graphs)
    return evaluate_scores(scores, dataset.labels())


def _val_loss(model, dataset: Dataset) -> float:
    scores = predict_scores(model, dataset.graphs)
    y = dataset.labels().astype(float)
    eps = 1e-12
    return float(-(y * np.log(scores + eps) + (1 - y) * np.log(1 - scores + eps)).mean())


def train(config: TrainConfig, train_set: Dataset, val_set: Dataset,
          trajectory_sink=None):
    """Run the full loop and return (best model, history, stats).

    ``trajectory_sink``: optional callable fed (epoch, batch_index, trajectory)
    for every weight-learning run, for convergence diagnostics.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    model = build_model(config)
    params = [p for _, p in model.named_params()]
    opt = Adam(params, config.lr, weight_decay=config.weight_decay)
    sched = PlateauScheduler(opt, config.plateau_factor, config.plateau_patience)
    shuffle_rng = Rng(config.seed).child(1)

    history = []
    best_acc, best_epoch, best_state = -np.inf, -1, None
    total_decor_steps = 0
    n = len(train_set)

    for epoch in range(config.epochs):
        order = shuffle_rng.child(epoch).permutation(n)
        epoch_loss = 0.0
        hsic_vals = []
        for bi, lo in enumerate(range(0, n, config.batch_size)):
            graphs = [train_set.graphs[i] for i in order[lo:lo + config.batch_size]]
            dense = batch(graphs)
            high, logits = model.forward(dense, training=True)
            run_cvd = (config.is_stable and config.use_cvd
                       and epoch >= config.warmup_epochs and dense.size >= 2)
            if run_cvd:
                sw = learn_weights(high, config.decor)
                w = sw.weights()
                total_decor_steps += config.decor.decor_epochs
                hsic_vals.append(sw.trajectory[-1])
                if trajectory_sink is not None:
                    trajectory_sink(epoch, bi, sw.trajectory)
            else:
                w = np.ones(dense.size)
            loss = weighted_loss(logits, dense.labels, w)
            if config.aux_pool_weight and config.is_stable:
                aux = auxiliary_losses(model.last_pool, dense.adjacency,
                                       dense.node_mask)
                loss = loss + aux * config.aux_pool_weight
            if not np.isfinite(loss.data):
                raise FloatingPointError(
                    f"non-finite training loss at epoch {epoch}, batch {bi}")
            opt.zero_grad()
            T.grad(loss)
            opt.step()
            epoch_loss += float(loss.data)

        val = evaluate(model, val_set)
        vloss = _val_loss(model, val_set)
        sched.step(vloss)
        auc = val["auc"] if val["auc"] is not None else float("nan")
        hsic_mean = float(np.mean(hsic_vals)) if hsic_vals else 0.0
        history.append(EpochRecord(epoch, epoch_loss / n, val["accuracy"],
                                   val["f1"], auc, hsic_mean, opt.lr))
        if val["accuracy"] > best_acc:
            best_acc, best_epoch = val["accuracy"], epoch
            best_state = state_dict(model)

    if best_state is not None:
        load_state(model, best_state)
    stats = {"best_epoch": best_epoch, "best_val_acc": best_acc,
             "decor_steps": total_decor_steps}
    return model, history, stats


def history_to_csv(history) -> str:
    lines = ["epoch,train_loss,val_acc,val_f1,val_auc,mean_hsic,lr"]
    for r in history:
        lines.append(f"{r.epoch},{r.train_loss!r},{r.val_accuracy!r},"
                     f"{r.val_f1!r},{r.val_auc!r},{r.mean_hsic!r},{r.lr!r}")
    return "\n".join(lines) + "\n"
