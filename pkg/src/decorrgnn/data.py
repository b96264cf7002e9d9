"""Synthetic motif benchmark: graph model, generator, dense batching, file I/O.

Each graph is two small motifs joined by one deterministic bridge edge plus
random cross edges.  Positive graphs always contain the house motif;
negatives never do.  A correlation degree ``mu`` controls how often the star
motif co-occurs with the house, which is the spurious signal the training
distribution carries and the test distribution does not.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

FORMAT_VERSION = 1
FEATURE_DIM = 10

MOTIF_KINDS = ("house", "star", "clique", "diamond", "grid")
SECOND_CANDIDATES = ("star", "clique", "diamond", "grid")

# Fixed topologies, node indices local to the motif.
_MOTIF_EDGES = {
    # 4-cycle with a roof apex joined to two adjacent cycle nodes
    "house": (5, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)]),
    # hub 0 plus 5 leaves
    "star": (6, [(0, i) for i in range(1, 6)]),
    "clique": (5, [(i, j) for i in range(5) for j in range(i + 1, 5)]),
    # K4 minus one edge
    "diamond": (4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)]),
    # 3x3 lattice
    "grid": (9, [(r * 3 + c, r * 3 + c + 1) for r in range(3) for c in range(2)]
             + [(r * 3 + c, (r + 1) * 3 + c) for r in range(2) for c in range(3)]),
}

CROSS_EDGE_PROB = 0.25


class DataFormatError(ValueError):
    """Raised when a dataset file does not parse."""


@dataclass
class Graph:
    node_count: int
    edges: list  # undirected (u, v) pairs, u < v, no duplicates
    features: np.ndarray  # node_count x FEATURE_DIM
    label: int
    meta: dict = field(default_factory=dict)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count))
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1.0
        return a


@dataclass
class Dataset:
    graphs: list
    split_tag: str
    mu: float
    seed: int

    def __len__(self):
        return len(self.graphs)

    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)


@dataclass
class DenseBatch:
    adjacency: np.ndarray  # m x n_max x n_max
    features: np.ndarray  # m x n_max x d_in
    node_mask: np.ndarray  # m x n_max, 1.0 for real nodes
    labels: np.ndarray  # length m

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]


def make_motif(kind: str, rng: Rng) -> Graph:
    """Return the fixed topology for a motif kind; features are left unset."""
    if kind not in _MOTIF_EDGES:
        raise ValueError(f"unknown motif kind {kind!r}, expected one of {MOTIF_KINDS}")
    n, edges = _MOTIF_EDGES[kind]
    return Graph(node_count=n, edges=list(edges), features=np.zeros((n, 0)), label=0,
                 meta={"kind": kind})


def _second_motif_kind(label: int, mu: float, rng: Rng) -> str:
    # For positives the empirical star rate must track mu itself, so the
    # forced-star probability p solves p + (1 - p)/4 = mu.
    if label == 1:
        p = min(max((4.0 * mu - 1.0) / 3.0, 0.0), 1.0)
        if rng.random() < p:
            return "star"
    return rng.choice(SECOND_CANDIDATES)


_HOUSE_ADJ = np.zeros((5, 5))
for _u, _v in _MOTIF_EDGES["house"][1]:
    _HOUSE_ADJ[_u, _v] = _HOUSE_ADJ[_v, _u] = 1.0
_HOUSE_DEGREES = tuple(sorted(int(d) for d in _HOUSE_ADJ.sum(0)))


def count_house_subgraphs(adjacency: np.ndarray) -> int:
    """Number of 5-node subsets inducing a house (exact enumeration)."""
    from itertools import combinations, permutations

    n = adjacency.shape[0]
    count = 0
    for subset in combinations(range(n), 5):
        sub = adjacency[np.ix_(subset, subset)]
        if int(sub.sum()) != 12:  # 6 undirected edges
            continue
        if tuple(sorted(int(d) for d in sub.sum(0))) != _HOUSE_DEGREES:
            continue
        for perm in permutations(range(5)):
            if np.array_equal(sub[np.ix_(perm, perm)], _HOUSE_ADJ):
                count += 1
                break
    return count


def _is_house(sub: np.ndarray) -> bool:
    from itertools import permutations

    if int(sub.sum()) != 12:  # 6 undirected edges
        return False
    if tuple(sorted(int(d) for d in sub.sum(0))) != _HOUSE_DEGREES:
        return False
    return any(np.array_equal(sub[np.ix_(p, p)], _HOUSE_ADJ)
               for p in permutations(range(5)))


def _has_spanning_house(adj: np.ndarray, cross_edges) -> bool:
    """True if some induced house uses nodes of both motifs.

    The house is 2-edge-connected, so a spanning house must contain at least
    two of the cross edges; only 5-subsets covering such a pair are checked.
    """
    from itertools import combinations

    n = adj.shape[0]
    seen = set()
    for e1, e2 in combinations(cross_edges, 2):
        anchor = sorted(set(e1) | set(e2))
        if len(anchor) > 5:
            continue
        rest = [v for v in range(n) if v not in anchor]
        for extra in combinations(rest, 5 - len(anchor)):
            subset = tuple(sorted(anchor + list(extra)))
            if subset in seen:
                continue
            seen.add(subset)
            if _is_house(adj[np.ix_(subset, subset)]):
                return True
    return False


def _draw_bridge(base_n: int, second_n: int, rng: Rng):
    """One deterministic bridge edge plus per-vertex random cross edges."""
    off = base_n
    bridge = [(0, off)]
    for v in range(1, base_n):
        if rng.random() < CROSS_EDGE_PROB:
            target = off + int(rng.integers(0, second_n))
            e = (v, target)
            if e not in bridge:
                bridge.append(e)
    return bridge


def generate_graph(label: int, mu: float, rng: Rng) -> Graph:
    """One labelled graph: base motif + second motif + bridge + cross edges.

    Cross edges are resampled if they accidentally change the induced-house
    count (positives must contain exactly one, negatives none); with a single
    bridge edge and no cross edges the count is guaranteed, so the loop
    terminates by falling back to the bare bridge.
    """
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    base_kind = "house" if label == 1 else rng.choice(SECOND_CANDIDATES)
    second_kind = _second_motif_kind(label, mu, rng)

    base = make_motif(base_kind, rng)
    second = make_motif(second_kind, rng)
    off = base.node_count
    n = off + second.node_count
    motif_edges = list(base.edges) + [(u + off, v + off) for u, v in second.edges]

    for attempt in range(64):
        bridge = _draw_bridge(base.node_count, second.node_count, rng)
        if len(bridge) == 1:
            break  # a lone bridge edge cannot create a spanning house
        adj = np.zeros((n, n))
        for u, v in motif_edges + bridge:
            adj[u, v] = adj[v, u] = 1.0
        if not _has_spanning_house(adj, bridge):
            break
    else:
        bridge = [(0, off)]
    edges = motif_edges + bridge

    features = rng.uniform(0.0, 1.0, size=(n, FEATURE_DIM))
    meta = {"base": base_kind, "second": second_kind, "bridge_edges": [list(e) for e in bridge]}
    return Graph(node_count=n, edges=edges, features=features, label=label, meta=meta)


def generate_dataset(mu: float, n_graphs: int, seed: int, split_tag: str = "train") -> Dataset:
    """Balanced, seed-deterministic dataset; per-graph derived streams."""
    if n_graphs < 2:
        raise ValueError(f"need at least 2 graphs, got {n_graphs}")
    root = Rng(seed)
    graphs = []
    for i in range(n_graphs):
        label = i % 2  # exact 50/50 up to one graph
        graphs.append(generate_graph(label, mu, root.child(i)))
    order = root.child(n_graphs, 0).permutation(n_graphs)
    graphs = [graphs[i] for i in order]
    return Dataset(graphs=graphs, split_tag=split_tag, mu=mu, seed=seed)


def batch(graphs) -> DenseBatch:
    """Pad a list of graphs to the batch-maximum node count."""
    if not graphs:
        raise ValueError("cannot batch an empty graph list")
    m = len(graphs)
    n_max = max(g.node_count for g in graphs)
    d = graphs[0].features.shape[1]
    adjacency = np.zeros((m, n_max, n_max))
    features = np.zeros((m, n_max, d))
    mask = np.zeros((m, n_max))
    labels = np.zeros(m, dtype=np.int64)
    for i, g in enumerate(graphs):
        k = g.node_count
        adjacency[i, :k, :k] = g.adjacency()
        features[i, :k] = g.features
        mask[i, :k] = 1.0
        labels[i] = g.label
    return DenseBatch(adjacency, features, mask, labels)


def unbatch(b: DenseBatch):
    """Invert ``batch``: recover per-graph adjacency, features and labels."""
    out = []
    for i in range(b.size):
        k = int(b.node_mask[i].sum())
        out.append((b.adjacency[i, :k, :k].copy(), b.features[i, :k].copy(), int(b.labels[i])))
    return out


# -- file format: newline-delimited JSON, header record first -----------------


def save_dataset(dataset: Dataset, path):
    header = {"version": FORMAT_VERSION, "mu": dataset.mu, "seed": dataset.seed,
              "split": dataset.split_tag}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for g in dataset.graphs:
            rec = {
                "n": g.node_count,
                "edges": [list(e) for e in g.edges],
                "x": g.features.tolist(),
                "y": g.label,
                "meta": g.meta,
            }
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> Dataset:
    graphs = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: bad header record: {e}") from e
    for key in ("version", "mu", "seed", "split"):
        if key not in header:
            raise DataFormatError(f"{path}: header missing field {key!r}")
    for idx, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            n = rec["n"]
            edges = [tuple(e) for e in rec["edges"]]
            features = np.asarray(rec["x"], dtype=np.float64)
            label = int(rec["y"])
            meta = rec["meta"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"{path}: record at line {idx}: {e}") from e
        if features.ndim != 2 or features.shape[0] != n:
            raise DataFormatError(f"{path}: record at line {idx}: feature shape mismatch")
        graphs.append(Graph(node_count=n, edges=edges, features=features,
                            label=label, meta=meta))
    return Dataset(graphs=graphs, split_tag=header["split"], mu=header["mu"],
                   seed=header["seed"])


def star_cooccurrence_rate(dataset: Dataset) -> float:
    """Fraction of positive graphs whose second motif is a star."""
    pos = [g for g in dataset.graphs if g.label == 1]
    if not pos:
        return float("nan")
    return sum(g.meta.get("second") == "star" for g in pos) / len(pos)
