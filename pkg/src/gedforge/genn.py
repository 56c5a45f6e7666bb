"""Graph edit neural network: node embeddings, attention pooling, NTN scoring.

The network maps a pair of graphs to a similarity in (0, 1) which converts
to a GED estimate. Inside the tree search the unmatched subgraphs shrink by
one node per level; three interchangeable strategies produce their node
embeddings:

* ``vanilla``: full forward pass on the extracted subgraph;
* ``exact_dynamic``: keeps every layer's activations and recomputes only
  the rows within reach of a deleted node;
* ``genn``: one forward pass on the full graph, then rows of the last
  layer are simply dropped for matched nodes.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import EmptyGraphError
from .graph import EditCostModel, Graph, induced_subgraph

CHANNELS = (64, 32, 16)
NTN_CHANNELS = 16
ATTENTION_SCALE = 10.0
S_CLAMP = 1e-7
FORMAT_VERSION = 1

PARAM_ORDER = ("conv0", "conv1", "conv2", "attention", "ntn_bilinear", "ntn_linear", "ntn_bias", "out_w", "out_b")


@dataclass(frozen=True)
class FeatureConfig:
    """One-hot degree (clipped at ``max_degree``) plus optional one-hot label.

    ``labels`` is the label vocabulary; an extra slot catches unseen labels.
    An empty vocabulary means unlabeled graphs and no label block.
    """

    max_degree: int = 10
    labels: tuple = ()

    @property
    def labeled(self) -> bool:
        return bool(self.labels)

    @property
    def width(self) -> int:
        return self.max_degree + 1 + (len(self.labels) + 1 if self.labeled else 0)

    def to_dict(self) -> dict:
        return {"max_degree": self.max_degree, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d) -> "FeatureConfig":
        return cls(int(d.get("max_degree", 10)), tuple(d.get("labels", ())))

    @classmethod
    def for_graphs(cls, graphs: Sequence[Graph], max_degree: int = 10) -> "FeatureConfig":
        vocab = sorted({lab for g in graphs for lab in g.labels if lab is not None})
        return cls(max_degree, tuple(vocab))


@dataclass
class GennModel:
    params: dict
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)

    @classmethod
    def init(cls, feature_config: FeatureConfig, seed: int = 0) -> "GennModel":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        F, t = CHANNELS[-1], NTN_CHANNELS

        def glorot(shape, fan_in, fan_out):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=shape)

        dims = (feature_config.width,) + CHANNELS
        p = {}
        for i in range(3):
            p[f"conv{i}"] = glorot((dims[i], dims[i + 1]), dims[i], dims[i + 1])
        p["attention"] = glorot((F, F), F, F)
        p["ntn_bilinear"] = glorot((F, F, t), F * F, t)
        p["ntn_linear"] = glorot((t, 2 * F), 2 * F, t)
        p["ntn_bias"] = np.zeros(t)
        p["out_w"] = glorot((t,), t, 1)
        p["out_b"] = np.zeros(1)
        return cls(p, feature_config)

    def copy(self) -> "GennModel":
        return GennModel({k: v.copy() for k, v in self.params.items()}, self.feature_config)

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # checkpoint I/O: every tensor flattened row-major to 2-D; the bilinear
    # tensor (F, F, t) is stored as (F*F, t) and vectors as (1, len)
    def to_dict(self) -> dict:
        layers = []
        for name in PARAM_ORDER:
            arr = self.params[name]
            flat = arr.reshape(-1, arr.shape[-1]) if arr.ndim != 1 else arr.reshape(1, -1)
            layers.append({"name": name, "shape": list(flat.shape), "data": flat.ravel().tolist()})
        return {
            "format_version": FORMAT_VERSION,
            "feature_config": self.feature_config.to_dict(),
            "architecture": {"channels": list(CHANNELS), "ntn_channels": NTN_CHANNELS, "attention_scale": ATTENTION_SCALE},
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, d) -> "GennModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format_version {d.get('format_version')!r}")
        cfg = FeatureConfig.from_dict(d["feature_config"])
        ref = cls.init(cfg, 0).params
        layers = d["layers"]
        if len(layers) != len(PARAM_ORDER):
            raise ValueError(f"checkpoint has {len(layers)} tensors, expected {len(PARAM_ORDER)}")
        params = {}
        for name, rec in zip(PARAM_ORDER, layers):
            arr = np.asarray(rec["data"], dtype=float).reshape(rec["shape"]).reshape(ref[name].shape)
            if not np.isfinite(arr).all():
                raise ValueError(f"non-finite values in checkpoint tensor {name}")
            params[name] = arr
        return cls(params, cfg)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "GennModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ------------------------------------------------------------------ layers

def init_features(g: Graph, config: FeatureConfig) -> np.ndarray:
    x = np.zeros((g.n, config.width))
    D = config.max_degree
    vocab = {lab: i for i, lab in enumerate(config.labels)}
    for i in range(g.n):
        x[i, min(g.degree(i), D)] = 1.0
        if config.labeled:
            x[i, D + 1 + vocab.get(g.labels[i], len(config.labels))] = 1.0
    return x


def weighted_adjacency(g: Graph) -> np.ndarray:
    a = np.zeros((g.n, g.n))
    for u, v, w in g.edges:
        a[u, v] = a[v, u] = w
    return a


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    a = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


def gcn_forward(model: GennModel, g: Graph, x0: Optional[np.ndarray] = None, return_layers: bool = False):
    """Three graph convolutions, ReLU between them, none after the last.

    With ``return_layers`` also returns ``(a_hat, [x0, x1, x2, x3])``.
    """
    if x0 is None:
        x0 = init_features(g, model.feature_config)
    a_hat = normalize_adjacency(weighted_adjacency(g))
    p = model.params
    x1 = np.maximum(a_hat @ x0 @ p["conv0"], 0.0)
    x2 = np.maximum(a_hat @ x1 @ p["conv1"], 0.0)
    x3 = a_hat @ x2 @ p["conv2"]
    if return_layers:
        return x3, (a_hat, [x0, x1, x2, x3])
    return x3


def attention_pool(model: GennModel, x: np.ndarray) -> np.ndarray:
    """Graph embedding ``c^T X`` with ``c = expit(alpha * X tanh(mean(X) W))``."""
    if x.shape[0] == 0:
        raise EmptyGraphError("attention pooling over a graph with no nodes")
    return attention_coefficients(model, x) @ x


def attention_coefficients(model: GennModel, x: np.ndarray) -> np.ndarray:
    key = np.tanh(x.mean(axis=0) @ model.params["attention"])
    return expit(ATTENTION_SCALE * (x @ key))


def ntn_score(model: GennModel, h1: np.ndarray, h2: np.ndarray) -> float:
    """Bilinear + linear NTN channels, then a sigmoid output unit."""
    p = model.params
    bil = np.einsum("a,abt,b->t", h1, p["ntn_bilinear"], h2)
    z = bil + p["ntn_linear"] @ np.concatenate([h1, h2]) + p["ntn_bias"]
    return float(expit(p["out_w"] @ z + p["out_b"][0]))


def ged_to_similarity(ged: float, n1: int, n2: int) -> float:
    if ged < 0:
        raise ValueError("ged must be nonnegative")
    if n1 + n2 <= 0:
        raise ValueError("n1 + n2 must be positive")
    return math.exp(-ged * 2.0 / (n1 + n2))


def similarity_to_h(s: float, n1: int, n2: int) -> float:
    if not s > 0:
        raise ValueError(f"similarity must be positive, got {s!r}")
    return -0.5 * (n1 + n2) * math.log(s)


def clamp_similarity(s: float) -> float:
    return min(max(s, S_CLAMP), 1.0 - S_CLAMP)


# ------------------------------------------------------- caches/strategies

@dataclass(frozen=True)
class EmbeddingCache:
    graph_id: str
    final_embeddings: np.ndarray
    strategy: str = "genn"


def build_cache(model: GennModel, g: Graph) -> EmbeddingCache:
    emb = gcn_forward(model, g)
    emb.setflags(write=False)
    return EmbeddingCache(g.id, emb)


def masked_similarity(model: GennModel, cache1: EmbeddingCache, cache2: EmbeddingCache, masked1=(), masked2=()) -> float:
    """Similarity of the unmatched parts using cached full-graph node embeddings."""
    x1 = _drop_rows(cache1.final_embeddings, masked1)
    x2 = _drop_rows(cache2.final_embeddings, masked2)
    if x1.shape[0] == 0 or x2.shape[0] == 0:
        raise EmptyGraphError("a side is fully masked")
    return ntn_score(model, attention_pool(model, x1), attention_pool(model, x2))


def _drop_rows(x, masked):
    if not masked:
        return x
    keep = [i for i in range(x.shape[0]) if i not in masked]
    return x[keep]


@dataclass
class LayerCache:
    """All activations of one forward pass on the current (shrunken) graph.

    ``nodes[i]`` is the original index of current row ``i``.
    """

    graph: Graph
    nodes: tuple
    weights: np.ndarray     # weighted adjacency of the current graph
    degree: np.ndarray      # row sums of weights + 1
    a_hat: np.ndarray
    layers: list            # [x0, x1, x2, x3]


def build_layer_cache(model: GennModel, g: Graph) -> LayerCache:
    w = weighted_adjacency(g)
    _, (a_hat, layers) = gcn_forward(model, g, return_layers=True)
    return LayerCache(g, tuple(range(g.n)), w, w.sum(axis=1) + 1.0, a_hat, layers)


def _hops(g: Graph, src: int, limit: int) -> dict:
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        if dist[u] == limit:
            continue
        for v in g.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def exact_dynamic_update(model: GennModel, cache: LayerCache, deleted_node: int, g_modified: Optional[Graph] = None) -> LayerCache:
    """Delete current row ``deleted_node`` and refresh only the rows it can reach.

    Layer ``l`` (1-based) only changes within ``l + 1`` hops of the deleted
    node: its neighbours lose degree, which alters both their features and
    the symmetric normalization of every edge touching them.
    """
    g = cache.graph
    n = g.n
    keep = [i for i in range(n) if i != deleted_node]
    if g_modified is None:
        g_modified, _ = induced_subgraph(g, keep)
    new_index = {old: new for new, old in enumerate(keep)}
    dist = _hops(g, deleted_node, len(CHANNELS) + 1)

    w = cache.weights[np.ix_(keep, keep)]
    degree = cache.degree[keep].copy()
    nbrs = [new_index[v] for v in g.adjacency[deleted_node]]
    for v, wt in g.adjacency[deleted_node].items():
        degree[new_index[v]] -= wt

    cfg = model.feature_config
    x0 = cache.layers[0][keep].copy()
    for i in nbrs:
        x0[i, : cfg.max_degree + 1] = 0.0
        x0[i, min(g_modified.degree(i), cfg.max_degree)] = 1.0

    inv = 1.0 / np.sqrt(degree)
    a_hat = cache.a_hat[np.ix_(keep, keep)].copy()
    touched = sorted({new_index[v] for v, d in dist.items() if 1 <= d <= 2})
    if touched:
        rows = (w[touched] + np.eye(len(keep))[touched]) * inv[touched, None] * inv[None, :]
        a_hat[touched] = rows
        a_hat[:, touched] = rows.T

    layers = [x0]
    prev = x0
    for l, name in enumerate(("conv0", "conv1", "conv2"), start=1):
        x = cache.layers[l][keep].copy()
        rows = [new_index[v] for v, d in dist.items() if 1 <= d <= l + 1]
        if rows:
            out = a_hat[rows] @ prev @ model.params[name]
            x[rows] = np.maximum(out, 0.0) if l < 3 else out
        layers.append(x)
        prev = x
    nodes = tuple(cache.nodes[i] for i in keep)
    return LayerCache(g_modified, nodes, w, degree, a_hat, layers)


class VanillaStrategy:
    """Re-extract the unmatched subgraph and run a full forward pass."""

    name = "vanilla"

    def __init__(self, model: GennModel):
        self.model = model

    def start(self, g: Graph):
        return (g, tuple(range(g.n)))

    def delete(self, handle, node: int):
        g, kept = handle
        return (g, tuple(i for i in kept if i != node))

    def from_mask(self, g: Graph, masked):
        return (g, tuple(i for i in range(g.n) if i not in masked))

    def embeddings(self, handle) -> np.ndarray:
        g, kept = handle
        if len(kept) == g.n:
            return gcn_forward(self.model, g)
        sub, _ = induced_subgraph(g, kept)
        return gcn_forward(self.model, sub)


class ExactDynamicStrategy:
    """Incrementally maintained activations of every layer."""

    name = "exact_dynamic"

    def __init__(self, model: GennModel):
        self.model = model

    def start(self, g: Graph):
        return build_layer_cache(self.model, g)

    def delete(self, handle: LayerCache, node: int):
        return exact_dynamic_update(self.model, handle, handle.nodes.index(node))

    def from_mask(self, g: Graph, masked):
        handle = self.start(g)
        for node in sorted(masked):
            handle = self.delete(handle, node)
        return handle

    def embeddings(self, handle: LayerCache) -> np.ndarray:
        return handle.layers[-1]


class GennStrategy:
    """Last-layer embeddings computed once; matched nodes' rows are dropped."""

    name = "genn"

    def __init__(self, model: GennModel):
        self.model = model

    def start(self, g: Graph):
        return (build_cache(self.model, g), tuple(range(g.n)))

    def delete(self, handle, node: int):
        cache, kept = handle
        return (cache, tuple(i for i in kept if i != node))

    def from_mask(self, g: Graph, masked):
        cache = build_cache(self.model, g)
        return (cache, tuple(i for i in range(g.n) if i not in masked))

    def embeddings(self, handle) -> np.ndarray:
        cache, kept = handle
        if len(kept) == cache.final_embeddings.shape[0]:
            return cache.final_embeddings
        return cache.final_embeddings[list(kept)]


STRATEGIES = {cls.name: cls for cls in (VanillaStrategy, ExactDynamicStrategy, GennStrategy)}


def make_strategy(name: str, model: GennModel):
    try:
        return STRATEGIES[name](model)
    except KeyError:
        raise ValueError(f"unknown embedding strategy {name!r}") from None


def similarity_from_embeddings(model: GennModel, x1: np.ndarray, x2: np.ndarray) -> float:
    return ntn_score(model, attention_pool(model, x1), attention_pool(model, x2))


def predict_similarity(model: GennModel, g1: Graph, g2: Graph, strategy: str = "vanilla") -> float:
    if g1.n == 0 or g2.n == 0:
        raise EmptyGraphError("cannot predict similarity with an empty graph")
    strat = make_strategy(strategy, model)
    x1 = strat.embeddings(strat.start(g1))
    x2 = strat.embeddings(strat.start(g2))
    return similarity_from_embeddings(model, x1, x2)


def predict_ged(model: GennModel, g1: Graph, g2: Graph) -> float:
    """Direct GED regression (no edit path) from the predicted similarity."""
    if g1.n == 0 or g2.n == 0:
        return 0.0 if g1.n == g2.n else math.inf
    s = clamp_similarity(predict_similarity(model, g1, g2, "genn"))
    return similarity_to_h(s, g1.n, g2.n)


# ------------------------------------------------------ search integration

def forced_remaining_cost(g1: Graph, g2: Graph, cost: EditCostModel, rest1, rest2) -> Optional[float]:
    """Exact remaining cost when one side has no unmatched node left.

    Every leftover source node must be deleted (or every leftover target
    inserted), together with each edge touching it. Returns ``None`` when
    both sides still have nodes.
    """
    if rest1 and rest2:
        return None
    total = 0.0
    if rest1:
        for i in rest1:
            total += cost.node_del(g1.labels[i])
        for u, v, w in g1.edges:
            if u in rest1 or v in rest1:
                total += cost.edge_del(w)
    if rest2:
        for j in rest2:
            total += cost.node_ins(g2.labels[j])
        for u, v, w in g2.edges:
            if u in rest2 or v in rest2:
                total += cost.edge_ins(w)
    return total


class _GennSession:
    def __init__(self, model, strategy, g1, g2, cost):
        self.model = model
        self.strategy = strategy
        self.g1, self.g2, self.cost = g1, g2, cost
        self.root1 = strategy.start(g1) if g1.n else None
        self.root2 = strategy.start(g2) if g2.n else None
        self.incremental = isinstance(strategy, ExactDynamicStrategy)
        self.handles = {}
        self.calls = 0

    def _handles(self, state, done1, done2):
        if not self.incremental:
            return _delete_all(self.strategy, self.root1, done1), _delete_all(self.strategy, self.root2, done2)
        parent = getattr(state, "parent", None)
        if parent is not None and id(parent) in self.handles:
            _, h1, h2, pd1, pd2 = self.handles[id(parent)]
        else:
            h1, h2, pd1, pd2 = self.root1, self.root2, set(), set()
        for i in sorted(set(done1) - pd1):
            h1 = self.strategy.delete(h1, i)
        for j in sorted(set(done2) - pd2):
            h2 = self.strategy.delete(h2, j)
        self.handles[id(state)] = (state, h1, h2, set(done1), set(done2))
        return h1, h2

    def h(self, state) -> float:
        done1 = set(state.edited_sources())
        done2 = state.edited_targets()
        rest1 = [i for i in range(self.g1.n) if i not in done1]
        rest2 = [j for j in range(self.g2.n) if j not in done2]
        forced = forced_remaining_cost(self.g1, self.g2, self.cost, set(rest1), set(rest2))
        if forced is not None:
            return forced
        self.calls += 1
        h1, h2 = self._handles(state, done1, done2)
        s = similarity_from_embeddings(self.model, self.strategy.embeddings(h1), self.strategy.embeddings(h2))
        return similarity_to_h(clamp_similarity(s), len(rest1), len(rest2))


def _delete_all(strategy, handle, nodes):
    if isinstance(strategy, GennStrategy):
        cache, kept = handle
        return (cache, tuple(i for i in kept if i not in nodes))
    if isinstance(strategy, VanillaStrategy):
        g, kept = handle
        return (g, tuple(i for i in kept if i not in nodes))
    for node in sorted(nodes):
        handle = strategy.delete(handle, node)
    return handle


class GennHeuristic:
    """Learned, non-admissible h(p) from the predicted similarity of the unmatched parts."""

    name = "genn"
    admissible = False

    def __init__(self, model: GennModel, strategy: str = "genn"):
        self.model = model
        self.strategy_name = strategy

    def prepare(self, g1, g2, cost):
        return _GennSession(self.model, make_strategy(self.strategy_name, self.model), g1, g2, cost)


def genn_heuristic_provider(model: GennModel, strategy: str = "genn") -> GennHeuristic:
    return GennHeuristic(model, strategy)
