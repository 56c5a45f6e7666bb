"""Synthetic corpora, exact GED labels, splits and manifest files."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetExceeded, GraphError, InfeasibleError
from .graph import EditCostModel, Graph, dumps_graph, graph_from_dict, load_graph
from .heuristics import HungarianHeuristic
from .search import SearchLimits, astar_solve

log = logging.getLogger(__name__)

MAX_TRAIN_PAIRS = 10_000
SPLITS = ("train", "val", "test")


def _connected(n: int, edges: list) -> bool:
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {0}
    stack = [0]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def generate_synthetic(
    n_graphs: int,
    min_nodes: int,
    max_nodes: int,
    edge_prob: float,
    label_vocab=None,
    seed: int = 0,
    prefix: str = "g",
) -> list:
    """Connected Erdos-Renyi graphs with uniformly drawn node labels.

    ``label_vocab`` is a list of labels, a label count, or ``None`` for
    unlabeled graphs. Disconnected draws are rejected and redrawn.
    """
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError(f"edge_prob must lie in [0, 1], got {edge_prob}")
    if not 1 <= min_nodes <= max_nodes:
        raise ValueError("need 1 <= min_nodes <= max_nodes")
    if isinstance(label_vocab, int):
        label_vocab = [chr(ord("A") + i) if i < 26 else f"L{i}" for i in range(label_vocab)] if label_vocab > 0 else None
    rng = np.random.default_rng(seed)
    graphs = []
    width = len(str(max(n_graphs - 1, 0)))
    for k in range(n_graphs):
        n = int(rng.integers(min_nodes, max_nodes + 1))
        for attempt in range(10_000):
            edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < edge_prob]
            if _connected(n, edges):
                break
        else:
            raise ValueError(f"could not draw a connected {n}-node graph with edge_prob={edge_prob}")
        if label_vocab:
            labels = [label_vocab[int(i)] for i in rng.integers(len(label_vocab), size=n)]
        else:
            labels = [None] * n
        graphs.append(Graph.build(f"{prefix}{k:0{width}d}", labels, edges))
    return graphs


@dataclass
class PairLabel:
    i: int
    j: int
    ged: Optional[float]
    split: str = "train"


def solve_exact(g1: Graph, g2: Graph, cost: EditCostModel, max_states: int = 2_000_000):
    """Exact GED by Hungarian-A*; ``None`` when the budget runs out or no path exists."""
    try:
        return astar_solve(g1, g2, cost, HungarianHeuristic(), SearchLimits(max_states=max_states)).ged
    except (BudgetExceeded, InfeasibleError) as exc:
        log.warning("no exact label for %s|%s: %s", g1.id, g2.id, exc)
        return None


def build_ged_labels(graphs: Sequence[Graph], pairs: Sequence[tuple], cost: EditCostModel, max_states: int = 2_000_000) -> list:
    """Exact GED for each ``(i, j[, split])`` pair; unsolved pairs get ``ged=None``."""
    out = []
    for p in pairs:
        i, j = p[0], p[1]
        split = p[2] if len(p) > 2 else "train"
        out.append(PairLabel(i, j, solve_exact(graphs[i], graphs[j], cost, max_states), split))
    return out


@dataclass
class DatasetManifest:
    """Graphs, their split, the cost model and the labeled pairs."""

    graphs: list
    splits: list
    cost: EditCostModel = field(default_factory=EditCostModel)
    pairs: list = field(default_factory=list)
    edge_norm: float = 1.0
    normalized: bool = True

    def indices(self, split: str) -> list:
        return [i for i, s in enumerate(self.splits) if s == split]

    def labeled(self, split: str) -> list:
        return [(self.graphs[p.i], self.graphs[p.j], p.ged) for p in self.pairs if p.split == split and p.ged is not None]


def split_dataset(graphs: Sequence[Graph], seed: int = 0, cost: Optional[EditCostModel] = None, max_train_pairs: int = MAX_TRAIN_PAIRS) -> DatasetManifest:
    """Shuffled 60/20/20 split by graph, with the evaluation pair protocol.

    Training pairs are all unordered within-train pairs (uniformly sampled
    down to ``max_train_pairs``); validation and test pairs are every
    val/test query against every training graph.
    """
    n = len(graphs)
    if n < 5:
        raise ValueError(f"need at least 5 graphs to split, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(round(0.6 * n))
    n_val = int(round(0.2 * n))
    splits = [""] * n
    for rank, i in enumerate(order):
        splits[i] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    train = sorted(i for i in range(n) if splits[i] == "train")
    pairs = [(a, b) for x, a in enumerate(train) for b in train[x + 1 :]]
    if len(pairs) > max_train_pairs:
        pick = sorted(rng.choice(len(pairs), size=max_train_pairs, replace=False))
        pairs = [pairs[k] for k in pick]
    labels = [PairLabel(a, b, None, "train") for a, b in pairs]
    for split in ("val", "test"):
        for q in sorted(i for i in range(n) if splits[i] == split):
            labels.extend(PairLabel(q, t, None, split) for t in train)
    return DatasetManifest(list(graphs), splits, cost or EditCostModel(), labels)


def label_manifest(manifest: DatasetManifest, max_states: int = 2_000_000, splits=SPLITS) -> DatasetManifest:
    for p in manifest.pairs:
        if p.split in splits and p.ged is None:
            p.ged = solve_exact(manifest.graphs[p.i], manifest.graphs[p.j], manifest.cost, max_states)
    return manifest


# ------------------------------------------------------------------- files

def save_manifest(manifest: DatasetManifest, path) -> None:
    """Write graph files next to the manifest and the manifest JSON itself."""
    path = Path(path)
    gdir = path.parent / "graphs"
    gdir.mkdir(parents=True, exist_ok=True)
    files = []
    for g in manifest.graphs:
        f = gdir / f"{g.id}.json"
        f.write_text(dumps_graph(g) + "\n")
        files.append(os.path.relpath(f, path.parent))
    doc = {
        "format_version": 1,
        "cost_model": manifest.cost.to_dict(),
        "edge_norm": manifest.edge_norm,
        "normalized": True,
        "graphs": [{"path": f, "split": s} for f, s in zip(files, manifest.splits)],
        "pairs": [
            {"g1": files[p.i], "g2": files[p.j], "ged": p.ged, "split": p.split} for p in manifest.pairs
        ],
    }
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_manifest(path) -> DatasetManifest:
    """Read a manifest; raw geometric weights are divided by ``edge_norm`` once.

    ``"normalized": true`` marks files that were already scaled, so loading
    them again never rescales.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: malformed JSON: {exc}") from exc
    base = path.parent
    cost = EditCostModel.from_dict(doc.get("cost_model", {}))
    edge_norm = float(doc.get("edge_norm", 1.0))
    normalized = bool(doc.get("normalized", True))
    scale = 1.0 if normalized else edge_norm
    entries = doc.get("graphs")
    if entries is None:
        names = sorted({p[k] for p in doc["pairs"] for k in ("g1", "g2")})
        entries = [{"path": f, "split": "train"} for f in names]
    files = [e["path"] for e in entries]
    index = {f: i for i, f in enumerate(files)}
    graphs = [load_graph(base / f, scale) for f in files]
    splits = [e.get("split", "train") for e in entries]
    pairs = []
    for p in doc.get("pairs", []):
        for key in ("g1", "g2"):
            if p[key] not in index:
                index[p[key]] = len(files)
                files.append(p[key])
                graphs.append(load_graph(base / p[key], scale))
                splits.append("train")
        ged = p.get("ged")
        if ged is not None and ged < 0:
            raise GraphError(f"negative ged label in {path}")
        pairs.append(PairLabel(index[p["g1"]], index[p["g2"]], ged, p.get("split", "train")))
    return DatasetManifest(graphs, splits, cost, pairs, edge_norm, True)


def ingest_graph_dicts(records: Sequence[dict], edge_norm: float = 1.0) -> list:
    """Parse raw graph records, dividing edge weights by ``edge_norm``."""
    return [graph_from_dict(r, edge_norm) for r in records]
