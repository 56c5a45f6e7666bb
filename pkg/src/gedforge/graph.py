"""Graphs, node edit operations, edit cost models and edit-path costing.

Only node editions are explicit. Edge editions are induced from them and
charged exactly once, at the moment the second endpoint of an edge gets
its node edition fixed. That rule makes the accumulated cost of a partial
path monotone in the prefix and lets a search extend it in O(degree).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

from .errors import GraphError, InvalidPathError

INF = math.inf

UNLABELED = None


@dataclass(frozen=True)
class Graph:
    """Undirected graph with one categorical label per node and scalar edge weights.

    ``labels[i]`` is the label of node ``i`` (``None`` when unlabeled).
    ``edges`` holds ``(u, v, weight)`` triples; ``Graph.build`` canonicalizes
    them to ``u < v`` in sorted order.
    """

    id: str
    labels: tuple
    edges: tuple = ()

    @classmethod
    def build(cls, id: str, labels: Sequence[Optional[str]], edges: Iterable = ()) -> "Graph":
        canon = []
        for e in edges:
            if len(e) == 2:
                u, v = e
                w = 1.0
            else:
                u, v, w = e
            u, v = int(u), int(v)
            if u > v:
                u, v = v, u
            canon.append((u, v, float(w)))
        canon.sort()
        return cls(str(id), tuple(labels), tuple(canon))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def labeled(self) -> bool:
        return any(lab is not None for lab in self.labels)

    @cached_property
    def adjacency(self) -> list:
        """Per-node dict ``neighbor -> weight``."""
        adj = [dict() for _ in range(self.n)]
        for u, v, w in self.edges:
            adj[u][v] = w
            adj[v][u] = w
        return adj

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adjacency[u]

    def weight(self, u: int, v: int) -> Optional[float]:
        return self.adjacency[u].get(v)


def validate_graph(g: Graph) -> list:
    """Return a list of human-readable invariant violations; empty when valid."""
    errors = []
    n = len(g.labels)
    seen = set()
    for e in g.edges:
        u, v, w = e
        if not (isinstance(u, int) and isinstance(v, int)):
            errors.append(f"non-integer endpoint in edge {e!r}")
            continue
        if u == v:
            errors.append(f"self-loop on node {u}")
        if not (0 <= u < n) or not (0 <= v < n):
            errors.append(f"dangling endpoint in edge ({u}, {v}) for a {n}-node graph")
        key = (min(u, v), max(u, v))
        if key in seen:
            errors.append(f"duplicate edge ({key[0]}, {key[1]})")
        seen.add(key)
        if not (w >= 0.0) or math.isinf(w):
            errors.append(f"edge ({u}, {v}) has invalid weight {w!r}")
    return errors


def check_graph(g: Graph) -> Graph:
    errors = validate_graph(g)
    if errors:
        raise GraphError(f"graph {g.id!r}: " + "; ".join(errors))
    return g


# --------------------------------------------------------------------- edits

SUB, DEL, INS = "sub", "del", "ins"


class EditOp(NamedTuple):
    """A node edition. ``u`` indexes the source graph, ``v`` the target graph."""

    kind: str
    u: Optional[int]
    v: Optional[int]

    @classmethod
    def sub(cls, u: int, v: int) -> "EditOp":
        return cls(SUB, u, v)

    @classmethod
    def delete(cls, u: int) -> "EditOp":
        return cls(DEL, u, None)

    @classmethod
    def insert(cls, v: int) -> "EditOp":
        return cls(INS, None, v)

    def __str__(self) -> str:
        u = "eps" if self.u is None else str(self.u)
        v = "eps" if self.v is None else str(self.v)
        return f"{u}->{v}"


@dataclass(frozen=True)
class EditPath:
    ops: tuple = ()
    complete: bool = False

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    def to_json(self) -> list:
        return [[op.kind, op.u, op.v] for op in self.ops]

    @classmethod
    def from_ops(cls, ops: Iterable[EditOp], n1: int, n2: int) -> "EditPath":
        ops = tuple(ops)
        m = PartialMapping.from_ops(ops)
        return cls(ops, m.is_complete(n1, n2))


@dataclass(frozen=True)
class PartialMapping:
    """Edited nodes of a partial path.

    ``src`` maps each edited source node to its target (``None`` = deleted);
    ``inserted`` holds the inserted target nodes.
    """

    src: Mapping = field(default_factory=dict)
    inserted: frozenset = frozenset()

    @cached_property
    def targets(self) -> frozenset:
        return frozenset(v for v in self.src.values() if v is not None) | self.inserted

    @classmethod
    def from_ops(cls, ops: Iterable[EditOp]) -> "PartialMapping":
        m = cls()
        for op in ops:
            m = m.apply(op)
        return m

    def conflicts(self, op: EditOp) -> Optional[str]:
        if op.kind not in (SUB, DEL, INS):
            return f"unknown edit kind {op.kind!r}"
        if op.kind in (SUB, DEL) and op.u in self.src:
            return f"source node {op.u} edited twice"
        if op.kind in (SUB, INS) and op.v in self.targets:
            return f"target node {op.v} edited twice"
        return None

    def apply(self, op: EditOp) -> "PartialMapping":
        msg = self.conflicts(op)
        if msg:
            raise InvalidPathError(msg)
        if op.kind == INS:
            return PartialMapping(self.src, self.inserted | {op.v})
        src = dict(self.src)
        src[op.u] = op.v if op.kind == SUB else None
        return PartialMapping(src, self.inserted)

    def is_complete(self, n1: int, n2: int) -> bool:
        return len(self.src) == n1 and len(self.targets) == n2

    def edited_sources(self):
        return self.src.keys()

    def edited_targets(self) -> frozenset:
        return self.targets

    def ops(self) -> list:
        out = [EditOp.sub(u, v) if v is not None else EditOp.delete(u) for u, v in sorted(self.src.items())]
        out.extend(EditOp.insert(v) for v in sorted(self.inserted))
        return out


# ---------------------------------------------------------------- cost model

UNIFORM_LABEL, UNLABELED_VARIANT, GEOMETRIC = "uniform_label", "unlabeled", "geometric"
VARIANTS = (UNIFORM_LABEL, UNLABELED_VARIANT, GEOMETRIC)


@dataclass(frozen=True)
class EditCostModel:
    """Edit costs of one of the three supported dataset families.

    ``uniform_label``: labeled nodes, unit costs, free edge substitution.
    ``unlabeled``: as above with free node substitution.
    ``geometric``: free node substitution, node insertion/deletion prohibited
    (infinite), edge costs from edge lengths. Lengths are expected to be
    normalized at ingestion.
    """

    variant: str = UNIFORM_LABEL
    node_sub_cost: float = 1.0
    node_del_cost: float = 1.0
    node_ins_cost: float = 1.0
    edge_del_cost: float = 1.0
    edge_ins_cost: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown cost model variant {self.variant!r}")
        for name in ("node_sub_cost", "node_del_cost", "node_ins_cost", "edge_del_cost", "edge_ins_cost"):
            val = getattr(self, name)
            if not (val >= 0) or math.isinf(val):
                raise ValueError(f"{name} must be finite and nonnegative, got {val!r}")

    @classmethod
    def uniform_label(cls) -> "EditCostModel":
        return cls(UNIFORM_LABEL)

    @classmethod
    def unlabeled(cls) -> "EditCostModel":
        return cls(UNLABELED_VARIANT)

    @classmethod
    def geometric(cls) -> "EditCostModel":
        return cls(GEOMETRIC)

    @property
    def geometric_edges(self) -> bool:
        return self.variant == GEOMETRIC

    def node_sub(self, a, b) -> float:
        if self.variant == UNIFORM_LABEL:
            return 0.0 if a == b else self.node_sub_cost
        return 0.0

    def node_del(self, a=None) -> float:
        return INF if self.variant == GEOMETRIC else self.node_del_cost

    def node_ins(self, b=None) -> float:
        return INF if self.variant == GEOMETRIC else self.node_ins_cost

    def edge_sub(self, w1: float, w2: float) -> float:
        return abs(w1 - w2) if self.variant == GEOMETRIC else 0.0

    def edge_del(self, w: float) -> float:
        return w if self.variant == GEOMETRIC else self.edge_del_cost

    def edge_ins(self, w: float) -> float:
        return w if self.variant == GEOMETRIC else self.edge_ins_cost

    def to_dict(self) -> dict:
        d = {"variant": self.variant}
        defaults = EditCostModel(self.variant)
        for name in ("node_sub_cost", "node_del_cost", "node_ins_cost", "edge_del_cost", "edge_ins_cost"):
            if getattr(self, name) != getattr(defaults, name):
                d[name.removesuffix("_cost")] = getattr(self, name)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EditCostModel":
        d = dict(d)
        variant = d.pop("variant", UNIFORM_LABEL)
        kwargs = {}
        for key, val in d.items():
            name = key if key.endswith("_cost") else key + "_cost"
            if name not in cls.__dataclass_fields__ or name == "variant":
                raise ValueError(f"unknown cost model field {key!r}")
            kwargs[name] = float(val)
        return cls(variant, **kwargs)


# ------------------------------------------------------------- path costing

def _check_op_indices(g1: Graph, g2: Graph, op: EditOp) -> None:
    if op.kind in (SUB, DEL) and not (isinstance(op.u, int) and 0 <= op.u < g1.n):
        raise InvalidPathError(f"source node {op.u!r} out of range in {op}")
    if op.kind in (SUB, INS) and not (isinstance(op.v, int) and 0 <= op.v < g2.n):
        raise InvalidPathError(f"target node {op.v!r} out of range in {op}")


def path_cost(g1: Graph, g2: Graph, cost: EditCostModel, path) -> float:
    """Exact cost g(p) of a (partial or complete) edit path.

    Computed from the mapping as a whole, independently of op order: node
    edition costs plus every edge whose two endpoints are both edited.
    """
    ops = path.ops if isinstance(path, EditPath) else tuple(path)
    for op in ops:
        _check_op_indices(g1, g2, op)
    m = PartialMapping.from_ops(ops)

    total = 0.0
    for u, v in m.src.items():
        total += cost.node_sub(g1.labels[u], g2.labels[v]) if v is not None else cost.node_del(g1.labels[u])
    for v in m.inserted:
        total += cost.node_ins(g2.labels[v])

    covered = set()
    for a, b, w in g1.edges:
        if a not in m.src or b not in m.src:
            continue
        x, y = m.src[a], m.src[b]
        w2 = g2.weight(x, y) if x is not None and y is not None else None
        if w2 is None:
            total += cost.edge_del(w)
        else:
            total += cost.edge_sub(w, w2)
            covered.add((min(x, y), max(x, y)))
    edited = m.targets
    for x, y, w in g2.edges:
        if x in edited and y in edited and (x, y) not in covered:
            total += cost.edge_ins(w)
    return total


class CostTables:
    """Precomputed per-pair cost lookups for fast incremental costing."""

    def __init__(self, g1: Graph, g2: Graph, cost: EditCostModel):
        self.g1, self.g2, self.cost = g1, g2, cost
        self.n1, self.n2 = g1.n, g2.n
        self.sub = [[cost.node_sub(a, b) for b in g2.labels] for a in g1.labels]
        self.dele = [cost.node_del(a) for a in g1.labels]
        self.ins = [cost.node_ins(b) for b in g2.labels]
        self.adj1 = g1.adjacency
        self.adj2 = g2.adjacency

    def delta(self, m: PartialMapping, op: EditOp) -> float:
        """Cost added by appending ``op`` to the partial mapping ``m``."""
        _check_op_indices(self.g1, self.g2, op)
        msg = m.conflicts(op)
        if msg:
            raise InvalidPathError(msg)
        cost = self.cost
        src = m.src
        if op.kind == DEL:
            d = self.dele[op.u]
            for u2, w in self.adj1[op.u].items():
                if u2 in src:
                    d += cost.edge_del(w)
            return d
        edited_t = m.targets
        if op.kind == INS:
            d = self.ins[op.v]
            for v2, w in self.adj2[op.v].items():
                if v2 in edited_t:
                    d += cost.edge_ins(w)
            return d
        u, v = op.u, op.v
        d = self.sub[u][v]
        a2 = self.adj2[v]
        covered = set()
        for u2, w in self.adj1[u].items():
            if u2 not in src:
                continue
            t = src[u2]
            w2 = a2.get(t) if t is not None else None
            if w2 is None:
                d += cost.edge_del(w)
            else:
                d += cost.edge_sub(w, w2)
                covered.add(t)
        for v2, w in a2.items():
            if v2 in edited_t and v2 not in covered:
                d += cost.edge_ins(w)
        return d

    def sub_delta_ordered(self, mapping: tuple, used_mask: int, v: int) -> float:
        """Delta for ``u_k -> v`` (``v = -1`` for deletion) when sources
        ``0..k-1`` are edited as ``mapping`` and no target was inserted yet.

        This is the hot path of the tree search.
        """
        u = len(mapping)
        cost = self.cost
        a1 = self.adj1[u]
        if v < 0:
            d = self.dele[u]
            for u2, w in a1.items():
                if u2 < u:
                    d += cost.edge_del(w)
            return d
        d = self.sub[u][v]
        a2 = self.adj2[v]
        covered = 0
        for u2, w in a1.items():
            if u2 >= u:
                continue
            t = mapping[u2]
            w2 = a2.get(t) if t >= 0 else None
            if w2 is None:
                d += cost.edge_del(w)
            else:
                d += cost.edge_sub(w, w2)
                covered |= 1 << t
        for v2, w in a2.items():
            bit = 1 << v2
            if used_mask & bit and not covered & bit:
                d += cost.edge_ins(w)
        return d

    def bulk_insert_delta(self, used_mask: int) -> float:
        """Delta for inserting every target outside ``used_mask`` at once."""
        cost = self.cost
        d = 0.0
        for v in range(self.n2):
            if used_mask >> v & 1:
                continue
            d += self.ins[v]
        for x, y, w in self.g2.edges:
            if not (used_mask >> x & 1 and used_mask >> y & 1):
                d += cost.edge_ins(w)
        return d


def incremental_cost(g1: Graph, g2: Graph, cost: EditCostModel, prefix: PartialMapping, new_op: EditOp) -> float:
    """Return the increase of g(p) caused by appending ``new_op`` to ``prefix``."""
    return CostTables(g1, g2, cost).delta(prefix, new_op)


def induced_subgraph(g: Graph, keep: Iterable[int], id: Optional[str] = None) -> tuple:
    """Induced subgraph on ``keep`` (in ascending index order).

    Returns ``(subgraph, old_to_new)``.
    """
    keep = sorted(keep)
    index = {old: new for new, old in enumerate(keep)}
    edges = [(index[u], index[v], w) for u, v, w in g.edges if u in index and v in index]
    sub = Graph(g.id if id is None else id, tuple(g.labels[i] for i in keep), tuple(edges))
    return sub, index


class Unmatched(NamedTuple):
    g1: Graph
    g2: Graph
    index1: dict
    index2: dict


def unmatched_subgraphs(g1: Graph, g2: Graph, state) -> Unmatched:
    """Induced subgraphs on the nodes a partial mapping has not edited yet.

    ``state`` is a :class:`PartialMapping` or anything exposing
    ``edited_sources()`` / ``edited_targets()``.
    """
    if isinstance(state, PartialMapping):
        s_done, t_done = state.src.keys(), state.targets
    else:
        s_done, t_done = state.edited_sources(), state.edited_targets()
    sub1, idx1 = induced_subgraph(g1, (i for i in range(g1.n) if i not in s_done))
    sub2, idx2 = induced_subgraph(g2, (j for j in range(g2.n) if j not in t_done))
    return Unmatched(sub1, sub2, idx1, idx2)


# ----------------------------------------------------------------- JSON I/O

def graph_to_dict(g: Graph) -> dict:
    return {
        "id": g.id,
        "nodes": [{"id": i, "label": lab} for i, lab in enumerate(g.labels)],
        "edges": [{"u": u, "v": v, "weight": w} for u, v, w in g.edges],
    }


def graph_from_dict(d: Mapping, edge_scale: float = 1.0) -> Graph:
    """Parse and validate a graph; edge weights are divided by ``edge_scale``."""
    try:
        if d.get("directed"):
            raise GraphError("directed graphs are not supported")
        nodes = sorted(d["nodes"], key=lambda nd: nd["id"])
        ids = [nd["id"] for nd in nodes]
        if ids != list(range(len(ids))):
            raise GraphError(f"graph {d.get('id')!r}: node ids must be exactly 0..n-1, got {ids}")
        labels = tuple(None if nd.get("label") is None else str(nd["label"]) for nd in nodes)
        raw_edges = []
        for e in d.get("edges", []):
            raw_edges.append((e["u"], e["v"], float(e.get("weight", 1.0)) / edge_scale))
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph record: {exc!r}") from exc
    for u, v, _ in raw_edges:
        if not (isinstance(u, int) and isinstance(v, int)):
            raise GraphError(f"graph {d.get('id')!r}: non-integer edge endpoint ({u!r}, {v!r})")
    g = Graph(str(d.get("id", "")), labels, tuple(raw_edges))
    check_graph(g)
    return Graph.build(g.id, g.labels, g.edges)


def dumps_graph(g: Graph) -> str:
    return json.dumps(graph_to_dict(g), sort_keys=True, separators=(",", ":"))


def load_graphs(path, edge_scale: float = 1.0) -> list:
    """Load one graph per file, a JSON list of graphs, or JSON lines."""
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}: malformed JSON: {exc}") from exc
    if isinstance(data, dict):
        data = [data]
    return [graph_from_dict(d, edge_scale) for d in data]


def load_graph(path, edge_scale: float = 1.0) -> Graph:
    graphs = load_graphs(path, edge_scale)
    if len(graphs) != 1:
        raise GraphError(f"{path}: expected exactly one graph, found {len(graphs)}")
    return graphs[0]


def save_graphs(graphs: Sequence[Graph], path) -> None:
    with open(path, "w") as fh:
        for g in graphs:
            fh.write(dumps_graph(g) + "\n")
