"""Learning-free heuristics for the tree search: plain (zero) and Hungarian."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from .assignment import solve_lap
from .errors import InfeasibleError
from .graph import GEOMETRIC, UNLABELED_VARIANT, EditCostModel, Graph

INF = math.inf


class _ZeroSession:
    def h(self, state) -> float:
        return 0.0


class ZeroHeuristic:
    """h(p) = 0 everywhere (plain A*)."""

    name = "zero"
    admissible = True
    is_zero = True

    def prepare(self, g1, g2, cost):
        return _ZeroSession()


def zero_heuristic(state=None) -> float:
    return 0.0


def bipartite_node_matrix(labels1, labels2, cost: EditCostModel) -> np.ndarray:
    """(n1+n2)^2 matrix ``[sub | del-diagonal; ins-diagonal | 0]``."""
    n1, n2 = len(labels1), len(labels2)
    m = np.full((n1 + n2, n1 + n2), INF)
    for i, a in enumerate(labels1):
        for j, b in enumerate(labels2):
            m[i, j] = cost.node_sub(a, b)
        m[i, n2 + i] = cost.node_del(a)
    for j, b in enumerate(labels2):
        m[n1 + j, j] = cost.node_ins(b)
    m[n1:, n2:] = 0.0
    return m


def bipartite_edge_matrix(weights1, weights2, cost: EditCostModel) -> np.ndarray:
    """Same block layout over edges, with edge substitution/deletion/insertion costs."""
    e1, e2 = len(weights1), len(weights2)
    m = np.full((e1 + e2, e1 + e2), INF)
    for i, w in enumerate(weights1):
        for j, x in enumerate(weights2):
            m[i, j] = cost.edge_sub(w, x)
        m[i, e2 + i] = cost.edge_del(w)
    for j, x in enumerate(weights2):
        m[e1 + j, j] = cost.edge_ins(x)
    m[e1:, e2:] = 0.0
    return m


def _lap_value(m: np.ndarray, lap: str) -> float:
    if m.shape[0] == 0:
        return 0.0
    try:
        return solve_lap(m, lap).total_cost
    except InfeasibleError:
        return INF


def node_lap_closed_form(labels1, labels2, cost: EditCostModel) -> float:
    """Optimal value of the node LAP for the unit-cost label models.

    Matching equal labels is free, any other pair costs ``min(sub, del+ins)``,
    so the optimum pairs up equal labels first.
    """
    n1, n2 = len(labels1), len(labels2)
    if cost.variant == UNLABELED_VARIANT:
        common = min(n1, n2)
    else:
        c1, c2 = Counter(labels1), Counter(labels2)
        common = sum(min(c, c2[lab]) for lab, c in c1.items())
    r1, r2 = n1 - common, n2 - common
    s = min(r1, r2)
    pair = min(cost.node_sub_cost if cost.variant != UNLABELED_VARIANT else 0.0, cost.node_del_cost + cost.node_ins_cost)
    return s * pair + (r1 - s) * cost.node_del_cost + (r2 - s) * cost.node_ins_cost


def edge_lap_closed_form(e1: int, e2: int, cost: EditCostModel) -> float:
    """Optimal value of the edge LAP when edge substitution is free."""
    s = min(e1, e2)
    return (e1 - s) * cost.edge_del_cost + (e2 - s) * cost.edge_ins_cost


def hungarian_bound(g1: Graph, g2: Graph, cost: EditCostModel, lap: str = "jv", closed_form: bool = True) -> float:
    """Node-LAP plus edge-LAP lower bound on GED(g1, g2)."""
    w1 = [w for _, _, w in g1.edges]
    w2 = [w for _, _, w in g2.edges]
    if closed_form and cost.variant != GEOMETRIC:
        return node_lap_closed_form(g1.labels, g2.labels, cost) + edge_lap_closed_form(len(w1), len(w2), cost)
    node = _lap_value(bipartite_node_matrix(g1.labels, g2.labels, cost), lap)
    if node == INF:
        return INF
    return node + _lap_value(bipartite_edge_matrix(w1, w2, cost), lap)


class _HungarianSession:
    def __init__(self, g1, g2, cost, lap, closed_form):
        self.g1, self.g2, self.cost = g1, g2, cost
        self.lap = lap
        self.closed_form = closed_form and cost.variant != GEOMETRIC
        self.n1, self.n2 = g1.n, g2.n

    def h(self, state) -> float:
        g1, g2, cost = self.g1, self.g2, self.cost
        done1 = state.edited_sources()
        done2 = state.edited_targets()
        rows = [i for i in range(self.n1) if i not in done1]
        cols = [j for j in range(self.n2) if j not in done2]
        if not rows and not cols:
            return 0.0
        keep1, keep2 = set(rows), set(cols)
        labels1 = [g1.labels[i] for i in rows]
        labels2 = [g2.labels[j] for j in cols]
        w1 = [w for u, v, w in g1.edges if u in keep1 and v in keep1]
        w2 = [w for u, v, w in g2.edges if u in keep2 and v in keep2]
        if self.closed_form:
            return node_lap_closed_form(labels1, labels2, cost) + edge_lap_closed_form(len(w1), len(w2), cost)
        node = _lap_value(bipartite_node_matrix(labels1, labels2, cost), self.lap)
        if node == INF:
            return INF
        return node + _lap_value(bipartite_edge_matrix(w1, w2, cost), self.lap)


class HungarianHeuristic:
    """Bipartite lower bound on the unmatched subgraphs, recomputed per state.

    ``closed_form`` evaluates the LAP optimum analytically for the unit-cost
    label models (identical value, no matrix); geometric costs always go
    through the LAP solver named by ``lap``.
    """

    name = "hungarian"
    admissible = True

    def __init__(self, lap: str = "jv", closed_form: bool = True):
        self.lap = lap
        self.closed_form = closed_form

    def prepare(self, g1, g2, cost):
        return _HungarianSession(g1, g2, cost, self.lap, self.closed_form)


def hungarian_heuristic(g1: Graph, g2: Graph, cost: EditCostModel, state, **kwargs) -> float:
    return HungarianHeuristic(**kwargs).prepare(g1, g2, cost).h(state)
