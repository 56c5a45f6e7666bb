"""Inexact bipartite GED solvers: one LAP over a node matrix with edge costs folded in."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .assignment import lap_hungarian, lap_jv
from .errors import InfeasibleError
from .graph import EditCostModel, EditOp, EditPath, Graph, path_cost
from .heuristics import bipartite_edge_matrix

INF = math.inf


class BipartiteGedResult(NamedTuple):
    path: EditPath
    ged_upper: float
    lap_cost: float


def _incident_lap(ws1: list, ws2: list, cost: EditCostModel) -> float:
    if not ws1 and not ws2:
        return 0.0
    return lap_jv(bipartite_edge_matrix(ws1, ws2, cost)).total_cost


def build_node_edge_cost_matrix(g1: Graph, g2: Graph, cost: EditCostModel) -> np.ndarray:
    """(n1+n2)^2 matrix whose entries add the cost of the incident edges to each node edition.

    Substitution entries solve a small LAP between the two incident-edge sets;
    deletion/insertion entries add the deletion/insertion of every incident edge.
    """
    n1, n2 = g1.n, g2.n
    inc1 = [list(a.values()) for a in g1.adjacency]
    inc2 = [list(a.values()) for a in g2.adjacency]
    m = np.full((n1 + n2, n1 + n2), INF)
    for i in range(n1):
        for j in range(n2):
            m[i, j] = cost.node_sub(g1.labels[i], g2.labels[j]) + _incident_lap(inc1[i], inc2[j], cost)
        m[i, n2 + i] = cost.node_del(g1.labels[i]) + sum(cost.edge_del(w) for w in inc1[i])
    for j in range(n2):
        m[n1 + j, j] = cost.node_ins(g2.labels[j]) + sum(cost.edge_ins(w) for w in inc2[j])
    m[n1:, n2:] = 0.0
    return m


def _solve(g1: Graph, g2: Graph, cost: EditCostModel, lap) -> BipartiteGedResult:
    m = build_node_edge_cost_matrix(g1, g2, cost)
    try:
        assignment = lap(m)
    except InfeasibleError as exc:
        raise InfeasibleError(f"no finite-cost edit path from {g1.id!r} to {g2.id!r}") from exc
    n1, n2 = g1.n, g2.n
    ops = []
    for i in range(n1):
        j = assignment.perm[i]
        ops.append(EditOp.sub(i, j) if j < n2 else EditOp.delete(i))
    for r in range(n1, n1 + n2):
        j = assignment.perm[r]
        if j < n2:
            ops.append(EditOp.insert(j))
    path = EditPath(tuple(ops), True)
    return BipartiteGedResult(path, path_cost(g1, g2, cost, path), assignment.total_cost)


def hungarian_ged(g1: Graph, g2: Graph, cost: EditCostModel) -> BipartiteGedResult:
    """Bipartite GED upper bound with the Hungarian LAP solver."""
    return _solve(g1, g2, cost, lap_hungarian)


def vj_ged(g1: Graph, g2: Graph, cost: EditCostModel) -> BipartiteGedResult:
    """Bipartite GED upper bound with the Jonker-Volgenant LAP solver."""
    return _solve(g1, g2, cost, lap_jv)
