"""Best-first tree search over node editions (A* and its beam relaxation).

Source nodes are edited strictly in index order, so every partial mapping
is reachable through exactly one branch of the tree and no CLOSED list is
needed. Once all source nodes are edited, the remaining target nodes are
inserted in a single step.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .errors import BudgetExceeded, InfeasibleError
from .graph import CostTables, EditCostModel, EditOp, EditPath, Graph, PartialMapping

INF = math.inf
DEFAULT_MAX_STATES = 10_000_000


class SearchState:
    """One node of the search tree: a partial edit path ``p``.

    ``mapping[i]`` is the target of source node ``i`` (``-1`` = deleted) for
    the first ``k = len(mapping)`` source nodes; ``used`` is a bitmask of the
    target nodes edited so far (substituted or inserted).
    """

    __slots__ = ("mapping", "used", "g", "h", "parent", "ops", "complete")

    def __init__(self, mapping, used, g, h, parent, ops, complete):
        self.mapping = mapping
        self.used = used
        self.g = g
        self.h = h
        self.parent = parent
        self.ops = ops
        self.complete = complete

    @property
    def depth(self) -> int:
        return len(self.mapping)

    @property
    def priority(self) -> float:
        return self.g + self.h

    @property
    def inserted_targets(self) -> frozenset:
        matched = {t for t in self.mapping if t >= 0}
        return frozenset(j for j in _bits(self.used) if j not in matched)

    def edited_sources(self) -> range:
        return range(len(self.mapping))

    def edited_targets(self) -> set:
        return set(_bits(self.used))

    def __repr__(self) -> str:
        return f"SearchState(mapping={self.mapping}, used={self.used:b}, g={self.g}, h={self.h})"


def _bits(mask: int):
    j = 0
    while mask:
        if mask & 1:
            yield j
        mask >>= 1
        j += 1


@dataclass
class SearchStats:
    states_enqueued: int = 0
    states_expanded: int = 0
    wall_time: float = 0.0
    optimal_found: bool = False
    popped_priorities: Optional[list] = field(default=None, repr=False)


@dataclass(frozen=True)
class SearchLimits:
    max_states: int = DEFAULT_MAX_STATES
    max_time: Optional[float] = None


class HeuristicSession(Protocol):
    def h(self, state: SearchState) -> float: ...


class HeuristicProvider(Protocol):
    """Estimates the remaining cost of a partial edit path.

    ``admissible`` declares that ``h`` never exceeds the optimal remaining
    cost, which makes A* exact.
    """

    name: str
    admissible: bool

    def prepare(self, g1: Graph, g2: Graph, cost: EditCostModel) -> HeuristicSession: ...


class SolveResult(tuple):
    """``(path, ged, stats)`` triple."""

    __slots__ = ()

    def __new__(cls, path, ged, stats):
        return super().__new__(cls, (path, ged, stats))

    path = property(lambda self: self[0])
    ged = property(lambda self: self[1])
    stats = property(lambda self: self[2])


def recover_path(goal: SearchState) -> EditPath:
    """Walk parent links from a complete state back to the root."""
    chunks = []
    s = goal
    while s is not None:
        chunks.append(s.ops)
        s = s.parent
    ops = tuple(op for chunk in reversed(chunks) for op in chunk)
    return EditPath(ops, goal.complete)


def _run(g1, g2, cost, heuristic, limits, beam_width, prefix, record_priorities):
    limits = limits or SearchLimits()
    stats = SearchStats(popped_priorities=[] if record_priorities else None)
    t0 = time.perf_counter()
    tables = CostTables(g1, g2, cost)
    session = heuristic.prepare(g1, g2, cost)
    hfun = None if getattr(heuristic, "is_zero", False) else session.h
    n1, n2 = g1.n, g2.n
    full = (1 << n2) - 1

    fixed = {}
    reserved = 0
    if prefix is not None:
        fixed = {u: (-1 if v is None else v) for u, v in prefix.src.items()}
        for t in prefix.targets:
            reserved |= 1 << t

    open_heap = []
    seq = itertools.count()

    def push(state):
        if state.g == INF:
            return
        if hfun is not None:
            state.h = 0.0 if state.complete else hfun(state)
        f = state.g + state.h
        if f == INF:
            return
        # ties: larger g, then deeper, then first inserted
        heapq.heappush(open_heap, (f, -state.g, -len(state.mapping), next(seq), state))
        stats.states_enqueued += 1

    def children(p):
        k = len(p.mapping)
        if k < n1:
            cands = [fixed[k]] if k in fixed else [v for v in range(n2) if not (p.used | reserved) >> v & 1] + [-1]
            for v in cands:
                d = tables.sub_delta_ordered(p.mapping, p.used, v)
                used = p.used | (1 << v) if v >= 0 else p.used
                op = EditOp.sub(k, v) if v >= 0 else EditOp.delete(k)
                yield SearchState(p.mapping + (v,), used, p.g + d, 0.0, p, (op,), k + 1 == n1 and used == full)
        else:
            d = tables.bulk_insert_delta(p.used)
            ops = tuple(EditOp.insert(v) for v in range(n2) if not p.used >> v & 1)
            yield SearchState(p.mapping, full, p.g + d, 0.0, p, ops, True)

    root = SearchState((), 0, 0.0, 0.0, None, (), n1 == 0 and n2 == 0)
    if n1 == 0:
        push(root)
    else:
        for child in children(root):
            push(child)

    while open_heap:
        if stats.states_enqueued > limits.max_states:
            stats.wall_time = time.perf_counter() - t0
            raise BudgetExceeded(f"state budget of {limits.max_states} exhausted", open_heap[0][0], stats)
        if limits.max_time is not None and stats.states_expanded % 64 == 0 and time.perf_counter() - t0 > limits.max_time:
            stats.wall_time = time.perf_counter() - t0
            raise BudgetExceeded(f"time budget of {limits.max_time}s exhausted", open_heap[0][0], stats)
        f, _, _, _, p = heapq.heappop(open_heap)
        if stats.popped_priorities is not None:
            stats.popped_priorities.append(f)
        if p.complete:
            stats.wall_time = time.perf_counter() - t0
            stats.optimal_found = bool(heuristic.admissible) and beam_width is None
            return SolveResult(recover_path(p), p.g, stats)
        stats.states_expanded += 1
        for child in children(p):
            push(child)
        if beam_width is not None and len(open_heap) > beam_width:
            open_heap = heapq.nsmallest(beam_width, open_heap)

    stats.wall_time = time.perf_counter() - t0
    raise InfeasibleError(f"no finite-cost edit path from {g1.id!r} to {g2.id!r}")


def astar_solve(
    g1: Graph,
    g2: Graph,
    cost: EditCostModel,
    heuristic: HeuristicProvider,
    limits: Optional[SearchLimits] = None,
    prefix: Optional[PartialMapping] = None,
    record_priorities: bool = False,
) -> SolveResult:
    """Best-first search for a minimum-cost complete edit path.

    The returned ``ged`` is the exact cost of the returned path; it is the
    optimum whenever ``heuristic.admissible`` holds. ``prefix`` restricts the
    search to completions of a given partial path (its editions are forced).

    Raises :class:`InfeasibleError` when no finite completion exists and
    :class:`BudgetExceeded` when ``limits`` run out.
    """
    return _run(g1, g2, cost, heuristic, limits, None, prefix, record_priorities)


def beam_solve(
    g1: Graph,
    g2: Graph,
    cost: EditCostModel,
    heuristic: HeuristicProvider,
    beam_width: Optional[int],
    limits: Optional[SearchLimits] = None,
) -> SolveResult:
    """A* with OPEN truncated to the ``beam_width`` best states after each expansion.

    ``beam_width=None`` disables truncation. The result is an upper bound on GED.
    """
    if beam_width is not None:
        if isinstance(beam_width, float) and math.isinf(beam_width):
            beam_width = None
        elif beam_width < 1:
            raise ValueError("beam_width must be >= 1")
    return _run(g1, g2, cost, heuristic, limits, beam_width, None, False)
