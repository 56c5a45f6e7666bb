"""Evaluation harness: named solver methods, per-instance runs and EvalReport."""

from __future__ import annotations

import csv
import json
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .bipartite import hungarian_ged, vj_ged
from .data import DatasetManifest
from .errors import BudgetExceeded, InfeasibleError
from .genn import GennHeuristic, GennModel, ged_to_similarity, predict_similarity
from .graph import EditCostModel, Graph
from .heuristics import HungarianHeuristic, ZeroHeuristic
from .metrics import metric_mse, metric_p_at_k, metric_spearman
from .search import SearchLimits, astar_solve, beam_solve

BENCH_COLUMNS = ("pair_id", "n1", "n2", "method", "ged", "optimal_ged", "states_enqueued", "time_ms")
REPORT_COLUMNS = ("method", "mse", "rho", "p_at_10", "mean_tree_size", "mean_time_s", "optimal_fraction")
HEURISTICS = ("zero", "hungarian", "genn")
_METHOD_RE = re.compile(r"^(?:(astar)-(\w+)|beam(\d+)-(\w+)|(hungarian|vj|genn-regression))$")


class UnknownMethodError(ValueError):
    pass


class UnknownHeuristicError(ValueError):
    pass


class MissingModelError(ValueError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    """A parsed method name.

    Names: ``astar-<h>``, ``beam<W>-<h>`` with ``h`` in zero/hungarian/genn,
    ``hungarian``, ``vj`` (bipartite upper bounds) and ``genn-regression``
    (direct similarity prediction, no edit path).
    """

    name: str
    kind: str
    heuristic: Optional[str] = None
    beam_width: Optional[int] = None

    @property
    def needs_model(self) -> bool:
        return self.heuristic == "genn" or self.kind == "genn-regression"

    @property
    def searches(self) -> bool:
        return self.kind in ("astar", "beam")


def parse_method(name: str) -> MethodSpec:
    m = _METHOD_RE.match(name.strip())
    if m is None:
        raise UnknownMethodError(f"unknown method {name!r}")
    if m.group(1):
        kind, h, width = "astar", m.group(2), None
    elif m.group(3):
        kind, h, width = "beam", m.group(4), int(m.group(3))
        if width < 1:
            raise UnknownMethodError(f"beam width must be >= 1 in {name!r}")
    else:
        return MethodSpec(name, m.group(5))
    if h not in HEURISTICS:
        raise UnknownHeuristicError(f"unknown heuristic {h!r} in method {name!r}")
    return MethodSpec(name, kind, h, width)


def make_heuristic(name: str, model: Optional[GennModel] = None):
    if name == "zero":
        return ZeroHeuristic()
    if name == "hungarian":
        return HungarianHeuristic()
    if name == "genn":
        if model is None:
            raise MissingModelError("heuristic 'genn' needs a model checkpoint")
        return GennHeuristic(model)
    raise UnknownHeuristicError(f"unknown heuristic {name!r}")


@dataclass
class InstanceResult:
    pair_id: str
    n1: int
    n2: int
    method: str
    ged: Optional[float]
    optimal_ged: Optional[float]
    states_enqueued: Optional[int]
    time_ms: float
    optimal_found: bool = False
    similarity: Optional[float] = None


def run_method(spec: MethodSpec, g1: Graph, g2: Graph, cost: EditCostModel, model: Optional[GennModel] = None, max_states: int = 10_000_000) -> InstanceResult:
    """Solve one pair; only the solve itself is timed.

    Budget exhaustion and infeasibility yield ``ged=None`` rather than raising.
    """
    pair_id = f"{g1.id}|{g2.id}"
    if spec.needs_model and model is None:
        raise MissingModelError(f"method {spec.name!r} needs a model checkpoint")
    if spec.kind == "genn-regression":
        t0 = time.perf_counter()
        s = predict_similarity(model, g1, g2, "genn") if g1.n and g2.n else None
        dt = time.perf_counter() - t0
        return InstanceResult(pair_id, g1.n, g2.n, spec.name, None, None, None, dt * 1e3, False, s)
    if spec.kind in ("hungarian", "vj"):
        t0 = time.perf_counter()
        try:
            res = (hungarian_ged if spec.kind == "hungarian" else vj_ged)(g1, g2, cost)
            ged = res.ged_upper
        except InfeasibleError:
            ged = None
        dt = time.perf_counter() - t0
        return InstanceResult(pair_id, g1.n, g2.n, spec.name, ged, None, None, dt * 1e3)
    heuristic = make_heuristic(spec.heuristic, model)
    limits = SearchLimits(max_states=max_states)
    t0 = time.perf_counter()
    try:
        if spec.kind == "astar":
            res = astar_solve(g1, g2, cost, heuristic, limits)
        else:
            res = beam_solve(g1, g2, cost, heuristic, spec.beam_width, limits)
        ged, states, opt = res.ged, res.stats.states_enqueued, res.stats.optimal_found
    except BudgetExceeded as exc:
        ged, states, opt = None, exc.stats.states_enqueued, False
    except InfeasibleError:
        ged, states, opt = None, None, False
    dt = time.perf_counter() - t0
    return InstanceResult(pair_id, g1.n, g2.n, spec.name, ged, None, states, dt * 1e3, opt)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


def _bench_job(args):
    spec, g1, g2, cost, model, max_states, optimal = args
    r = run_method(spec, g1, g2, cost, model, max_states)
    r.optimal_ged = optimal
    return r


def worker_count() -> int:
    raw = os.environ.get("GEDFORGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_bench(pairs: Sequence[tuple], methods: Sequence[str], cost: EditCostModel, model: Optional[GennModel] = None, max_states: int = 10_000_000, workers: Optional[int] = None) -> list:
    """Every method on every ``(g1, g2[, optimal_ged])`` pair, rows sorted by (pair_id, method)."""
    specs = [parse_method(m) for m in methods]
    for spec in specs:
        if spec.needs_model and model is None:
            raise MissingModelError(f"method {spec.name!r} needs a model checkpoint")
    jobs = [(s, p[0], p[1], cost, model, max_states, p[2] if len(p) > 2 else None) for p in pairs for s in specs]
    workers = workers or worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_bench_job(j) for j in jobs]
    rows.sort(key=lambda r: (r.pair_id, r.method))
    return rows


def write_bench_csv(rows: Sequence[InstanceResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in BENCH_COLUMNS])


# ------------------------------------------------------------------ reports

@dataclass
class ReportRow:
    method: str
    mse: Optional[float]
    rho: Optional[float]
    p_at_10: Optional[float]
    mean_tree_size: Optional[float]
    mean_time_s: Optional[float]
    optimal_fraction: Optional[float]


@dataclass
class EvalReport:
    """Per-method metric rows; ``mse`` is reported in units of 1e-3."""

    rows: list
    k: int = 10

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "rows": [asdict(r) for r in self.rows]}, indent=1, sort_keys=True)

    def write(self, csv_path, json_path) -> None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])
        with open(json_path, "w") as fh:
            fh.write(self.to_json() + "\n")


def _none_if_nan(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def evaluation_queries(manifest: DatasetManifest, split: str = "test") -> list:
    """``(query, [(corpus_graph, ged), ...])`` for every query whose pairs are all labeled."""
    by_query = {}
    for p in manifest.pairs:
        if p.split == split:
            by_query.setdefault(p.i, []).append(p)
    out = []
    for q in sorted(by_query):
        ps = sorted(by_query[q], key=lambda p: manifest.graphs[p.j].id)
        if all(p.ged is not None for p in ps):
            out.append((manifest.graphs[q], [(manifest.graphs[p.j], p.ged) for p in ps]))
    return out


def evaluate(manifest: DatasetManifest, methods: Sequence[str], model: Optional[GennModel] = None, split: str = "test", k: int = 10, max_states: int = 10_000_000) -> EvalReport:
    """Similarity-space mse, per-query Spearman rho and p@k for each method, plus search statistics.

    ``k`` is capped at the corpus size.
    """
    queries = evaluation_queries(manifest, split)
    if not queries:
        raise ValueError(f"no fully labeled {split!r} queries in manifest")
    specs = [parse_method(m) for m in methods]
    corpus = len(queries[0][1])
    k = min(k, corpus)
    rows = []
    for spec in specs:
        preds, labels, ids = [], [], []
        trees, times, optimal = [], [], []
        for q, items in queries:
            qp, ql = [], []
            for g, ged in items:
                r = run_method(spec, q, g, manifest.cost, model, max_states)
                if r.similarity is not None:
                    s = r.similarity
                elif r.ged is not None:
                    s = ged_to_similarity(r.ged, q.n, g.n)
                else:
                    s = 0.0
                qp.append(s)
                ql.append(ged_to_similarity(ged, q.n, g.n))
                times.append(r.time_ms / 1e3)
                if spec.searches and r.states_enqueued is not None:
                    trees.append(r.states_enqueued)
                if spec.kind != "genn-regression":
                    optimal.append(r.ged is not None and abs(r.ged - ged) <= 1e-9 * max(1.0, ged))
            preds.append(np.array(qp))
            labels.append(np.array(ql))
            ids = [g.id for g, _ in items]
        rows.append(
            ReportRow(
                spec.name,
                metric_mse(preds, labels) * 1e3,
                _none_if_nan(metric_spearman(preds, labels)),
                metric_p_at_k(preds, labels, k, ids),
                float(np.mean(trees)) if trees else None,
                float(np.mean(times)),
                float(np.mean(optimal)) if optimal else None,
            )
        )
    return EvalReport(rows, k)
