"""Acceptance suite: one PASS/FAIL line per criterion, printed to the terminal.

Run with ``pytest tests/test_acceptance.py -v`` (the lines bypass output
capture) or ``python3 tests/test_acceptance.py`` for just the summary.
"""

import json
import math
import time

import numpy as np
import pytest

from gedforge import cli
from gedforge.bipartite import hungarian_ged, vj_ged
from gedforge.data import generate_synthetic, label_manifest, split_dataset
from gedforge.errors import BudgetExceeded
from gedforge.genn import (
    FeatureConfig,
    GennHeuristic,
    GennModel,
    attention_pool,
    build_cache,
    build_layer_cache,
    exact_dynamic_update,
    gcn_forward,
    ged_to_similarity,
    make_strategy,
    masked_similarity,
    ntn_score,
    predict_similarity,
    similarity_from_embeddings,
    similarity_to_h,
)
from gedforge.graph import EditCostModel, EditOp, PartialMapping, induced_subgraph, path_cost, unmatched_subgraphs
from gedforge.heuristics import HungarianHeuristic, ZeroHeuristic
from gedforge.search import SearchLimits, SearchState, astar_solve, beam_solve
from gedforge.training import (
    Sample,
    TrainConfig,
    exact_completion_cost,
    finetune_with_paths,
    generate_partial_labels,
    loss_and_grad,
    regression_samples,
    train_regression,
)
from oracles import brute_force_ged, brute_force_ged_unit, random_graph

from conftest import random_pairs

UNIT_MODELS = ("uniform_label", "unlabeled")
RESULTS = {}


def report(criterion, ok, detail):
    line = f"C{criterion:<2} {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[criterion] = line
    return line


@pytest.fixture
def emit(capsys):
    def _emit(criterion, ok, detail):
        with capsys.disabled():
            print("\n" + report(criterion, ok, detail))
        assert ok, detail

    return _emit


def _suite(variant):
    labels = None if variant == "unlabeled" else ["C", "N", "O"]
    return random_pairs(200, seed=2024, max_n=5, min_n=2, labels=labels)


# ------------------------------------------------------------ C1, C3

def test_c1_exact_solver_matches_brute_force(emit):
    t0 = time.perf_counter()
    mismatches, checked = [], 0
    for variant in UNIT_MODELS:
        cost = EditCostModel(variant)
        for g1, g2 in _suite(variant):
            want = brute_force_ged_unit(g1, g2, cost)
            for h in (ZeroHeuristic(), HungarianHeuristic()):
                got = astar_solve(g1, g2, cost, h).ged
                checked += 1
                if got != want:
                    mismatches.append((variant, g1.id, h.name, got, want))
    elapsed = time.perf_counter() - t0
    emit(1, not mismatches and elapsed < 60, f"{checked} solves, {len(mismatches)} mismatches, {elapsed:.1f}s (limit 60s)")


def test_c1_vectorized_oracle_agrees_with_path_enumeration(uniform):
    for g1, g2 in random_pairs(40, seed=7, max_n=4, min_n=0):
        assert brute_force_ged_unit(g1, g2, uniform) == brute_force_ged(g1, g2, uniform)


def test_c3_upper_bounds(emit):
    below, cost_mismatch, total = [], [], 0
    for variant in UNIT_MODELS:
        cost = EditCostModel(variant)
        for g1, g2 in _suite(variant):
            opt = brute_force_ged_unit(g1, g2, cost)
            results = [("hungarian", *hungarian_ged(g1, g2, cost)[:2]), ("vj", *vj_ged(g1, g2, cost)[:2])]
            for w in (1, 5, 50):
                r = beam_solve(g1, g2, cost, HungarianHeuristic(), w)
                results.append((f"beam{w}", r.path, r.ged))
            for name, path, ged in results:
                total += 1
                if ged < opt:
                    below.append((variant, g1.id, name))
                if path_cost(g1, g2, cost, path) != ged:
                    cost_mismatch.append((variant, g1.id, name))
    emit(3, not below and not cost_mismatch, f"{total} results, {len(below)} below optimum, {len(cost_mismatch)} path_cost mismatches")


# ---------------------------------------------------------------- C2

def _reachable_states(n1, n2):
    """Every state of the full ordered search tree, as mapping tuples (-1 = delete)."""
    out, frontier = [()], [()]
    for _ in range(n1):
        frontier = [m + (v,) for m in frontier for v in [v for v in range(n2) if v not in m] + [-1]]
        out.extend(frontier)
    return out


def _as_state(mapping):
    used = 0
    for v in mapping:
        if v >= 0:
            used |= 1 << v
    return SearchState(tuple(mapping), used, 0.0, 0.0, None, (), False)


def test_c2_hungarian_heuristic_admissible(emit):
    rng = np.random.default_rng(2)
    states = violations = sub_violations = 0
    for variant in UNIT_MODELS:
        cost = EditCostModel(variant)
        labels = None if variant == "unlabeled" else ["C", "N"]
        for k in range(50):
            g1 = random_graph(rng, int(rng.integers(1, 5)), 0.5, labels, f"a{k}")
            g2 = random_graph(rng, int(rng.integers(1, 5)), 0.5, labels, f"b{k}")
            session = HungarianHeuristic().prepare(g1, g2, cost)
            for m in _reachable_states(g1.n, g2.n):
                st = _as_state(m)
                fixed = [EditOp.sub(u, v) if v >= 0 else EditOp.delete(u) for u, v in enumerate(m)]
                h_opt = brute_force_ged(g1, g2, cost, fixed) - path_cost(g1, g2, cost, fixed)
                sub = unmatched_subgraphs(g1, g2, st)
                h = session.h(st)
                states += 1
                violations += h > h_opt
                sub_violations += h > brute_force_ged(sub.g1, sub.g2, cost)
    emit(
        2,
        violations == 0 and sub_violations == 0,
        f"{states} states over 100 instances; h > completion cost: {violations}, h > unmatched-subgraph GED: {sub_violations}",
    )


# ------------------------------------------------------------ C4, C5

@pytest.fixture(scope="module")
def trained():
    """Two-stage training on a seeded synthetic corpus (graphs of 4 to 8 nodes)."""
    cost = EditCostModel.uniform_label()
    graphs = generate_synthetic(60, 4, 8, 0.35, 4, seed=1)
    manifest = split_dataset(graphs, seed=1, cost=cost)
    label_manifest(manifest, splits=("train",))
    labeled = manifest.labeled("train")
    samples = regression_samples(labeled)
    idx = np.random.default_rng(0).permutation(len(samples))
    cut = int(0.8 * len(samples))
    train, val = [samples[i] for i in idx[:cut]], [samples[i] for i in idx[cut:]]
    config = TrainConfig(batch_size=32, max_epochs=60, patience=15, finetune_pair_count=60, finetune_epochs=10)
    model = GennModel.init(FeatureConfig.for_graphs(graphs), 0)
    model, _ = train_regression(model, train, val, config)
    model, _ = finetune_with_paths(model, labeled, cost, config, val, train)
    return manifest, model


@pytest.fixture(scope="module")
def search_runs(trained):
    manifest, model = trained
    cost, graphs = manifest.cost, manifest.graphs
    pairs = [(q, t) for q in manifest.indices("test") for t in manifest.indices("train") if 10 <= graphs[q].n + graphs[t].n <= 16]
    rng = np.random.default_rng(5)
    pick = sorted(rng.choice(len(pairs), size=min(120, len(pairs)), replace=False))
    cap = 500_000
    rows = []
    for k in pick:
        g1, g2 = graphs[pairs[k][0]], graphs[pairs[k][1]]
        try:
            plain, capped = astar_solve(g1, g2, cost, ZeroHeuristic(), SearchLimits(max_states=cap)).stats.states_enqueued, False
        except BudgetExceeded as exc:
            plain, capped = exc.stats.states_enqueued, True
        hung = astar_solve(g1, g2, cost, HungarianHeuristic())
        genn = astar_solve(g1, g2, cost, GennHeuristic(model))
        rows.append((plain, capped, hung.stats.states_enqueued, genn.stats.states_enqueued, hung.ged, genn.ged))
    return rows


def test_c4_tree_size_reduction(emit, search_runs):
    plain = np.mean([r[0] for r in search_runs])
    hung = np.mean([r[2] for r in search_runs])
    genn = np.mean([r[3] for r in search_runs])
    capped = sum(r[1] for r in search_runs)
    # a capped plain run contributes its budget, which understates its true tree
    emit(
        4,
        len(search_runs) >= 100 and hung < plain and genn < hung,
        f"{len(search_runs)} instances, mean states_enqueued plain {plain:.0f} ({capped} capped) > hungarian {hung:.0f} > genn {genn:.0f}",
    )


def test_c5_genn_solution_quality(emit, search_runs):
    opt = np.array([r[4] for r in search_runs])
    got = np.array([r[5] for r in search_runs])
    frac = float(np.mean(got == opt))
    gap = float(np.mean((got - opt) / np.maximum(opt, 1.0)))
    emit(5, frac >= 0.5 and gap <= 0.15, f"optimal fraction {frac:.3f} (>= 0.5), mean relative gap {gap:.4f} (<= 0.15)")


# ---------------------------------------------------------------- C6

def test_c6_similarity_round_trip(emit):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(1000):
        a, b = int(rng.integers(1, 60)), int(rng.integers(1, 60))
        x = float(rng.uniform(0, a + b))
        worst = max(worst, abs(similarity_to_h(ged_to_similarity(x, a, b), a, b) - x))
    mid = max(abs(ged_to_similarity((a + b) / 2, a, b) - math.exp(-1)) for a, b in [(1, 1), (3, 8), (50, 7)])
    emit(6, worst <= 1e-12 and mid <= 1e-12, f"max round-trip error {worst:.2e}, max |s - e^-1| at ged=(a+b)/2 {mid:.2e}")


# ---------------------------------------------------------------- C7

def test_c7_gradients_match_finite_differences(emit):
    rng = np.random.default_rng(7)
    labels = ["C", "N", "O"]
    batch = []
    for k in range(20):
        g1 = random_graph(rng, int(rng.integers(2, 6)), 0.5, labels, f"a{k}")
        g2 = random_graph(rng, int(rng.integers(2, 6)), 0.5, labels, f"b{k}")
        m1 = frozenset({int(rng.integers(g1.n))}) if k % 2 else frozenset()
        batch.append(Sample(g1, g2, float(rng.random()), m1, frozenset()))
    model = GennModel.init(FeatureConfig.for_graphs([s.g1 for s in batch] + [s.g2 for s in batch]), 7)
    l2, step = TrainConfig().weight_decay, 1e-5
    _, grads = loss_and_grad(model, batch, l2)
    worst = {}
    for name, theta in model.params.items():
        flat = theta.reshape(-1)
        err = 0.0
        for i in rng.choice(flat.size, size=min(flat.size, 25), replace=False):
            old = flat[i]
            flat[i] = old + step
            up, _ = loss_and_grad(model, batch, l2)
            flat[i] = old - step
            down, _ = loss_and_grad(model, batch, l2)
            flat[i] = old
            num, ana = (up - down) / (2 * step), grads[name].reshape(-1)[i]
            err = max(err, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
        worst[name] = err
    top = max(worst, key=worst.get)
    emit(7, all(e < 1e-4 for e in worst.values()), f"{len(worst)} tensors, max relative error {worst[top]:.2e} ({top})")


# ---------------------------------------------------------------- C8

def _graphs(count, seed, lo, hi, p=0.4):
    rng = np.random.default_rng(seed)
    return [random_graph(rng, int(rng.integers(lo, hi + 1)), p, ["C", "N", "O"], f"g{k}") for k in range(count)]


def test_c8_dynamic_embedding_equivalences(emit):
    model = GennModel.init(FeatureConfig(10, ("C", "N", "O")), 8)
    rng = np.random.default_rng(8)
    dyn = 0.0
    for g in _graphs(20, 80, 4, 9, 0.35):
        cache, removed = build_layer_cache(model, g), set()
        for node in rng.permutation(g.n)[: g.n - 1]:
            cache = exact_dynamic_update(model, cache, cache.nodes.index(int(node)))
            removed.add(int(node))
            sub, _ = induced_subgraph(g, [i for i in range(g.n) if i not in removed])
            _, (_, want) = gcn_forward(model, sub, return_layers=True)
            dyn = max(dyn, max(float(np.abs(a - b).max()) for a, b in zip(cache.layers, want)))
    subset_exact = True
    gs = _graphs(40, 81, 3, 8)
    for g1, g2 in zip(gs[::2], gs[1::2]):
        c1, c2 = build_cache(model, g1), build_cache(model, g2)
        m1 = set(rng.choice(g1.n, size=int(rng.integers(0, g1.n)), replace=False).tolist())
        m2 = set(rng.choice(g2.n, size=int(rng.integers(0, g2.n)), replace=False).tolist())
        x1 = c1.final_embeddings[[i for i in range(g1.n) if i not in m1]]
        x2 = c2.final_embeddings[[j for j in range(g2.n) if j not in m2]]
        subset_exact &= masked_similarity(model, c1, c2, m1, m2) == ntn_score(model, attention_pool(model, x1), attention_pool(model, x2))
    agree = 0.0
    gs = _graphs(200, 82, 2, 8)
    for g1, g2 in zip(gs[::2], gs[1::2]):
        ref = predict_similarity(model, g1, g2, "vanilla")
        agree = max(agree, *(abs(predict_similarity(model, g1, g2, s) - ref) for s in ("genn", "exact_dynamic")))
    emit(
        8,
        dyn <= 1e-6 and subset_exact and agree <= 1e-6,
        f"dynamic vs recompute {dyn:.1e}, masked == row subset: {subset_exact}, strategy disagreement {agree:.1e}",
    )


# ---------------------------------------------------------------- C9

def test_c9_partial_label_identity(emit):
    cost = EditCostModel.uniform_label()
    rng = np.random.default_rng(9)
    labels_total = bad = literal_bad = 0
    counts_ok = True
    for k in range(20):
        g1 = random_graph(rng, int(rng.integers(1, 5)), 0.5, ["C", "N"], f"a{k}")
        g2 = random_graph(rng, int(rng.integers(1, 5)), 0.5, ["C", "N"], f"b{k}")
        res = astar_solve(g1, g2, cost, HungarianHeuristic())
        labels = generate_partial_labels(g1, g2, cost, res.path, res.ged)
        counts_ok &= len(labels) == 2 ** len(res.path.ops) - 1
        for lab in labels:
            labels_total += 1
            bad += exact_completion_cost(g1, g2, cost, lab.ops) != res.ged - lab.g
            sub = unmatched_subgraphs(g1, g2, PartialMapping.from_ops(lab.ops))
            literal_bad += brute_force_ged_unit(sub.g1, sub.g2, cost) != res.ged - lab.g
    # the unmatched subgraphs drop boundary edges to already edited nodes, so
    # their GED only lower-bounds the completion cost; reported, not asserted
    emit(
        9,
        bad == 0 and counts_ok,
        f"{labels_total} labels, ged* - g(p) != exact completion cost: {bad}, counts 2^m-1: {counts_ok}; "
        f"induced-subgraph GED differs on {literal_bad} labels (boundary edges)",
    )


# --------------------------------------------------------------- C10

def _latency(strategy, model, pairs, order):
    """Mean seconds per prediction: start both handles once, then one deletion per prediction."""
    count, total = 0, 0.0
    for (g1, g2), nodes in zip(pairs, order):
        t0 = time.perf_counter()
        h1, h2 = strategy.start(g1), strategy.start(g2)
        total += time.perf_counter() - t0
        for node in nodes:
            t0 = time.perf_counter()
            h1 = strategy.delete(h1, node)
            similarity_from_embeddings(model, strategy.embeddings(h1), strategy.embeddings(h2))
            total += time.perf_counter() - t0
            count += 1
    return total / count, count


def test_c10_strategy_latency_ordering(emit, trained):
    _, model = trained
    graphs = generate_synthetic(300, 8, 8, 0.35, 4, seed=10)
    pairs = list(zip(graphs[::2], graphs[1::2]))
    rng = np.random.default_rng(10)
    order = [[int(v) for v in rng.permutation(8)[:7]] for _ in pairs]
    best = {}
    for _ in range(3):
        for name in ("genn", "vanilla", "exact_dynamic"):
            mean, count = _latency(make_strategy(name, model), model, pairs, order)
            best[name] = min(best.get(name, math.inf), mean)
    us = {k: v * 1e6 for k, v in best.items()}
    emit(
        10,
        count >= 1000 and us["genn"] < us["vanilla"] < us["exact_dynamic"],
        f"{count} predictions per strategy, best of 3 mean latency: genn {us['genn']:.0f}us < vanilla {us['vanilla']:.0f}us < exact_dynamic {us['exact_dynamic']:.0f}us",
    )


# --------------------------------------------------------------- C11

def _pipeline(root):
    d = root / "run"
    steps = [
        ["gen", "--n", "15", "--min-nodes", "3", "--max-nodes", "5", "--edge-prob", "0.5", "--labels", "3", "--seed", "11", "--out", d],
        ["label", "--manifest", d / "manifest.json"],
        ["train", "--manifest", d / "manifest.json", "--out", d / "stage1.json", "--max-epochs", "5", "--batch-size", "16", "--seed", "11"],
        ["train", "--manifest", d / "manifest.json", "--stage", "finetune", "--init", d / "stage1.json", "--out", d / "model.json",
         "--finetune-pair-count", "8", "--finetune-epochs", "2", "--seed", "11"],
        ["eval", "--manifest", d / "manifest.json", "--model", d / "model.json", "--out", d],
    ]
    for argv in steps:
        assert cli.main([str(a) for a in argv]) == 0
    rows = json.loads((d / "eval_report.json").read_text())["rows"]
    for r in rows:
        r.pop("mean_time_s")
    return rows, (d / "model.json").read_text(), (d / "manifest.json").read_text()


def test_c11_end_to_end_determinism(emit, tmp_path, capsys):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    first = _pipeline(tmp_path / "a")
    second = _pipeline(tmp_path / "b")
    capsys.readouterr()
    same = [x == y for x, y in zip(first, second)]
    emit(11, all(same), f"metrics identical: {same[0]}, checkpoint identical: {same[1]}, labels identical: {same[2]} ({len(first[0])} methods)")


if __name__ == "__main__":
    import sys

    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    print("\n".join(RESULTS[k] for k in sorted(RESULTS)))
    sys.exit(code)
