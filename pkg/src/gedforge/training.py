"""Two-stage supervised training of the similarity network.

Stage 1 regresses graph-pair similarities. Stage 2 finetunes on partial
edit paths of exactly solved pairs: for any sub-path ``p`` of an optimal
path, the optimal remaining cost is ``GED - g(p)``, so one exact solve
yields many supervised search states.

Gradients are derived by hand (reverse mode) and checked against central
finite differences in the test suite.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import BudgetExceeded, InfeasibleError
from .genn import ATTENTION_SCALE, GennModel, ged_to_similarity, init_features, normalize_adjacency, weighted_adjacency
from .graph import EditCostModel, EditPath, Graph, PartialMapping, path_cost
from .heuristics import HungarianHeuristic
from .search import SearchLimits, astar_solve

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    weight_decay: float = 5e-5
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 200
    patience: int = 10
    finetune_pair_count: int = 200
    finetune_epochs: int = 10
    finetune_labels_per_pair: int = 8
    finetune_learning_rate: Optional[float] = None
    finetune_replay: bool = True
    subset_max_m: int = 12
    solver_max_states: int = 2_000_000
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "max_epochs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


class Sample(NamedTuple):
    """One supervised item: similarity ``target`` of the unmasked parts of ``g1`` and ``g2``."""

    g1: Graph
    g2: Graph
    target: float
    masked1: frozenset = frozenset()
    masked2: frozenset = frozenset()


# ------------------------------------------------------------ forward/backward

def _embed(model: GennModel, g: Graph, masked) -> tuple:
    p = model.params
    x0 = init_features(g, model.feature_config)
    a = normalize_adjacency(weighted_adjacency(g))
    p0 = a @ x0
    h1 = p0 @ p["conv0"]
    x1 = np.maximum(h1, 0.0)
    p1 = a @ x1
    h2 = p1 @ p["conv1"]
    x2 = np.maximum(h2, 0.0)
    p2 = a @ x2
    x3 = p2 @ p["conv2"]
    keep = [i for i in range(g.n) if i not in masked]
    y = x3[keep]
    mean = y.mean(axis=0)
    key = np.tanh(mean @ p["attention"])
    c = expit(ATTENTION_SCALE * (y @ key))
    emb = c @ y
    tape = (a, p0, h1, p1, h2, p2, keep, y, mean, key, c, g.n)
    return emb, tape


def _embed_backward(model: GennModel, tape, d_emb, grads) -> None:
    p = model.params
    a, p0, h1, p1, h2, p2, keep, y, mean, key, c, n = tape
    dy = np.outer(c, d_emb)
    dc = y @ d_emb
    dz = dc * c * (1.0 - c)
    dy += ATTENTION_SCALE * np.outer(dz, key)
    dkey = ATTENTION_SCALE * (y.T @ dz)
    da = dkey * (1.0 - key * key)
    grads["attention"] += np.outer(mean, da)
    dy += (p["attention"] @ da) / y.shape[0]
    dx3 = np.zeros((n, y.shape[1]))
    dx3[keep] = dy
    grads["conv2"] += p2.T @ dx3
    dx2 = a @ (dx3 @ p["conv2"].T)  # a_hat is symmetric
    dh2 = dx2 * (h2 > 0)
    grads["conv1"] += p1.T @ dh2
    dx1 = a @ (dh2 @ p["conv1"].T)
    dh1 = dx1 * (h1 > 0)
    grads["conv0"] += p0.T @ dh1


def forward(model: GennModel, sample: Sample) -> float:
    e1, _ = _embed(model, sample.g1, sample.masked1)
    e2, _ = _embed(model, sample.g2, sample.masked2)
    return _score(model, e1, e2)[0]


def _score(model, e1, e2):
    p = model.params
    cat = np.concatenate([e1, e2])
    bil = np.einsum("a,abt,b->t", e1, p["ntn_bilinear"], e2)
    q = bil + p["ntn_linear"] @ cat + p["ntn_bias"]
    s = float(expit(p["out_w"] @ q + p["out_b"][0]))
    return s, (cat, q)


def backward(model: GennModel, sample: Sample, weight: float = 1.0, grads: Optional[dict] = None) -> tuple:
    """Squared error ``weight * (s - target)^2`` and its gradient for every parameter.

    Gradients are accumulated into ``grads`` when given.
    """
    p = model.params
    if grads is None:
        grads = model.zeros_like()
    e1, t1 = _embed(model, sample.g1, sample.masked1)
    e2, t2 = _embed(model, sample.g2, sample.masked2)
    s, (cat, q) = _score(model, e1, e2)
    err = s - sample.target
    loss = weight * err * err
    ds = 2.0 * weight * err
    do = ds * s * (1.0 - s)
    grads["out_w"] += do * q
    grads["out_b"] += do
    dq = do * p["out_w"]
    grads["ntn_bias"] += dq
    grads["ntn_linear"] += np.outer(dq, cat)
    dcat = p["ntn_linear"].T @ dq
    F = e1.shape[0]
    grads["ntn_bilinear"] += np.einsum("a,b,t->abt", e1, e2, dq)
    wq = p["ntn_bilinear"] @ dq  # (F, F)
    de1 = dcat[:F] + wq @ e2
    de2 = dcat[F:] + wq.T @ e1
    _embed_backward(model, t1, de1, grads)
    _embed_backward(model, t2, de2, grads)
    return loss, grads


def mse_loss(s_pred, s_gt) -> float:
    s_pred = np.asarray(s_pred, dtype=float)
    s_gt = np.asarray(s_gt, dtype=float)
    return float(np.mean((s_pred - s_gt) ** 2))


def mse_grad(s_pred, s_gt) -> np.ndarray:
    s_pred = np.asarray(s_pred, dtype=float)
    return 2.0 * (s_pred - np.asarray(s_gt, dtype=float)) / s_pred.size


def loss_and_grad(model: GennModel, batch: Sequence[Sample], l2: float = 0.0) -> tuple:
    """Batch MSE plus ``l2 * sum(theta^2)`` and the exact gradient."""
    grads = model.zeros_like()
    loss = 0.0
    w = 1.0 / len(batch)
    for sample in batch:
        li, _ = backward(model, sample, w, grads)
        loss += li
    if l2:
        for k, v in model.params.items():
            loss += l2 * float(np.sum(v * v))
            grads[k] += 2.0 * l2 * v
    return loss, grads


# -------------------------------------------------------------------- Adam

@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig) -> None:
    """In-place Adam update; weight decay enters as ``weight_decay * theta`` added to the gradient."""
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, theta in params.items():
        g = grads[k]
        if config.weight_decay:
            g = g + config.weight_decay * theta
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(theta)
            state.v[k] = np.zeros_like(theta)
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.eps)


# ----------------------------------------------------------------- stage 1

def evaluate_mse(model: GennModel, samples: Sequence[Sample]) -> float:
    if not samples:
        return float("nan")
    return mse_loss([forward(model, s) for s in samples], [s.target for s in samples])


def _run_epochs(model, train, val, config, rng, max_epochs, patience, curve, stage):
    state = AdamState()
    best = model.copy()
    best_val = evaluate_mse(model, val) if val else math.inf
    stale = 0
    for epoch in range(max_epochs):
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            loss, grads = loss_and_grad(model, batch)
            adam_step(model.params, grads, state, config)
            total += loss * len(batch)
        train_mse = total / len(train)
        val_mse = evaluate_mse(model, val) if val else float("nan")
        curve.append({"stage": stage, "epoch": epoch, "train_mse": train_mse, "val_mse": val_mse})
        log.info("%s epoch %d train %.5f val %.5f", stage, epoch, train_mse, val_mse)
        if not val:
            best = model.copy()
            continue
        if val_mse < best_val:
            best_val = val_mse
            best = model.copy()
            stale = 0
        else:
            stale += 1
            if patience and stale >= patience:
                break
    return best


def train_regression(model: GennModel, train: Sequence[Sample], val: Sequence[Sample], config: TrainConfig) -> tuple:
    """Minibatch Adam on similarity labels; returns ``(best_on_val_model, curve)``.

    ``curve`` rows are dicts with ``stage, epoch, train_mse, val_mse``; the
    first row (epoch -1) is the loss before any update.
    """
    if not train:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    model = model.copy()
    curve = [{"stage": "regression", "epoch": -1, "train_mse": evaluate_mse(model, train), "val_mse": evaluate_mse(model, val)}]
    best = _run_epochs(model, list(train), list(val), config, rng, config.max_epochs, config.patience, curve, "regression")
    return best, curve


# ----------------------------------------------------------------- stage 2

class PartialPathLabel(NamedTuple):
    pair_id: str
    ops: tuple
    masked1: frozenset
    masked2: frozenset
    g: float
    h_opt: float
    s_opt: float
    n1_rest: int
    n2_rest: int


class InconsistentPathError(ValueError):
    """The edit path handed in as optimal does not cost the stated GED."""


def _label(pair_id, g1, g2, cost, ops, ged):
    m = PartialMapping.from_ops(ops)
    gp = path_cost(g1, g2, cost, ops)
    h = ged - gp
    if abs(h) < 1e-12:
        h = 0.0
    n1r = g1.n - len(m.src)
    n2r = g2.n - len(m.targets)
    s = math.exp(-2.0 * h / (n1r + n2r)) if n1r + n2r else 1.0
    return PartialPathLabel(pair_id, tuple(ops), frozenset(m.src), m.targets, gp, h, s, n1r, n2r)


def generate_partial_labels(
    g1: Graph, g2: Graph, cost: EditCostModel, path: EditPath, ged: float, subsets: bool = True, subset_max_m: int = 12
) -> list:
    """Supervised states from one optimal path.

    Always the ``m`` prefixes of the path; with ``subsets`` and ``m <=
    subset_max_m`` every nonempty subset of its editions instead (``2^m - 1``
    labels, prefixes included).
    """
    ops = tuple(path.ops)
    total = path_cost(g1, g2, cost, ops)
    if not math.isclose(total, ged, rel_tol=1e-12, abs_tol=1e-9):
        raise InconsistentPathError(f"path costs {total} but ged is {ged}")
    m = len(ops)
    pair_id = f"{g1.id}|{g2.id}"
    if subsets and m <= subset_max_m:
        chosen = (tuple(op for bit, op in enumerate(ops) if mask >> bit & 1) for mask in range(1, 1 << m))
    else:
        chosen = (ops[:k] for k in range(1, m + 1))
    return [_label(pair_id, g1, g2, cost, sub, ged) for sub in chosen]


def exact_completion_cost(g1: Graph, g2: Graph, cost: EditCostModel, ops, limits: Optional[SearchLimits] = None) -> float:
    """Optimal cost of the remaining editions given the forced partial path ``ops``."""
    prefix = PartialMapping.from_ops(ops)
    res = astar_solve(g1, g2, cost, HungarianHeuristic(), limits, prefix=prefix)
    return res.ged - path_cost(g1, g2, cost, ops)


def label_samples(g1: Graph, g2: Graph, labels: Sequence[PartialPathLabel]) -> list:
    """Training samples for the labels the network can score (both sides nonempty)."""
    return [Sample(g1, g2, lab.s_opt, lab.masked1, lab.masked2) for lab in labels if lab.n1_rest and lab.n2_rest]


def finetune_with_paths(
    model: GennModel,
    pairs: Sequence[tuple],
    cost: EditCostModel,
    config: TrainConfig,
    val: Sequence[Sample] = (),
    replay: Sequence[Sample] = (),
) -> tuple:
    """Stage 2: finetune on optimal partial edit paths.

    ``pairs`` holds ``(g1, g2)`` or ``(g1, g2, ged)`` tuples; up to
    ``finetune_pair_count`` are sampled and solved exactly (pairs whose
    solve exceeds the budget are skipped). With ``config.finetune_replay``
    the stage-1 samples in ``replay`` are mixed into every epoch so that
    whole-graph regression is not forgotten. When ``val`` is given the
    finetuned epoch with the lowest validation mse is returned, otherwise
    the last one. Returns ``(model, curve)``.
    """
    rng = np.random.default_rng(config.seed + 1)
    idx = rng.permutation(len(pairs))[: config.finetune_pair_count]
    pools = []
    limits = SearchLimits(max_states=config.solver_max_states)
    for i in idx:
        g1, g2 = pairs[i][0], pairs[i][1]
        try:
            res = astar_solve(g1, g2, cost, HungarianHeuristic(), limits)
        except (BudgetExceeded, InfeasibleError) as exc:
            log.warning("skipping finetune pair %s|%s: %s", g1.id, g2.id, exc)
            continue
        labels = generate_partial_labels(g1, g2, cost, res.path, res.ged, True, config.subset_max_m)
        samples = label_samples(g1, g2, labels)
        if samples:
            pools.append(samples)
    model = model.copy()
    curve = []
    if not pools:
        return model, curve
    ft_config = replace(config, learning_rate=config.finetune_learning_rate or config.learning_rate)
    state = AdamState()
    best, best_val = None, math.inf
    for epoch in range(config.finetune_epochs):
        items = []
        for pool in pools:
            k = min(config.finetune_labels_per_pair, len(pool))
            items.extend(pool[j] for j in rng.choice(len(pool), size=k, replace=False))
        if config.finetune_replay:
            items.extend(replay)
        order = rng.permutation(len(items))
        total = 0.0
        for start in range(0, len(order), ft_config.batch_size):
            batch = [items[j] for j in order[start : start + ft_config.batch_size]]
            loss, grads = loss_and_grad(model, batch)
            adam_step(model.params, grads, state, ft_config)
            total += loss * len(batch)
        val_mse = evaluate_mse(model, val) if val else float("nan")
        curve.append({"stage": "finetune", "epoch": epoch, "train_mse": total / len(items), "val_mse": val_mse})
        log.info("finetune epoch %d train %.5f val %.5f", epoch, total / len(items), val_mse)
        if not val or val_mse < best_val:
            best, best_val = model.copy(), val_mse
    return best, curve


def regression_samples(labeled_pairs) -> list:
    """``(g1, g2, ged)`` triples to similarity samples."""
    return [Sample(g1, g2, ged_to_similarity(ged, g1.n, g2.n)) for g1, g2, ged in labeled_pairs if ged is not None]
