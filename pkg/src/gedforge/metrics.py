"""Ranking and regression metrics over per-query similarity vectors."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata


def _queries(x) -> list:
    """Accept one flat vector or a list of per-query vectors."""
    if len(x) and np.ndim(x[0]) == 0:
        return [np.asarray(x, dtype=float)]
    return [np.asarray(q, dtype=float) for q in x]


def metric_mse(preds, labels) -> float:
    p = np.concatenate(_queries(preds))
    t = np.concatenate(_queries(labels))
    if p.shape != t.shape:
        raise ValueError("preds and labels differ in shape")
    return float(np.mean((p - t) ** 2))


def spearman(pred: np.ndarray, label: np.ndarray) -> float:
    """Spearman's rho with average ranks for ties; NaN when either side is constant."""
    rp = rankdata(pred)
    rl = rankdata(label)
    rp = rp - rp.mean()
    rl = rl - rl.mean()
    den = math.sqrt(float(rp @ rp) * float(rl @ rl))
    return float(rp @ rl / den) if den > 0 else float("nan")


def metric_spearman(preds, labels) -> float:
    """Per-query Spearman's rho, averaged over the queries where it is defined."""
    vals = [spearman(p, t) for p, t in zip(_queries(preds), _queries(labels))]
    vals = [v for v in vals if not math.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


def _top_k(scores: np.ndarray, k: int, ids: Sequence) -> set:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], ids[i]))
    return set(order[:k])


def metric_p_at_k(preds, labels, k: int = 10, ids: Optional[Sequence] = None) -> float:
    """Mean overlap of the predicted and true top-``k`` most similar corpus graphs.

    Ties are broken by corpus graph id (position when ``ids`` is omitted).
    """
    scores = []
    for p, t in zip(_queries(preds), _queries(labels)):
        if k > len(t):
            raise ValueError(f"k={k} exceeds corpus size {len(t)}")
        key = list(ids) if ids is not None else list(range(len(t)))
        scores.append(len(_top_k(p, k, key) & _top_k(t, k, key)) / k)
    return float(np.mean(scores))
