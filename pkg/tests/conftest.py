import numpy as np
import pytest

from gedforge.graph import EditCostModel
from oracles import random_graph

LABELS = ["C", "N", "O"]


@pytest.fixture
def uniform():
    return EditCostModel.uniform_label()


@pytest.fixture
def unlabeled():
    return EditCostModel.unlabeled()


def random_pairs(count, seed, max_n=5, min_n=1, labels=LABELS, p=0.5):
    """Seeded random pairs for oracle comparisons."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n1, n2 = rng.integers(min_n, max_n + 1, size=2)
        out.append(
            (
                random_graph(rng, int(n1), p, labels, f"a{k}"),
                random_graph(rng, int(n2), p, labels, f"b{k}"),
            )
        )
    return out
