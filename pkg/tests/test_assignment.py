import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linear_sum_assignment

from gedforge.assignment import lap_hungarian, lap_jv, solve_lap
from gedforge.errors import InfeasibleError
from oracles import brute_force_lap

SOLVERS = [lap_hungarian, lap_jv]


def _check(res, m):
    n = len(m)
    assert sorted(res.perm) == list(range(n))
    assert res.total_cost == pytest.approx(sum(m[i][res.perm[i]] for i in range(n)), abs=1e-12)


@pytest.mark.parametrize("solve", SOLVERS)
def test_identity_favoring(solve):
    m = 1.0 - np.eye(5)
    res = solve(m)
    assert res.perm == tuple(range(5)) and res.total_cost == 0.0


@pytest.mark.parametrize("solve", SOLVERS)
def test_two_by_two(solve):
    res = solve([[4, 1], [2, 8]])
    assert res.perm == (1, 0) and res.total_cost == 3.0


@pytest.mark.parametrize("solve", SOLVERS)
def test_random_six_by_six_exhaustive(solve):
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = rng.integers(0, 20, size=(6, 6)).astype(float)
        res = solve(m)
        _check(res, m)
        assert res.total_cost == brute_force_lap(m)


def test_jv_agrees_with_hungarian_on_1000_matrices():
    rng = np.random.default_rng(1)
    for k in range(1000):
        n = int(rng.integers(1, 12))
        m = rng.random((n, n)) * 10 if k % 2 else rng.integers(0, 4, size=(n, n)).astype(float)
        a, b = lap_hungarian(m), lap_jv(m)
        assert a.total_cost == pytest.approx(b.total_cost, abs=1e-9)
        rows, cols = linear_sum_assignment(m)
        assert a.total_cost == pytest.approx(m[rows, cols].sum(), abs=1e-9)


@pytest.mark.parametrize("solve", SOLVERS)
def test_infinite_entries_avoided(solve):
    m = np.array([[math.inf, 5.0], [1.0, math.inf]])
    res = solve(m)
    assert res.perm == (1, 0) and res.total_cost == 6.0


@pytest.mark.parametrize("solve", SOLVERS)
def test_block_matrix_with_infinite_off_diagonals(solve):
    rng = np.random.default_rng(2)
    for _ in range(50):
        n1, n2 = rng.integers(1, 4, size=2)
        m = np.full((n1 + n2, n1 + n2), math.inf)
        m[:n1, :n2] = rng.integers(0, 3, size=(n1, n2))
        m[np.arange(n1), n2 + np.arange(n1)] = 1.0
        m[n1 + np.arange(n2), np.arange(n2)] = 1.0
        m[n1:, n2:] = 0.0
        assert solve(m).total_cost == brute_force_lap(m)


@pytest.mark.parametrize("solve", SOLVERS)
def test_all_infinite_column_is_infeasible(solve):
    m = np.array([[1.0, math.inf], [2.0, math.inf]])
    with pytest.raises(InfeasibleError):
        solve(m)


@pytest.mark.parametrize("solve", SOLVERS)
def test_no_finite_perfect_matching_is_infeasible(solve):
    m = np.array([[1.0, math.inf, math.inf], [2.0, math.inf, math.inf], [1.0, 1.0, 1.0]])
    with pytest.raises(InfeasibleError):
        solve(m)


@pytest.mark.parametrize("bad", [np.zeros((2, 3)), np.array([[1.0, -1.0], [0.0, 0.0]]), np.array([[math.nan]])])
def test_malformed_matrices_rejected(bad):
    for solve in SOLVERS:
        with pytest.raises(ValueError):
            solve(bad)


def test_empty_matrix():
    assert lap_jv(np.zeros((0, 0))).total_cost == 0.0
    assert lap_hungarian(np.zeros((0, 0))).perm == ()


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_lap(np.eye(2), "auction")


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.just(6)).map(lambda s: (s[0], s[0])), elements=st.floats(0, 100)))
def test_property_matches_scipy(m):
    rows, cols = linear_sum_assignment(m)
    best = m[rows, cols].sum()
    for solve in SOLVERS:
        res = solve(m)
        _check(res, m)
        assert res.total_cost == pytest.approx(best, rel=1e-9, abs=1e-9)
