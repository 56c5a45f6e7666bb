"""Square linear assignment solvers.

Two independent algorithms with one contract: Kuhn-Munkres with dual
potentials (``lap_hungarian``) and Jonker-Volgenant shortest augmenting
paths with column reduction and reduction transfer (``lap_jv``). Entries
may be ``inf``; infinite entries are replaced by a sentinel larger than any
finite perfect assignment, and an instance is infeasible iff the optimum
still uses a sentinel.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import InfeasibleError

INF = math.inf


class Assignment(NamedTuple):
    perm: tuple
    total_cost: float


def _prepare(m) -> tuple:
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {a.shape}")
    if np.isnan(a).any():
        raise ValueError("cost matrix contains NaN")
    if (a < 0).any():
        raise ValueError("cost matrix entries must be nonnegative")
    finite = np.isfinite(a)
    n = a.shape[0]
    if n and (not finite.any(axis=1).all() or not finite.any(axis=0).all()):
        raise InfeasibleError("a row or column of the cost matrix has no finite entry")
    big = float(a[finite].max() * n + 1.0) if n else 1.0
    work = np.where(finite, a, big)
    return a, work, n


def _finish(a: np.ndarray, perm: list) -> Assignment:
    total = float(sum(a[i, j] for i, j in enumerate(perm)))
    if math.isinf(total):
        raise InfeasibleError("no perfect assignment with finite cost")
    return Assignment(tuple(int(j) for j in perm), total)


def lap_hungarian(m) -> Assignment:
    """Minimum-cost perfect assignment via the O(n^3) Hungarian method."""
    a, work, n = _prepare(m)
    if n == 0:
        return Assignment((), 0.0)
    c = np.zeros((n + 1, n + 1))
    c[1:, 1:] = work
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row matched to column j (1-based, 0 = none)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = c[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            masked = np.where(free, minv, INF)
            j1 = int(np.argmin(masked))  # first minimum: lowest column wins ties
            delta = masked[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    perm = [0] * n
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return _finish(a, perm)


def lap_jv(m) -> Assignment:
    """Minimum-cost perfect assignment via Jonker-Volgenant (1987)."""
    a, work, n = _prepare(m)
    if n == 0:
        return Assignment((), 0.0)
    if n == 1:
        return _finish(a, [0])
    c = work.tolist()
    rowsol = [-1] * n
    colsol = [-1] * n
    v = [0.0] * n
    matches = [0] * n

    # column reduction (forward scan so ties favour the lowest column)
    for j in range(n):
        imin = 0
        cmin = c[0][j]
        for i in range(1, n):
            if c[i][j] < cmin:
                cmin = c[i][j]
                imin = i
        v[j] = cmin
        matches[imin] += 1
        if matches[imin] == 1:
            rowsol[imin] = j
            colsol[j] = imin
        elif v[j] < v[rowsol[imin]]:
            j1 = rowsol[imin]
            rowsol[imin] = j
            colsol[j] = imin
            colsol[j1] = -1
        else:
            colsol[j] = -1

    # reduction transfer
    free = []
    for i in range(n):
        if matches[i] == 0:
            free.append(i)
        elif matches[i] == 1:
            j1 = rowsol[i]
            row = c[i]
            vmin = min(row[j] - v[j] for j in range(n) if j != j1)
            v[j1] -= vmin

    # augmenting row reduction, two passes
    for _ in range(2):
        k = 0
        prv = free
        free = []
        queue = list(prv)
        while k < len(queue):
            i = queue[k]
            k += 1
            row = c[i]
            umin = row[0] - v[0]
            j1 = 0
            j2 = 0
            usubmin = INF
            for j in range(1, n):
                h = row[j] - v[j]
                if h < usubmin:
                    if h >= umin:
                        usubmin = h
                        j2 = j
                    else:
                        usubmin = umin
                        umin = h
                        j2 = j1
                        j1 = j
            i0 = colsol[j1]
            if umin < usubmin:
                v[j1] -= usubmin - umin
            elif i0 > -1:
                j1 = j2
                i0 = colsol[j2]
            rowsol[i] = j1
            colsol[j1] = i
            if i0 > -1:
                if umin < usubmin:
                    k -= 1
                    queue[k] = i0
                else:
                    free.append(i0)

    # augmentation by shortest paths
    d = [0.0] * n
    pred = [0] * n
    for freerow in free:
        row = c[freerow]
        for j in range(n):
            d[j] = row[j] - v[j]
            pred[j] = freerow
        collist = list(range(n))
        low = up = 0
        last = 0
        dmin = 0.0
        endofpath = -1
        found = False
        while not found:
            if up == low:
                last = low - 1
                dmin = d[collist[up]]
                up += 1
                for k in range(up, n):
                    j = collist[k]
                    h = d[j]
                    if h <= dmin:
                        if h < dmin:
                            up = low
                            dmin = h
                        collist[k] = collist[up]
                        collist[up] = j
                        up += 1
                for k in range(low, up):
                    if colsol[collist[k]] < 0:
                        endofpath = collist[k]
                        found = True
                        break
            if not found:
                j1 = collist[low]
                low += 1
                i = colsol[j1]
                ri = c[i]
                h = ri[j1] - v[j1] - dmin
                for k in range(up, n):
                    j = collist[k]
                    v2 = ri[j] - v[j] - h
                    if v2 < d[j]:
                        pred[j] = i
                        if v2 == dmin:
                            if colsol[j] < 0:
                                endofpath = j
                                found = True
                                break
                            collist[k] = collist[up]
                            collist[up] = j
                            up += 1
                        d[j] = v2
        for k in range(last + 1):
            j1 = collist[k]
            v[j1] += d[j1] - dmin
        while True:
            i = pred[endofpath]
            colsol[endofpath] = i
            j1 = endofpath
            endofpath = rowsol[i]
            rowsol[i] = j1
            if i == freerow:
                break
    return _finish(a, rowsol)


SOLVERS = {"hungarian": lap_hungarian, "jv": lap_jv}


def solve_lap(m, method: str = "jv") -> Assignment:
    try:
        solver = SOLVERS[method]
    except KeyError:
        raise ValueError(f"unknown LAP method {method!r}") from None
    return solver(m)
