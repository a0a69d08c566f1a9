"""Pure-Python exact transportation-simplex solver.

Fallback twin of the compiled extension trigad._ot; both expose
solve(cost, a, b) -> float with identical pivoting rules (northwest-corner
start, Bland's entering rule, smallest-index leaving rule), so results and
iteration counts match exactly.
"""

from __future__ import annotations

from collections import deque

import numpy as np

BACKEND = "python"

_NEG_TOL = 1e-10
_MAX_PIVOTS = 100000


def solve(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Exact optimum of min <cost,x> s.t. x >= 0, row sums a, column sums b.

    Assumes sum(a) == sum(b) and strictly positive marginals (the caller
    filters zero-mass entries).
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    m, n = cost.shape
    if m == 1:
        return float(cost[0] @ b)
    if n == 1:
        return float(cost[:, 0] @ a)

    flow = np.zeros((m, n))
    basis = np.zeros((m, n), dtype=bool)

    # --- northwest-corner start: exactly m+n-1 basic cells ---
    ra = a.copy()
    rb = b.copy()
    i = j = 0
    while True:
        q = min(ra[i], rb[j])
        flow[i, j] = q
        basis[i, j] = True
        ra[i] -= q
        rb[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif ra[i] == 0.0:  # row exhausted (also covers the degenerate tie)
            i += 1
        else:
            j += 1

    u = np.empty(m)
    v = np.empty(n)
    for _ in range(_MAX_PIVOTS):
        _duals(cost, basis, u, v)
        red = cost - u[:, None] - v[None, :]
        red[basis] = 0.0  # basic cells are 0 by construction; kill float noise
        cand = np.flatnonzero(red.reshape(-1) < -_NEG_TOL)
        if cand.size == 0:
            break
        ei, ej = divmod(int(cand[0]), n)  # Bland: first improving cell

        cycle = _cycle(basis, m, n, ei, ej)
        # theta = min flow on the negative-signed cells; leaving cell is the
        # smallest-index minimizer (anti-cycling)
        theta = np.inf
        leave = None
        for (ci, cj, sign) in cycle:
            if sign < 0 and (flow[ci, cj] < theta
                             or (flow[ci, cj] == theta
                                 and (ci, cj) < leave)):
                theta = flow[ci, cj]
                leave = (ci, cj)
        for (ci, cj, sign) in cycle:
            flow[ci, cj] += sign * theta
        basis[ei, ej] = True
        basis[leave] = False
        flow[leave] = 0.0
    else:
        raise RuntimeError("transportation simplex failed to converge")

    return float((flow * cost).sum())


def _duals(cost, basis, u, v):
    """Solve u_i + v_j = c_ij over the basis spanning tree, anchored u[0]=0."""
    m, n = cost.shape
    u.fill(np.nan)
    v.fill(np.nan)
    u[0] = 0.0
    stack = [(0, True)]
    while stack:
        idx, is_row = stack.pop()
        if is_row:
            for j in np.flatnonzero(basis[idx]):
                if np.isnan(v[j]):
                    v[j] = cost[idx, j] - u[idx]
                    stack.append((int(j), False))
        else:
            for i in np.flatnonzero(basis[:, idx]):
                if np.isnan(u[i]):
                    u[i] = cost[i, idx] - v[idx]
                    stack.append((int(i), True))


def _cycle(basis, m, n, ei, ej):
    """Unique alternating cycle closed by the entering cell (ei, ej).

    Returns [(i, j, sign), ...] starting with the entering cell at +1;
    vertices 0..m-1 are rows, m..m+n-1 are columns.
    """
    start, goal = ei, m + ej
    prev = {start: start}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        if x == goal:
            break
        if x < m:
            nbrs = (m + j for j in np.flatnonzero(basis[x]))
        else:
            nbrs = (int(i) for i in np.flatnonzero(basis[:, x - m]))
        for y in nbrs:
            if y not in prev:
                prev[y] = x
                queue.append(y)
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    path.reverse()  # row ei ... col ej through the tree
    cells = [(ei, ej, 1)]
    sign = -1
    for x, y in zip(path, path[1:]):
        ci, cj = (x, y - m) if x < m else (y, x - m)
        cells.append((ci, cj, sign))
        sign = -sign
    return cells
