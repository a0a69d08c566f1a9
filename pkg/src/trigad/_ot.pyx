# cython: language_level=3
"""Compiled exact transportation-simplex solver.

Hot kernel behind wasserstein(); trigad._ot_py is the pure-Python twin with
identical pivoting rules (northwest-corner start, Bland's entering rule,
smallest-index leaving rule). Keep the two in lockstep.
"""

import numpy as np

BACKEND = "compiled"

cdef double NEG_TOL = 1e-10
cdef int MAX_PIVOTS = 100000


def solve(cost_in, a_in, b_in):
    """Exact optimum of min <cost,x> s.t. x >= 0, row sums a, column sums b.

    Assumes sum(a) == sum(b) and strictly positive marginals (the caller
    filters zero-mass entries).
    """
    cdef double[:, ::1] cost = np.ascontiguousarray(cost_in, dtype=np.float64)
    cdef double[::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t m = cost.shape[0]
    cdef Py_ssize_t n = cost.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total

    if m == 1:
        total = 0.0
        for j in range(n):
            total += cost[0, j] * b[j]
        return total
    if n == 1:
        total = 0.0
        for i in range(m):
            total += cost[i, 0] * a[i]
        return total

    flow_arr = np.zeros((m, n), dtype=np.float64)
    basis_arr = np.zeros((m, n), dtype=np.uint8)
    cdef double[:, ::1] flow = flow_arr
    cdef unsigned char[:, ::1] basis = basis_arr
    cdef double[::1] ra = np.array(a, dtype=np.float64, copy=True)
    cdef double[::1] rb = np.array(b, dtype=np.float64, copy=True)
    cdef double[::1] u = np.empty(m, dtype=np.float64)
    cdef double[::1] v = np.empty(n, dtype=np.float64)
    # BFS scratch over the bipartite tree: vertices 0..m-1 rows, m..m+n-1 cols
    cdef long[::1] stack = np.empty(m + n, dtype=np.int64)
    cdef long[::1] prev = np.empty(m + n, dtype=np.int64)
    cdef unsigned char[::1] udone = np.empty(m, dtype=np.uint8)
    cdef unsigned char[::1] vdone = np.empty(n, dtype=np.uint8)
    cdef long[::1] cyc_i = np.empty(m + n + 1, dtype=np.int64)
    cdef long[::1] cyc_j = np.empty(m + n + 1, dtype=np.int64)
    cdef long[::1] cyc_s = np.empty(m + n + 1, dtype=np.int64)

    # --- northwest-corner start: exactly m+n-1 basic cells ---
    cdef double q
    i = 0
    j = 0
    while True:
        q = ra[i] if ra[i] < rb[j] else rb[j]
        flow[i, j] = q
        basis[i, j] = 1
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

    cdef int pivot, top, found
    cdef Py_ssize_t ei, ej, x, y, ncells, li, lj, ci, cj
    cdef double red, theta
    cdef long sign

    for pivot in range(MAX_PIVOTS):
        # duals: u_i + v_j = c_ij over the basis tree, anchored u[0] = 0
        for i in range(m):
            udone[i] = 0
        for j in range(n):
            vdone[j] = 0
        u[0] = 0.0
        udone[0] = 1
        top = 0
        stack[top] = 0
        while top >= 0:
            x = stack[top]
            top -= 1
            if x < m:
                for j in range(n):
                    if basis[x, j] and not vdone[j]:
                        v[j] = cost[x, j] - u[x]
                        vdone[j] = 1
                        top += 1
                        stack[top] = m + j
            else:
                y = x - m
                for i in range(m):
                    if basis[i, y] and not udone[i]:
                        u[i] = cost[i, y] - v[y]
                        udone[i] = 1
                        top += 1
                        stack[top] = i

        # Bland's entering rule: first cell (row-major) with negative
        # reduced cost
        found = 0
        ei = 0
        ej = 0
        for i in range(m):
            if found:
                break
            for j in range(n):
                if basis[i, j]:
                    continue
                red = cost[i, j] - u[i] - v[j]
                if red < -NEG_TOL:
                    ei = i
                    ej = j
                    found = 1
                    break
        if not found:
            break

        # unique alternating cycle: BFS path row ei -> col ej in the tree
        for k in range(m + n):
            prev[k] = -1
        prev[ei] = ei
        top = 0
        stack[top] = ei
        # plain FIFO not needed: any traversal finds the unique tree path
        while top >= 0:
            x = stack[top]
            top -= 1
            if x == m + ej:
                break
            if x < m:
                for j in range(n):
                    if basis[x, j] and prev[m + j] < 0:
                        prev[m + j] = x
                        top += 1
                        stack[top] = m + j
            else:
                y = x - m
                for i in range(m):
                    if basis[i, y] and prev[i] < 0:
                        prev[i] = x
                        top += 1
                        stack[top] = i

        # walk col ej back to row ei, recording cells; entering cell is +1
        cyc_i[0] = ei
        cyc_j[0] = ej
        cyc_s[0] = 1
        ncells = 1
        x = m + ej
        while x != ei:
            y = prev[x]
            if x < m:  # edge (row x, col y-m)
                cyc_i[ncells] = x
                cyc_j[ncells] = y - m
            else:  # edge (row y, col x-m)
                cyc_i[ncells] = y
                cyc_j[ncells] = x - m
            ncells += 1
            x = y
        # signs alternate around the cycle; the path was walked from the col
        # end, so the cell adjacent to the entering column gets -1 first when
        # counted from the row end. Assign by parity from the entering cell:
        # path cells in row-ei-first order are cells ncells-1, ..., 1.
        sign = -1
        for k in range(ncells - 1, 0, -1):
            cyc_s[k] = sign
            sign = -sign

        # leaving cell: smallest-index minimizer of flow among negatives
        theta = -1.0
        li = -1
        lj = -1
        for k in range(ncells):
            if cyc_s[k] < 0:
                ci = cyc_i[k]
                cj = cyc_j[k]
                if (theta < 0.0 or flow[ci, cj] < theta
                        or (flow[ci, cj] == theta
                            and (ci < li or (ci == li and cj < lj)))):
                    theta = flow[ci, cj]
                    li = ci
                    lj = cj
        for k in range(ncells):
            flow[cyc_i[k], cyc_j[k]] += cyc_s[k] * theta
        basis[ei, ej] = 1
        basis[li, lj] = 0
        flow[li, lj] = 0.0
    else:
        raise RuntimeError("transportation simplex failed to converge")

    total = 0.0
    for i in range(m):
        for j in range(n):
            total += flow[i, j] * cost[i, j]
    return total
