# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: transportation solver and average-linkage merges.

Twin of ``_pykern``; pivot order, tie breaks, and the order of floating
point operations are kept identical so both backends agree bitwise on the
bases they visit and to the last few ulps on the objective.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()


def transport_solve(cost, supply, demand):
    """Exact optimum of the balanced transportation problem.

    min sum(T * cost) over T >= 0 with row sums ``supply`` and column sums
    ``demand``.  Solved with the u-v (network simplex) method; Bland's rule
    (first negative reduced cost in row-major order) prevents cycling.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] c_arr = \
        np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t m = c_arr.shape[0]
    cdef Py_ssize_t n = c_arr.shape[1]
    if m == 0 or n == 0:
        return 0.0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a_arr = \
        np.array(supply, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b_arr = \
        np.array(demand, dtype=np.float64)
    if m == 1 and n == 1:
        return float(a_arr[0] * c_arr[0, 0])

    cdef double[:, ::1] C = c_arr
    cdef double[::1] ra = a_arr
    cdef double[::1] rb = b_arr

    cdef Py_ssize_t nb = m + n - 1
    cdef Py_ssize_t nn = m + n
    cdef cnp.ndarray[cnp.intp_t, ndim=1] brow_a = np.empty(nb, dtype=np.intp)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] bcol_a = np.empty(nb, dtype=np.intp)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bx_a = np.empty(nb, dtype=np.float64)
    cdef Py_ssize_t[::1] brow = brow_a
    cdef Py_ssize_t[::1] bcol = bcol_a
    cdef double[::1] bx = bx_a

    # cell -> basis slot, -1 when nonbasic; gives the row-major objective sum.
    cdef cnp.ndarray[cnp.intp_t, ndim=1] grid_a = np.full(m * n, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] grid = grid_a

    cdef Py_ssize_t i = 0, j = 0, s, r, c, node, nxt
    cdef double q

    # Northwest-corner start: m+n-1 staircase cells, always a spanning tree.
    for s in range(nb):
        q = ra[i] if ra[i] <= rb[j] else rb[j]
        brow[s] = i
        bcol[s] = j
        bx[s] = q
        grid[i * n + j] = s
        ra[i] -= q
        rb[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if (ra[i] <= rb[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1

    cdef cnp.ndarray[cnp.float64_t, ndim=1] u_a = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v_a = np.empty(n, dtype=np.float64)
    cdef double[::1] u = u_a
    cdef double[::1] v = v_a

    cdef cnp.ndarray[cnp.intp_t, ndim=1] scratch = np.empty(6 * nn + 2 * nb, dtype=np.intp)
    cdef Py_ssize_t[::1] row_start = scratch[: m + 1]
    cdef Py_ssize_t[::1] col_start = scratch[m + 1 : nn + 2]
    cdef Py_ssize_t[::1] row_slots = scratch[nn + 2 : nn + 2 + nb]
    cdef Py_ssize_t[::1] col_slots = scratch[nn + 2 + nb : nn + 2 + 2 * nb]
    cdef Py_ssize_t[::1] stack = scratch[nn + 2 + 2 * nb : 2 * nn + 2 + 2 * nb]
    cdef Py_ssize_t[::1] parent_edge = scratch[2 * nn + 2 + 2 * nb : 3 * nn + 2 + 2 * nb]
    cdef Py_ssize_t[::1] parent_node = scratch[3 * nn + 2 + 2 * nb : 4 * nn + 2 + 2 * nb]
    cdef Py_ssize_t[::1] fill = scratch[4 * nn + 2 + 2 * nb : 5 * nn + 2 + 2 * nb]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] seen_a = np.empty(nn, dtype=np.uint8)
    cdef cnp.uint8_t[::1] seen = seen_a

    cdef double amax = 0.0
    for r in range(m):
        for c in range(n):
            if fabs(C[r, c]) > amax:
                amax = fabs(C[r, c])
    cdef double tol = 1e-10 * (1.0 + amax)
    cdef Py_ssize_t max_iter = 200 * (m + n) + 1000

    cdef Py_ssize_t it, enter, ei, ej, top, target, leave, plen, k
    cdef double ur, theta, x, total

    for it in range(max_iter):
        # Adjacency by counting sort: slots listed per row/col in slot order.
        for r in range(m + 1):
            row_start[r] = 0
        for c in range(n + 1):
            col_start[c] = 0
        for s in range(nb):
            row_start[brow[s] + 1] += 1
            col_start[bcol[s] + 1] += 1
        for r in range(m):
            row_start[r + 1] += row_start[r]
        for c in range(n):
            col_start[c + 1] += col_start[c]
        for r in range(m):
            fill[r] = row_start[r]
        for c in range(n):
            fill[m + c] = col_start[c]
        for s in range(nb):
            row_slots[fill[brow[s]]] = s
            fill[brow[s]] += 1
            col_slots[fill[m + bcol[s]]] = s
            fill[m + bcol[s]] += 1

        # Duals from the basis tree (u[0] = 0), propagated by DFS.
        for node in range(nn):
            seen[node] = 0
        u[0] = 0.0
        seen[0] = 1
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if node < m:
                for k in range(row_start[node], row_start[node + 1]):
                    s = row_slots[k]
                    c = bcol[s]
                    if not seen[m + c]:
                        v[c] = C[node, c] - u[node]
                        seen[m + c] = 1
                        stack[top] = m + c
                        top += 1
            else:
                c = node - m
                for k in range(col_start[c], col_start[c + 1]):
                    s = col_slots[k]
                    r = brow[s]
                    if not seen[r]:
                        u[r] = C[r, c] - v[c]
                        seen[r] = 1
                        stack[top] = r
                        top += 1

        # Bland: first cell (row-major) with negative reduced cost enters.
        enter = -1
        for r in range(m):
            ur = u[r]
            for c in range(n):
                if C[r, c] - ur - v[c] < -tol:
                    enter = r * n + c
                    break
            if enter >= 0:
                break
        if enter < 0:
            total = 0.0
            for r in range(m):
                for c in range(n):
                    s = grid[r * n + c]
                    if s >= 0:
                        total += bx[s] * C[r, c]
            return float(total)
        ei = enter // n
        ej = enter - ei * n

        # Unique tree path from row ei to col ej; entering edge closes a cycle.
        for node in range(nn):
            seen[node] = 0
            parent_edge[node] = -1
            parent_node[node] = -1
        seen[ei] = 1
        stack[0] = ei
        top = 1
        target = m + ej
        while top > 0:
            top -= 1
            node = stack[top]
            if node == target:
                break
            if node < m:
                for k in range(row_start[node], row_start[node + 1]):
                    s = row_slots[k]
                    nxt = m + bcol[s]
                    if not seen[nxt]:
                        seen[nxt] = 1
                        parent_edge[nxt] = s
                        parent_node[nxt] = node
                        stack[top] = nxt
                        top += 1
            else:
                for k in range(col_start[node - m], col_start[node - m + 1]):
                    s = col_slots[k]
                    nxt = brow[s]
                    if not seen[nxt]:
                        seen[nxt] = 1
                        parent_edge[nxt] = s
                        parent_node[nxt] = node
                        stack[top] = nxt
                        top += 1

        # Walking the cycle from the entering edge, signs alternate starting
        # at +; the first path edge is incident to col ej, so it gets -theta.
        theta = INFINITY
        leave = -1
        node = target
        plen = 0
        while node != ei:
            s = parent_edge[node]
            if plen % 2 == 0:
                x = bx[s]
                if x < theta:
                    theta = x
                    leave = s
                elif x == theta and (
                    brow[s] < brow[leave]
                    or (brow[s] == brow[leave] and bcol[s] < bcol[leave])
                ):
                    leave = s
            node = parent_node[node]
            plen += 1

        node = target
        plen = 0
        while node != ei:
            s = parent_edge[node]
            if plen % 2 == 0:
                bx[s] -= theta
                if bx[s] < 0.0:
                    bx[s] = 0.0
            else:
                bx[s] += theta
            node = parent_node[node]
            plen += 1

        grid[brow[leave] * n + bcol[leave]] = -1
        grid[enter] = leave
        brow[leave] = ei
        bcol[leave] = ej
        bx[leave] = theta

    raise RuntimeError("transport solver failed to converge")


def hac_merges(dm):
    """Full average-linkage (UPGMA) merge sequence over a distance matrix.

    Cluster ids: 0..n-1 for the input items, n+t for the cluster created by
    merge t.  Each step merges the active pair with minimal average linkage,
    ties broken by lowest (id_a, id_b).  Returns (ids_a, ids_b, heights).
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] d_arr = \
        np.array(dm, dtype=np.float64, order="C")
    cdef Py_ssize_t n = d_arr.shape[0]
    cdef Py_ssize_t nm = n - 1 if n > 0 else 0
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_a = np.empty(nm, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_b = np.empty(nm, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_h = np.empty(nm, dtype=np.float64)
    if nm == 0:
        return out_a, out_b, out_h

    cdef double[:, ::1] d = d_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ids_a = np.arange(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sz_a = np.ones(n, dtype=np.float64)
    cdef cnp.int64_t[::1] ids = ids_a
    cdef double[::1] sizes = sz_a

    cdef Py_ssize_t t, p, q, bp, bq, k
    cdef double h, sa, sb, ssum
    cdef cnp.int64_t ia, ib, ba, bb

    for p in range(n):
        d[p, p] = INFINITY

    for t in range(nm):
        h = INFINITY
        for p in range(n):
            for q in range(n):
                if d[p, q] < h:
                    h = d[p, q]
        ba = -1
        bb = -1
        bp = -1
        bq = -1
        for p in range(n):
            for q in range(p + 1, n):
                if d[p, q] == h:
                    ia = ids[p]
                    ib = ids[q]
                    if ia > ib:
                        ia, ib = ib, ia
                    if bp < 0 or ia < ba or (ia == ba and ib < bb):
                        ba = ia
                        bb = ib
                        bp = p
                        bq = q
        out_a[t] = ba
        out_b[t] = bb
        out_h[t] = h

        # Lance-Williams update for unweighted average linkage; slot bp takes
        # the merged cluster, slot bq is retired (rows/cols set to inf).
        sa = sizes[bp]
        sb = sizes[bq]
        ssum = sa + sb
        for k in range(n):
            d[bp, k] = (sa * d[bp, k] + sb * d[bq, k]) / ssum
        for k in range(n):
            d[k, bp] = d[bp, k]
        d[bp, bp] = INFINITY
        for k in range(n):
            d[bq, k] = INFINITY
            d[k, bq] = INFINITY
        sizes[bp] = ssum
        ids[bp] = n + t

    return out_a, out_b, out_h
