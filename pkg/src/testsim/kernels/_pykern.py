"""Pure-numpy fallback for the compiled kernels.

Mirrors ``_ckern`` operation for operation so both backends pivot and merge
in the same order; values agree to the last few ulps.
"""

from __future__ import annotations

import numpy as np


def transport_solve(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray) -> float:
    """Exact optimum of the balanced transportation problem.

    min sum(T * cost) over T >= 0 with row sums ``supply`` and column sums
    ``demand``.  Solved with the u-v (network simplex) method; Bland's rule
    (first negative reduced cost in row-major order) prevents cycling.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    m, n = cost.shape
    if m == 0 or n == 0:
        return 0.0
    if m == 1 and n == 1:
        return float(supply[0] * cost[0, 0])

    nb = m + n - 1
    brow = np.empty(nb, dtype=np.intp)
    bcol = np.empty(nb, dtype=np.intp)
    bx = np.empty(nb, dtype=np.float64)

    # Northwest-corner start: m+n-1 staircase cells, always a spanning tree.
    ra = np.array(supply, dtype=np.float64)
    rb = np.array(demand, dtype=np.float64)
    i = j = 0
    for s in range(nb):
        q = ra[i] if ra[i] <= rb[j] else rb[j]
        brow[s] = i
        bcol[s] = j
        bx[s] = q
        ra[i] -= q
        rb[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if (ra[i] <= rb[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1

    u = np.empty(m, dtype=np.float64)
    v = np.empty(n, dtype=np.float64)
    tol = 1e-10 * (1.0 + float(np.abs(cost).max()))
    max_iter = 200 * (m + n) + 1000

    for _ in range(max_iter):
        # Duals from the basis tree (u[0] = 0), propagated by DFS.
        row_cells: list[list[int]] = [[] for _ in range(m)]
        col_cells: list[list[int]] = [[] for _ in range(n)]
        for s in range(nb):
            row_cells[brow[s]].append(s)
            col_cells[bcol[s]].append(s)
        u_set = [False] * m
        v_set = [False] * n
        u[0] = 0.0
        u_set[0] = True
        stack = [0]  # nodes: rows 0..m-1, cols m..m+n-1
        while stack:
            node = stack.pop()
            if node < m:
                for s in row_cells[node]:
                    c = bcol[s]
                    if not v_set[c]:
                        v[c] = cost[node, c] - u[node]
                        v_set[c] = True
                        stack.append(m + c)
            else:
                c = node - m
                for s in col_cells[c]:
                    r = brow[s]
                    if not u_set[r]:
                        u[r] = cost[r, c] - v[c]
                        u_set[r] = True
                        stack.append(r)

        # Bland: first cell (row-major) with negative reduced cost enters.
        enter = -1
        for r in range(m):
            ur = u[r]
            for c in range(n):
                if cost[r, c] - ur - v[c] < -tol:
                    enter = r * n + c
                    break
            if enter >= 0:
                break
        if enter < 0:
            order = np.lexsort((bcol, brow))
            total = 0.0
            for s in order:
                total += bx[s] * cost[brow[s], bcol[s]]
            return float(total)
        ei, ej = divmod(enter, n)

        # Unique tree path from row ei to col ej; entering edge closes a cycle.
        parent_edge = [-1] * (m + n)
        parent_node = [-1] * (m + n)
        seen = [False] * (m + n)
        seen[ei] = True
        stack = [ei]
        target = m + ej
        while stack:
            node = stack.pop()
            if node == target:
                break
            if node < m:
                for s in row_cells[node]:
                    nxt = m + bcol[s]
                    if not seen[nxt]:
                        seen[nxt] = True
                        parent_edge[nxt] = s
                        parent_node[nxt] = node
                        stack.append(nxt)
            else:
                for s in col_cells[node - m]:
                    nxt = brow[s]
                    if not seen[nxt]:
                        seen[nxt] = True
                        parent_edge[nxt] = s
                        parent_node[nxt] = node
                        stack.append(nxt)

        path = []
        node = target
        while node != ei:
            path.append(parent_edge[node])
            node = parent_node[node]
        # Walking the cycle from the entering edge, signs alternate starting
        # at +; path[0] is incident to col ej, so it gets -theta.
        minus = path[0::2]
        plus = path[1::2]

        theta = np.inf
        leave = -1
        for s in minus:
            x = bx[s]
            if x < theta:
                theta = x
                leave = s
            elif x == theta and (brow[s], bcol[s]) < (brow[leave], bcol[leave]):
                leave = s

        for s in plus:
            bx[s] += theta
        for s in minus:
            bx[s] -= theta
            if bx[s] < 0.0:
                bx[s] = 0.0
        brow[leave] = ei
        bcol[leave] = ej
        bx[leave] = theta

    raise RuntimeError("transport solver failed to converge")


def hac_merges(dm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full average-linkage (UPGMA) merge sequence over a distance matrix.

    Cluster ids: 0..n-1 for the input items, n+t for the cluster created by
    merge t.  Each step merges the active pair with minimal average linkage,
    ties broken by lowest (id_a, id_b).  Returns (ids_a, ids_b, heights).
    """
    n = dm.shape[0]
    nm = max(n - 1, 0)
    out_a = np.empty(nm, dtype=np.int64)
    out_b = np.empty(nm, dtype=np.int64)
    out_h = np.empty(nm, dtype=np.float64)
    if nm == 0:
        return out_a, out_b, out_h

    d = np.array(dm, dtype=np.float64)
    np.fill_diagonal(d, np.inf)
    ids = np.arange(n, dtype=np.int64)
    sizes = np.ones(n, dtype=np.float64)

    for t in range(nm):
        h = float(d.min())
        pi, pj = np.nonzero(d == h)
        best = None
        bp = bq = -1
        for p, q in zip(pi.tolist(), pj.tolist()):
            if p >= q:
                continue
            ia, ib = int(ids[p]), int(ids[q])
            if ia > ib:
                ia, ib = ib, ia
            if best is None or (ia, ib) < best:
                best = (ia, ib)
                bp, bq = p, q
        out_a[t], out_b[t] = best
        out_h[t] = h

        # Lance-Williams update for unweighted average linkage; slot bp takes
        # the merged cluster, slot bq is retired (rows/cols set to inf).
        sa, sb = sizes[bp], sizes[bq]
        d[bp, :] = (sa * d[bp, :] + sb * d[bq, :]) / (sa + sb)
        d[:, bp] = d[bp, :]
        d[bp, bp] = np.inf
        d[bq, :] = np.inf
        d[:, bq] = np.inf
        sizes[bp] = sa + sb
        ids[bp] = n + t

    return out_a, out_b, out_h
