"""Pure-Python reference kernels.

These mirror the compiled routines in ``_core.pyx`` one for one and are used
whenever the extension is unavailable (or ``SOLITONLAB_PURE=1`` is set).
"""

from collections import deque

import numpy as np
from scipy.linalg import solve_banded


def _northwest_corner(a, b):
    m, n = len(a), len(b)
    ra = a.astype(float).copy()
    rb = b.astype(float).copy()
    bi = np.empty(m + n - 1, dtype=np.int64)
    bj = np.empty(m + n - 1, dtype=np.int64)
    x = np.empty(m + n - 1)
    i = j = 0
    for k in range(m + n - 1):
        q = min(ra[i], rb[j])
        bi[k], bj[k], x[k] = i, j, q
        ra[i] -= q
        rb[j] -= q
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return bi, bj, x


def _spanning_tree(bi, bj, m, n):
    """BFS over the basis tree rooted at row node 0.

    Nodes ``0..m-1`` are rows and ``m..m+n-1`` columns.  Returns parent node,
    parent basis slot, depth and BFS order.
    """
    size = m + n
    adj = [[] for _ in range(size)]
    for k in range(len(bi)):
        r, c = int(bi[k]), m + int(bj[k])
        adj[r].append((c, k))
        adj[c].append((r, k))
    parent = np.full(size, -1, dtype=np.int64)
    pslot = np.full(size, -1, dtype=np.int64)
    depth = np.zeros(size, dtype=np.int64)
    seen = np.zeros(size, dtype=bool)
    order = [0]
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other, k in adj[node]:
            if not seen[other]:
                seen[other] = True
                parent[other] = node
                pslot[other] = k
                depth[other] = depth[node] + 1
                order.append(other)
                queue.append(other)
    if len(order) != size:
        raise RuntimeError("basis is not a spanning tree")
    return parent, pslot, depth, order


def _tree_flows(bi, bj, a, b):
    """Recompute basic flows exactly from the marginals by leaf peeling."""
    m, n = len(a), len(b)
    size = m + n
    rest = np.concatenate([a, b]).astype(float)
    degree = np.zeros(size, dtype=np.int64)
    inc = [[] for _ in range(size)]
    for k in range(len(bi)):
        for node in (int(bi[k]), m + int(bj[k])):
            degree[node] += 1
            inc[node].append(k)
    used = np.zeros(len(bi), dtype=bool)
    x = np.zeros(len(bi))
    leaves = deque(i for i in range(size) if degree[i] == 1)
    while leaves:
        node = leaves.popleft()
        if degree[node] != 1:
            continue
        k = next(s for s in inc[node] if not used[s])
        used[k] = True
        other = m + int(bj[k]) if node < m else int(bi[k])
        q = rest[node]
        x[k] = q
        rest[node] = 0.0
        rest[other] -= q
        degree[node] -= 1
        degree[other] -= 1
        if degree[other] == 1:
            leaves.append(other)
    return np.maximum(x, 0.0)


def transport_simplex(cost, a, b, max_iter=200000, tol=1e-12, bland=True):
    """Transportation simplex on the bipartite polytope.

    Returns ``(plan, u, v, iterations)`` where ``u``/``v`` are the optimal
    dual potentials (``u[0] == 0``).
    """
    cost = np.ascontiguousarray(cost, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    m, n = cost.shape
    bi, bj, x = _northwest_corner(a, b)
    inbasis = np.zeros((m, n), dtype=bool)
    inbasis[bi, bj] = True
    scale = max(1.0, float(np.abs(cost).max()))
    thresh = -tol * scale
    u = np.zeros(m)
    v = np.zeros(n)
    iterations = 0
    while True:
        parent, pslot, depth, order = _spanning_tree(bi, bj, m, n)
        u[0] = 0.0
        for node in order[1:]:
            k = pslot[node]
            if node >= m:
                v[node - m] = cost[bi[k], bj[k]] - u[bi[k]]
            else:
                u[node] = cost[bi[k], bj[k]] - v[bj[k]]
        red = cost - u[:, None] - v[None, :]
        red[inbasis] = 0.0
        if bland:
            cand = np.flatnonzero(red.ravel() < thresh)
            if cand.size == 0:
                break
            e = int(cand[0])
        else:
            e = int(np.argmin(red))
            if red.flat[e] >= thresh:
                break
        if iterations >= max_iter:
            raise RuntimeError(f"transport simplex did not converge in {max_iter} pivots")
        iterations += 1
        ei, ej = divmod(e, n)
        # cycle: entering cell, then the tree path from column ej back to row ei
        na, nb_ = m + ej, ei
        up_a, up_b = [], []
        while depth[na] > depth[nb_]:
            up_a.append(pslot[na])
            na = parent[na]
        while depth[nb_] > depth[na]:
            up_b.append(pslot[nb_])
            nb_ = parent[nb_]
        while na != nb_:
            up_a.append(pslot[na])
            na = parent[na]
            up_b.append(pslot[nb_])
            nb_ = parent[nb_]
        path = up_a + up_b[::-1]
        minus = path[0::2]
        plus = path[1::2]
        theta = min(x[k] for k in minus)
        leave = -1
        best = None
        for k in minus:
            if x[k] <= theta:
                key = bi[k] * n + bj[k]
                if best is None or key < best:
                    best, leave = key, k
        for k in minus:
            x[k] -= theta
        for k in plus:
            x[k] += theta
        inbasis[bi[leave], bj[leave]] = False
        bi[leave], bj[leave], x[leave] = ei, ej, theta
        inbasis[ei, ej] = True
    x = _tree_flows(bi, bj, a, b)
    plan = np.zeros((m, n))
    plan[bi, bj] = x
    return plan, u.copy(), v.copy(), iterations


def _cyclic_solve(sub, diag, sup, rhs):
    """Solve a constant-coefficient periodic tridiagonal system."""
    m = rhs.shape[0]
    gamma = -diag
    ab = np.zeros((3, m))
    ab[0, 1:] = sup
    ab[1, :] = diag
    ab[2, :-1] = sub
    ab[1, 0] = diag - gamma
    ab[1, -1] = diag - sup * sub / gamma
    u = np.zeros(m)
    u[0] = gamma
    u[-1] = sup
    y = solve_banded((1, 1), ab, rhs)
    z = solve_banded((1, 1), ab, u)
    fac = (y[0] + sub * y[-1] / gamma) / (1.0 + z[0] + sub * z[-1] / gamma)
    return y - fac * z


def heat_cn_periodic(w, mu):
    """Crank-Nicolson steps of ``w_t = kappa w_xx`` on a periodic grid.

    ``mu[k] = kappa_k * dt / dx**2`` for step ``k``.  Returns the final state.
    """
    w = np.array(w, dtype=float)
    for mk in np.asarray(mu, dtype=float):
        rhs = (1.0 - mk) * w + 0.5 * mk * (np.roll(w, 1) + np.roll(w, -1))
        w = _cyclic_solve(-0.5 * mk, 1.0 + mk, -0.5 * mk, rhs)
    return w
