# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: transportation simplex and periodic Crank-Nicolson.

Same contracts as ``_fallback``; see that module for the reference version.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _tree(long[::1] bi, long[::1] bj, long m, long n,
                long[::1] head, long[::1] nxt, long[::1] to, long[::1] slot,
                long[::1] parent, long[::1] pslot, long[::1] depth,
                long[::1] order) except *:
    cdef long size = m + n
    cdef long nb = m + n - 1
    cdef long k, e, r, c, node, other, qh, qt
    for k in range(size):
        head[k] = -1
        parent[k] = -1
        depth[k] = -1
    e = 0
    for k in range(nb):
        r = bi[k]
        c = m + bj[k]
        to[e] = c; slot[e] = k; nxt[e] = head[r]; head[r] = e; e += 1
        to[e] = r; slot[e] = k; nxt[e] = head[c]; head[c] = e; e += 1
    depth[0] = 0
    order[0] = 0
    qh = 0
    qt = 1
    while qh < qt:
        node = order[qh]
        qh += 1
        e = head[node]
        while e != -1:
            other = to[e]
            if depth[other] < 0:
                depth[other] = depth[node] + 1
                parent[other] = node
                pslot[other] = slot[e]
                order[qt] = other
                qt += 1
            e = nxt[e]
    if qt != size:
        raise RuntimeError("basis is not a spanning tree")


def transport_simplex(cost_in, a_in, b_in, long max_iter=200000,
                      double tol=1e-12, bint bland=True):
    cdef const double[:, ::1] cost = np.ascontiguousarray(cost_in, dtype=np.float64)
    cdef const double[::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef long m = cost.shape[0]
    cdef long n = cost.shape[1]
    cdef long nb = m + n - 1
    cdef long size = m + n
    cdef long i, j, k, node, ei, ej, na, nbb, leave, npath, t, key, best
    cdef long iterations = 0
    cdef double q, theta, red, bestred, scale, thresh

    bi_arr = np.empty(nb, dtype=np.int64)
    bj_arr = np.empty(nb, dtype=np.int64)
    x_arr = np.empty(nb, dtype=np.float64)
    cdef long[::1] bi = bi_arr
    cdef long[::1] bj = bj_arr
    cdef double[::1] x = x_arr
    ra_arr = np.array(a, dtype=np.float64)
    rb_arr = np.array(b, dtype=np.float64)
    cdef double[::1] ra = ra_arr
    cdef double[::1] rb = rb_arr

    # northwest corner start
    i = 0
    j = 0
    for k in range(nb):
        q = ra[i] if ra[i] < rb[j] else rb[j]
        bi[k] = i; bj[k] = j; x[k] = q
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

    inb_arr = np.zeros((m, n), dtype=np.uint8)
    cdef unsigned char[:, ::1] inbasis = inb_arr
    for k in range(nb):
        inbasis[bi[k], bj[k]] = 1

    cdef long[::1] head = np.empty(size, dtype=np.int64)
    cdef long[::1] nxt = np.empty(2 * nb, dtype=np.int64)
    cdef long[::1] to = np.empty(2 * nb, dtype=np.int64)
    cdef long[::1] slot = np.empty(2 * nb, dtype=np.int64)
    cdef long[::1] parent = np.empty(size, dtype=np.int64)
    cdef long[::1] pslot = np.empty(size, dtype=np.int64)
    cdef long[::1] depth = np.empty(size, dtype=np.int64)
    cdef long[::1] order = np.empty(size, dtype=np.int64)
    cdef long[::1] path = np.empty(size, dtype=np.int64)
    cdef long[::1] tail = np.empty(size, dtype=np.int64)
    u_arr = np.zeros(m, dtype=np.float64)
    v_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr

    scale = 1.0
    for i in range(m):
        for j in range(n):
            if cost[i, j] > scale:
                scale = cost[i, j]
            elif -cost[i, j] > scale:
                scale = -cost[i, j]
    thresh = -tol * scale

    while True:
        _tree(bi, bj, m, n, head, nxt, to, slot, parent, pslot, depth, order)
        u[0] = 0.0
        for t in range(1, size):
            node = order[t]
            k = pslot[node]
            if node >= m:
                v[node - m] = cost[bi[k], bj[k]] - u[bi[k]]
            else:
                u[node] = cost[bi[k], bj[k]] - v[bj[k]]

        ei = -1
        ej = -1
        bestred = thresh
        if bland:
            for i in range(m):
                for j in range(n):
                    if not inbasis[i, j]:
                        red = cost[i, j] - u[i] - v[j]
                        if red < thresh:
                            ei = i
                            ej = j
                            break
                if ei >= 0:
                    break
        else:
            for i in range(m):
                for j in range(n):
                    if not inbasis[i, j]:
                        red = cost[i, j] - u[i] - v[j]
                        if red < bestred:
                            bestred = red
                            ei = i
                            ej = j
        if ei < 0:
            break
        if iterations >= max_iter:
            raise RuntimeError(
                "transport simplex did not converge in %d pivots" % max_iter)
        iterations += 1

        na = m + ej
        nbb = ei
        npath = 0
        t = 0
        while depth[na] > depth[nbb]:
            path[npath] = pslot[na]; npath += 1
            na = parent[na]
        while depth[nbb] > depth[na]:
            tail[t] = pslot[nbb]; t += 1
            nbb = parent[nbb]
        while na != nbb:
            path[npath] = pslot[na]; npath += 1
            na = parent[na]
            tail[t] = pslot[nbb]; t += 1
            nbb = parent[nbb]
        while t > 0:
            t -= 1
            path[npath] = tail[t]; npath += 1

        theta = x[path[0]]
        for t in range(0, npath, 2):
            if x[path[t]] < theta:
                theta = x[path[t]]
        leave = -1
        best = -1
        for t in range(0, npath, 2):
            k = path[t]
            if x[k] <= theta:
                key = bi[k] * n + bj[k]
                if best < 0 or key < best:
                    best = key
                    leave = k
        for t in range(npath):
            if t % 2 == 0:
                x[path[t]] -= theta
            else:
                x[path[t]] += theta
        inbasis[bi[leave], bj[leave]] = 0
        bi[leave] = ei
        bj[leave] = ej
        x[leave] = theta
        inbasis[ei, ej] = 1

    from ._fallback import _tree_flows
    xf = _tree_flows(bi_arr, bj_arr, np.asarray(a), np.asarray(b))
    plan = np.zeros((m, n), dtype=np.float64)
    plan[bi_arr, bj_arr] = xf
    return plan, u_arr.copy(), v_arr.copy(), iterations


cdef void _thomas(double sub, double[::1] diag, double sup,
                  double[::1] rhs, double[::1] out, double[::1] cp) noexcept:
    cdef long m = rhs.shape[0]
    cdef long i
    cdef double denom
    cp[0] = sup / diag[0]
    out[0] = rhs[0] / diag[0]
    for i in range(1, m):
        denom = diag[i] - sub * cp[i - 1]
        cp[i] = sup / denom
        out[i] = (rhs[i] - sub * out[i - 1]) / denom
    for i in range(m - 2, -1, -1):
        out[i] -= cp[i] * out[i + 1]


def heat_cn_periodic(w_in, mu_in):
    cdef const double[::1] mu = np.ascontiguousarray(mu_in, dtype=np.float64)
    w_arr = np.array(w_in, dtype=np.float64)
    cdef double[::1] w = w_arr
    cdef long m = w.shape[0]
    cdef long steps = mu.shape[0]
    cdef long s, i
    cdef double mk, sub, dg, gamma, fac
    cdef double[::1] rhs = np.empty(m)
    cdef double[::1] y = np.empty(m)
    cdef double[::1] z = np.empty(m)
    cdef double[::1] uu = np.zeros(m)
    cdef double[::1] bb = np.empty(m)
    cdef double[::1] cp = np.empty(m)
    for s in range(steps):
        mk = mu[s]
        sub = -0.5 * mk
        dg = 1.0 + mk
        rhs[0] = (1.0 - mk) * w[0] + 0.5 * mk * (w[m - 1] + w[1])
        for i in range(1, m - 1):
            rhs[i] = (1.0 - mk) * w[i] + 0.5 * mk * (w[i - 1] + w[i + 1])
        rhs[m - 1] = (1.0 - mk) * w[m - 1] + 0.5 * mk * (w[m - 2] + w[0])
        gamma = -dg
        for i in range(m):
            bb[i] = dg
            uu[i] = 0.0
        bb[0] = dg - gamma
        bb[m - 1] = dg - sub * sub / gamma
        uu[0] = gamma
        uu[m - 1] = sub
        _thomas(sub, bb, sub, rhs, y, cp)
        _thomas(sub, bb, sub, uu, z, cp)
        fac = (y[0] + sub * y[m - 1] / gamma) / (1.0 + z[0] + sub * z[m - 1] / gamma)
        for i in range(m):
            w[i] = y[i] - fac * z[i]
    return w_arr
