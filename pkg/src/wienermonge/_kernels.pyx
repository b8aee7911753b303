# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for cycle enumeration and the transport-ray relation.

Every function here has a numpy twin in ``_kernels_py`` with the same
signature and the same floating-point accumulation order.

``C`` arguments are pair-cost matrices: for support pairs ``(w_a, z_a)``,
``C[a, b] = c(w_a, z_b)``.  A chain of pair indices ``p_0, ..., p_I`` has
cycle sum

    sum_{i<I} (C[p_{i+1}, p_i] - C[p_i, p_i]) + C[p_0, p_I] - C[p_I, p_I]

which is the cost change of shifting every target one step back along the
chain and closing the loop at ``p_0``.
"""
import numpy as np

from libc.math cimport fabs


def zero_cycle_endpoints(const double[:, ::1] C, int max_len, double tol):
    """Flag ``(p_0, p_I)`` for every chain of 2..max_len pairs whose cycle sum is zero."""
    cdef Py_ssize_t P = C.shape[0]
    out = np.zeros((P, P), dtype=np.uint8)
    if P == 0 or max_len < 2:
        return out
    cdef unsigned char[:, ::1] Z = out
    cdef Py_ssize_t[::1] stack = np.zeros(max_len, dtype=np.intp)
    cdef Py_ssize_t[::1] cur = np.zeros(max_len, dtype=np.intp)
    cdef double[::1] partial = np.zeros(max_len, dtype=np.float64)
    cdef Py_ssize_t p0, q, prev, depth
    cdef double s, total

    for p0 in range(P):
        stack[0] = p0
        partial[0] = 0.0
        depth = 1
        cur[1] = 0
        while depth >= 1:
            if cur[depth] >= P:
                depth -= 1
                if depth >= 1:
                    cur[depth] += 1
                continue
            q = cur[depth]
            prev = stack[depth - 1]
            s = partial[depth - 1] + (C[q, prev] - C[prev, prev])
            total = s + (C[p0, q] - C[q, q])
            if fabs(total) <= tol:
                Z[p0, q] = 1
            if depth + 1 < max_len:
                stack[depth] = q
                partial[depth] = s
                depth += 1
                cur[depth] = 0
            else:
                cur[depth] += 1
    return out


def worst_cycle(const double[:, ::1] C, int max_len):
    """Largest violation ``-cycle_sum`` over cycles of 2..max_len pairs.

    Cycles are enumerated up to rotation (the smallest index leads).
    Returns ``(violation, witness, n_cycles)``; ``witness`` is the pair-index
    tuple attaining the violation, or ``()`` when nothing was enumerated.
    """
    cdef Py_ssize_t P = C.shape[0]
    if P == 0 or max_len < 2:
        return -np.inf, (), 0
    cdef Py_ssize_t[::1] stack = np.zeros(max_len, dtype=np.intp)
    cdef Py_ssize_t[::1] cur = np.zeros(max_len, dtype=np.intp)
    cdef Py_ssize_t[::1] best = np.zeros(max_len, dtype=np.intp)
    cdef double[::1] partial = np.zeros(max_len, dtype=np.float64)
    cdef Py_ssize_t p0, q, prev, depth, best_len = 0, k
    cdef long long count = 0
    cdef double s, viol, worst = -np.inf

    for p0 in range(P):
        stack[0] = p0
        partial[0] = 0.0
        depth = 1
        cur[1] = p0
        while depth >= 1:
            if cur[depth] >= P:
                depth -= 1
                if depth >= 1:
                    cur[depth] += 1
                continue
            q = cur[depth]
            prev = stack[depth - 1]
            s = partial[depth - 1] + (C[q, prev] - C[prev, prev])
            viol = -(s + (C[p0, q] - C[q, q]))
            count += 1
            if viol > worst:
                worst = viol
                stack[depth] = q
                for k in range(depth + 1):
                    best[k] = stack[k]
                best_len = depth + 1
            if depth + 1 < max_len:
                stack[depth] = q
                partial[depth] = s
                depth += 1
                cur[depth] = p0
            else:
                cur[depth] += 1
    return worst, tuple(int(best[k]) for k in range(best_len)), int(count)


def ray_relation(const double[:, ::1] D, const Py_ssize_t[:, ::1] pairs, double tol):
    """Boolean matrix of ``(x, y)`` with ``d(w,x) + d(x,y) + d(y,z) <= d(w,z) + tol`` for some pair."""
    cdef Py_ssize_t N = D.shape[0]
    cdef Py_ssize_t P = pairs.shape[0]
    out = np.zeros((N, N), dtype=np.uint8)
    cdef unsigned char[:, ::1] G = out
    cdef Py_ssize_t[::1] cand = np.zeros(max(N, 1), dtype=np.intp)
    cdef Py_ssize_t a, w, z, x, y, i, j, nc
    cdef double dwz, dwx

    for a in range(P):
        w = pairs[a, 0]
        z = pairs[a, 1]
        dwz = D[w, z] + tol
        nc = 0
        for x in range(N):
            if D[w, x] + D[x, z] <= dwz:
                cand[nc] = x
                nc += 1
        for i in range(nc):
            x = cand[i]
            dwx = D[w, x]
            for j in range(nc):
                y = cand[j]
                if dwx + D[x, y] + D[y, z] <= dwz:
                    G[x, y] = 1
    return out
