"""Pure numpy twins of the compiled kernels in ``_kernels.pyx``.

Semantics and accumulation order match the compiled versions; the outer
enumeration levels are Python loops and the last two levels are vectorized.
"""
import itertools

import numpy as np


def _chain_prefix_sums(C, prefix):
    s = 0.0
    for prev, q in zip(prefix[:-1], prefix[1:]):
        s = s + (C[q, prev] - C[prev, prev])
    return s


def zero_cycle_endpoints(C, max_len, tol):
    C = np.ascontiguousarray(C, dtype=np.float64)
    P = C.shape[0]
    out = np.zeros((P, P), dtype=np.uint8)
    if P == 0 or max_len < 2:
        return out
    diag = np.diag(C)
    for p0 in range(P):
        # chains of length 2: p0 -> q
        s1 = 0.0 + (C[:, p0] - C[p0, p0])
        total = s1 + (C[p0, :] - diag)
        out[p0, np.abs(total) <= tol] = 1
        for length in range(3, max_len + 1):
            # fix the middle of the chain, vectorize the last two levels
            for middle in itertools.product(range(P), repeat=length - 3):
                prefix = (p0,) + middle
                s = _chain_prefix_sums(C, prefix)
                prev = prefix[-1]
                s_a = s + (C[:, prev] - C[prev, prev])  # indexed by q1
                s_b = s_a[:, None] + (C.T - diag[:, None])  # [q1, q2]
                total = s_b + (C[p0, :] - diag)[None, :]
                hit = (np.abs(total) <= tol).any(axis=0)
                out[p0, hit] = 1
    return out


def worst_cycle(C, max_len):
    C = np.ascontiguousarray(C, dtype=np.float64)
    P = C.shape[0]
    if P == 0 or max_len < 2:
        return -np.inf, (), 0
    diag = np.diag(C)
    worst = -np.inf
    witness = ()
    count = 0
    for p0 in range(P):
        rest = np.arange(p0, P)
        s1 = 0.0 + (C[rest, p0] - C[p0, p0])
        viol = -(s1 + (C[p0, rest] - diag[rest]))
        count += rest.size
        k = int(np.argmax(viol))
        if viol[k] > worst:
            worst, witness = float(viol[k]), (p0, int(rest[k]))
        for length in range(3, max_len + 1):
            for middle in itertools.product(range(p0, P), repeat=length - 3):
                prefix = (p0,) + middle
                s = _chain_prefix_sums(C, prefix)
                prev = prefix[-1]
                s_a = s + (C[rest, prev] - C[prev, prev])
                s_b = s_a[:, None] + (C[np.ix_(rest, rest)].T - diag[rest][:, None])
                v = -(s_b + (C[p0, rest] - diag[rest])[None, :])
                count += v.size
                i, j = np.unravel_index(int(np.argmax(v)), v.shape)
                if v[i, j] > worst:
                    worst = float(v[i, j])
                    witness = prefix + (int(rest[i]), int(rest[j]))
    return worst, witness, count


def ray_relation(D, pairs, tol):
    D = np.ascontiguousarray(D, dtype=np.float64)
    N = D.shape[0]
    out = np.zeros((N, N), dtype=np.uint8)
    for w, z in np.asarray(pairs, dtype=np.intp).reshape(-1, 2):
        dwz = D[w, z] + tol
        cand = np.flatnonzero(D[w, :] + D[:, z] <= dwz)
        if cand.size == 0:
            continue
        lhs = (D[w, cand][:, None] + D[np.ix_(cand, cand)]) + D[cand, z][None, :]
        xi, yi = np.nonzero(lhs <= dwz)
        out[cand[xi], cand[yi]] = 1
    return out
