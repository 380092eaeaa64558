"""Hot inner loops, JIT-compiled with numba when available.

Two kernels dominate pipeline runtime: the windowed co-occurrence scan
over token-id streams and the random-walk power iteration over the
K-NN graph. Both ship in two equivalent versions: a numba ``@njit``
one and a numpy/scipy one. Set ``COMMSENT_NO_NUMBA=1`` to force the
fallback path (the benchmark under ``benchmarks/`` times both).
"""

import os

import numpy as np
from scipy import sparse


def _flag_set(name):
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false", "no")


try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _flag_set("COMMSENT_NO_NUMBA")


# ---------------------------------------------------------------------------
# windowed co-occurrence pair scan
#
# Input is an int32 token-id array where separator/dummy positions are < 0.
# Output is the pair list (rows, cols) of ordered co-occurrences: for every
# position pair (i, j) with 1 <= j - i <= window and both ids valid, both
# (id_i, id_j) and (id_j, id_i) are emitted. Aggregation into a matrix
# happens in the caller (scipy handles duplicate summing).
# ---------------------------------------------------------------------------


def _cooc_pairs_numpy(ids, window):
    rows, cols = [], []
    n = ids.shape[0]
    for d in range(1, window + 1):
        if d >= n:
            break
        a = ids[:-d]
        b = ids[d:]
        ok = (a >= 0) & (b >= 0)
        rows.append(a[ok])
        cols.append(b[ok])
    if not rows:
        empty = np.empty(0, dtype=np.int32)
        return empty, empty.copy()
    fwd_r = np.concatenate(rows)
    fwd_c = np.concatenate(cols)
    return (
        np.concatenate([fwd_r, fwd_c]).astype(np.int32, copy=False),
        np.concatenate([fwd_c, fwd_r]).astype(np.int32, copy=False),
    )


if HAS_NUMBA:

    @njit(cache=True)
    def _cooc_pairs_njit(ids, window):  # pragma: no cover - compiled
        n = ids.shape[0]
        total = 0
        for i in range(n):
            if ids[i] < 0:
                continue
            jmax = i + window
            if jmax > n - 1:
                jmax = n - 1
            for j in range(i + 1, jmax + 1):
                if ids[j] >= 0:
                    total += 1
        rows = np.empty(2 * total, dtype=np.int32)
        cols = np.empty(2 * total, dtype=np.int32)
        k = 0
        for i in range(n):
            if ids[i] < 0:
                continue
            jmax = i + window
            if jmax > n - 1:
                jmax = n - 1
            for j in range(i + 1, jmax + 1):
                if ids[j] >= 0:
                    rows[k] = ids[i]
                    cols[k] = ids[j]
                    k += 1
                    rows[k] = ids[j]
                    cols[k] = ids[i]
                    k += 1
        return rows, cols


def cooccurrence_pairs(ids, window):
    """Ordered in-window co-occurrence pairs of a token-id stream.

    ``ids`` is int32 with negative entries marking dummy positions that
    never co-occur with anything.
    """
    ids = np.ascontiguousarray(ids, dtype=np.int32)
    if USE_NUMBA:
        return _cooc_pairs_njit(ids, np.int64(window))
    return _cooc_pairs_numpy(ids, window)


# ---------------------------------------------------------------------------
# random-walk power iteration
#
# Iterates p <- beta * T p + (1 - beta) * s on a CSR matrix T until the
# L1 change drops below tol. Returns (p, n_iter, last_residual); the
# caller decides whether a non-converged result is an error.
# ---------------------------------------------------------------------------


def _walk_numpy(indptr, indices, data, s, beta, tol, max_iter):
    n = s.shape[0]
    mat = sparse.csr_matrix((data, indices, indptr), shape=(n, n))
    p = s.copy()
    residual = np.inf
    for it in range(max_iter):
        nxt = beta * (mat @ p) + (1.0 - beta) * s
        residual = float(np.abs(nxt - p).sum())
        p = nxt
        if residual < tol:
            return p, it + 1, residual
    return p, max_iter, residual


if HAS_NUMBA:

    @njit(cache=True)
    def _walk_njit(indptr, indices, data, s, beta, tol, max_iter):  # pragma: no cover
        n = s.shape[0]
        p = s.copy()
        nxt = np.empty(n, dtype=np.float64)
        residual = np.inf
        for it in range(max_iter):
            for i in range(n):
                acc = 0.0
                for k in range(indptr[i], indptr[i + 1]):
                    acc += data[k] * p[indices[k]]
                nxt[i] = beta * acc + (1.0 - beta) * s[i]
            residual = 0.0
            for i in range(n):
                residual += abs(nxt[i] - p[i])
            tmp = p
            p = nxt
            nxt = tmp
            if residual < tol:
                return p, it + 1, residual
        return p, max_iter, residual


def walk_to_fixed_point(matrix, s, beta, tol, max_iter):
    """Run the damped power iteration on CSR ``matrix`` from restart vector ``s``."""
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    s = np.ascontiguousarray(s, dtype=np.float64)
    if USE_NUMBA:
        p, iters, residual = _walk_njit(
            matrix.indptr,
            matrix.indices,
            np.ascontiguousarray(matrix.data, dtype=np.float64),
            s,
            float(beta),
            float(tol),
            int(max_iter),
        )
        return p, int(iters), float(residual)
    return _walk_numpy(
        matrix.indptr, matrix.indices, matrix.data, s, float(beta), float(tol), int(max_iter)
    )
