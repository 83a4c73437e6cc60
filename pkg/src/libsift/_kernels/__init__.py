"""Numeric kernels with a compiled fast path and a NumPy fallback.

Dense similarity products always go through numpy's BLAS; measurement
(benchmarks/bench_kernels.py) shows a hand-compiled matmul is no contest.
The compiled extension accelerates what follows each product block:
threshold counting for the weighting stage and the running column argmax.
Set LIBSIFT_PURE=1 before import to force the fallback; `backend` names
whichever implementation is active.

Both backends consume identical BLAS blocks, so integer counts and match
indices agree exactly, not just within rounding.
"""
from __future__ import annotations

import os

import numpy as np

from . import fallback as _fallback

_compiled = None
if os.environ.get("LIBSIFT_PURE") != "1":
    try:
        from . import _core as _compiled
    except ImportError:
        _compiled = None

backend = "compiled" if _compiled is not None else "numpy"

_BLOCK = 512


def _rows(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2-D array of row vectors")
    return a


def sim_matrix(queries, keys, batch=128):
    """M[i][j] = dot(queries[i], keys[j]), chunked by `batch` query rows."""
    queries = _rows(queries)
    keys = _rows(keys)
    if queries.shape[1] != keys.shape[1]:
        raise ValueError("dimension mismatch")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    return _fallback.sim_matrix(queries, keys, int(batch))


def theta_counts(vectors, lib_ids, n_libs, theta):
    """Same-library hit counts (incl. self) and cross-library document
    frequencies at similarity >= theta.

    lib_ids must be nondecreasing, covering every value in [0, n_libs).
    """
    vectors = _rows(vectors)
    lib_ids = np.ascontiguousarray(lib_ids, dtype=np.int64)
    if lib_ids.shape != (vectors.shape[0],):
        raise ValueError("lib_ids must have one entry per vector")
    if lib_ids.size:
        if (np.diff(lib_ids) < 0).any():
            raise ValueError("lib_ids must be nondecreasing")
        if lib_ids[0] != 0 or lib_ids[-1] != n_libs - 1 or np.unique(lib_ids).size != n_libs:
            raise ValueError("lib_ids must cover every value in [0, n_libs)")
    count = vectors.shape[0]
    n = np.ones(count, dtype=np.int64)
    df = np.zeros(count, dtype=np.int64)
    if not count:
        return n, df
    theta = float(theta)
    if _compiled is not None:
        stamp = np.zeros(int(n_libs), dtype=np.int64)

        def scan(sims, start):
            _compiled.count_block(sims, lib_ids, start, theta, n, df, stamp)
    else:
        bounds = np.searchsorted(lib_ids, np.arange(int(n_libs)))

        def scan(sims, start):
            _fallback.count_block(sims, lib_ids, bounds, start, theta, n, df)

    vt = vectors.T
    for start in range(0, count, _BLOCK):
        stop = min(start + _BLOCK, count)
        scan(vectors[start:stop] @ vt, start)
    return n, df


def best_match(queries, keys):
    """Per key: max similarity over queries and the first query row index
    attaining it."""
    queries = _rows(queries)
    keys = _rows(keys)
    if queries.shape[1] != keys.shape[1]:
        raise ValueError("dimension mismatch")
    if queries.shape[0] == 0:
        raise ValueError("queries must be non-empty")
    scan = _compiled.best_match_block if _compiled is not None else _fallback.best_match_block
    best = np.full(keys.shape[0], -np.inf, dtype=np.float64)
    arg = np.zeros(keys.shape[0], dtype=np.int64)
    kt = keys.T
    for start in range(0, queries.shape[0], _BLOCK):
        stop = min(start + _BLOCK, queries.shape[0])
        scan(queries[start:stop] @ kt, start, best, arg)
    return best, arg
