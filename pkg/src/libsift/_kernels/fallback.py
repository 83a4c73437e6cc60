"""Pure NumPy kernels; used whenever the compiled core is unavailable.

All inputs are C-contiguous float64 arrays of unit-norm rows; the
dispatcher in __init__ owns the block loop and feeds both backends
identical BLAS similarity blocks, so results agree exactly.
"""
from __future__ import annotations

import numpy as np


def sim_matrix(queries, keys, batch):
    """Dense cosine matrix, computed in row chunks of `batch`.

    Each output element is the same dot product whatever the chunking, so
    results agree across batch sizes to float rounding.
    """
    out = np.empty((queries.shape[0], keys.shape[0]), dtype=np.float64)
    kt = keys.T
    for start in range(0, queries.shape[0], batch):
        stop = min(start + batch, queries.shape[0])
        np.matmul(queries[start:stop], kt, out=out[start:stop])
    return out


def count_block(sims, lib_ids, bounds, row_start, theta, n_out, df_out):
    """Fold one block of similarity rows into same-library hit counts and
    cross-library document frequencies.

    `bounds` holds the reduceat segment starts, one per library; valid
    because the dispatcher guarantees every library is populated.
    """
    rows = sims.shape[0]
    rr = np.arange(rows)
    span = np.arange(row_start, row_start + rows)
    hits = sims >= theta
    hits[rr, span] = False  # self excluded
    per_lib = np.add.reduceat(hits.astype(np.int64), bounds, axis=1)
    own = lib_ids[span]
    n_out[span] += per_lib[rr, own]
    matched = per_lib > 0
    matched[rr, own] = False
    df_out[span] = matched.sum(axis=1)


def best_match_block(sims, row_start, best, arg):
    """Fold one block of query rows into the per-key running maximum.

    Strict > keeps earlier rows on exact ties, both within the block
    (argmax picks the first) and across blocks (no update on equality).
    """
    blk_best = sims.max(axis=0)
    improve = blk_best > best
    if improve.any():
        blk_arg = sims.argmax(axis=0)
        best[improve] = blk_best[improve]
        arg[improve] = blk_arg[improve] + row_start
