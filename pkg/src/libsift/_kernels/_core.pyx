# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled aggregation kernels.

The dense similarity products stay on numpy's BLAS path; a hand-written
matmul loses to it by an order of magnitude (see benchmarks).  What does
compile well is the irregular pass over each product block: thresholded
per-library counting and the running column argmax, which in pure numpy
cost a boolean matrix, an integer cast, and a reduceat per block.  Both
kernels stream one block of similarity rows and update caller-owned
accumulators in place.
"""


def count_block(
    double[:, ::1] sims,
    long long[::1] lib_ids,
    Py_ssize_t row_start,
    double theta,
    long long[::1] n_out,
    long long[::1] df_out,
    long long[::1] stamp,
):
    """Fold one block of rows into same-library hit counts and
    cross-library document frequencies.

    Global row gi = row_start + i owns sims[i]; hits are sims >= theta
    excluding self.  `stamp` must arrive zeroed on the first block and is
    marked with gi + 1, which never repeats, so it is never cleared.
    """
    cdef Py_ssize_t rows = sims.shape[0]
    cdef Py_ssize_t n = sims.shape[1]
    cdef Py_ssize_t i, j
    cdef long long gi, marker, own, lib
    for i in range(rows):
        gi = row_start + i
        marker = gi + 1
        own = lib_ids[gi]
        for j in range(n):
            if sims[i, j] >= theta and j != gi:
                lib = lib_ids[j]
                if lib == own:
                    n_out[gi] += 1
                elif stamp[lib] != marker:
                    stamp[lib] = marker
                    df_out[gi] += 1


def best_match_block(
    double[:, ::1] sims,
    Py_ssize_t row_start,
    double[::1] best,
    long long[::1] arg,
):
    """Fold one block of query rows into the per-key running maximum.

    Strict > keeps the earliest query row on exact ties, matching the
    numpy scan.
    """
    cdef Py_ssize_t rows = sims.shape[0]
    cdef Py_ssize_t n = sims.shape[1]
    cdef Py_ssize_t i, j
    cdef double v
    for i in range(rows):
        for j in range(n):
            v = sims[i, j]
            if v > best[j]:
                best[j] = v
                arg[j] = row_start + i
