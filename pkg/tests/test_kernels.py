import numpy as np
import pytest

from libsift import _kernels
from libsift._kernels import fallback

try:
    from libsift._kernels import _core
except ImportError:
    _core = None


def _unit(rng, n, dim):
    m = rng.standard_normal((n, dim))
    return np.ascontiguousarray(m / np.linalg.norm(m, axis=1, keepdims=True))


def _lib_ids(rng, count, n_libs):
    ids = np.sort(rng.integers(0, n_libs, count)).astype(np.int64)
    ids[:n_libs] = np.arange(n_libs)
    return np.sort(ids)


def _safe_theta(sims, rng):
    """A threshold not within float noise of any attained similarity."""
    flat = np.unique(np.round(sims, 12))
    k = rng.integers(1, flat.size - 1)
    return float((flat[k] + flat[k + 1]) / 2.0)


def test_sim_matrix_against_double_loop():
    rng = np.random.default_rng(0)
    q = _unit(rng, 19, 24)
    k = _unit(rng, 27, 24)
    sims = _kernels.sim_matrix(q, k, batch=4)
    for i in range(19):
        for j in range(27):
            want = sum(float(q[i, d]) * float(k[j, d]) for d in range(24))
            assert sims[i, j] == pytest.approx(want, abs=1e-9)


def test_sim_matrix_batch_invariance():
    rng = np.random.default_rng(1)
    q = _unit(rng, 150, 32)
    k = _unit(rng, 90, 32)
    base = _kernels.sim_matrix(q, k, batch=1)
    for batch in (7, 128, 1000):
        np.testing.assert_allclose(_kernels.sim_matrix(q, k, batch=batch),
                                   base, atol=1e-9)


def test_sim_matrix_validates():
    with pytest.raises(ValueError):
        _kernels.sim_matrix(np.ones((2, 3)), np.ones((2, 4)))
    with pytest.raises(ValueError):
        _kernels.sim_matrix(np.ones(3), np.ones((2, 3)))
    with pytest.raises(ValueError):
        _kernels.sim_matrix(np.ones((2, 3)), np.ones((2, 3)), batch=0)


def _counts_oracle(vectors, lib_ids, theta):
    count = vectors.shape[0]
    n = np.ones(count, dtype=np.int64)
    df = np.zeros(count, dtype=np.int64)
    for i in range(count):
        others = set()
        for j in range(count):
            if j == i:
                continue
            if float(vectors[i] @ vectors[j]) >= theta:
                if lib_ids[j] == lib_ids[i]:
                    n[i] += 1
                else:
                    others.add(int(lib_ids[j]))
        df[i] = len(others)
    return n, df


def test_theta_counts_against_brute_force():
    rng = np.random.default_rng(2)
    for trial in range(8):
        count = int(rng.integers(5, 120))
        n_libs = int(rng.integers(1, min(count, 9) + 1))
        vecs = _unit(rng, count, 16)
        ids = _lib_ids(rng, count, n_libs)
        theta = _safe_theta(vecs @ vecs.T, rng)
        n, df = _kernels.theta_counts(vecs, ids, n_libs, theta)
        n_want, df_want = _counts_oracle(vecs, ids, theta)
        np.testing.assert_array_equal(n, n_want)
        np.testing.assert_array_equal(df, df_want)


def test_theta_counts_extremes():
    rng = np.random.default_rng(3)
    vecs = _unit(rng, 40, 8)
    ids = _lib_ids(rng, 40, 4)
    n, df = _kernels.theta_counts(vecs, ids, 4, 1.1)  # nothing matches
    np.testing.assert_array_equal(n, np.ones(40, dtype=np.int64))
    np.testing.assert_array_equal(df, np.zeros(40, dtype=np.int64))
    n, df = _kernels.theta_counts(vecs, ids, 4, -1.1)  # everything matches
    sizes = np.bincount(ids, minlength=4)
    np.testing.assert_array_equal(n, sizes[ids])
    np.testing.assert_array_equal(df, np.full(40, 3, dtype=np.int64))


def test_theta_counts_spans_block_boundary():
    # more rows than the internal block so the seam is exercised
    rng = np.random.default_rng(4)
    count = 1200
    vecs = _unit(rng, count, 8)
    ids = _lib_ids(rng, count, 6)
    n, df = _kernels.theta_counts(vecs, ids, 6, 0.9)
    check = rng.integers(0, count, 25)
    n_want, df_want = _counts_oracle(vecs, ids, 0.9)
    np.testing.assert_array_equal(n[check], n_want[check])
    np.testing.assert_array_equal(df[check], df_want[check])


def test_theta_counts_validates_lib_ids():
    vecs = np.eye(4)
    with pytest.raises(ValueError):
        _kernels.theta_counts(vecs, np.array([0, 1, 0, 1]), 2, 0.5)  # not sorted
    with pytest.raises(ValueError):
        _kernels.theta_counts(vecs, np.array([0, 0, 2, 2]), 3, 0.5)  # lib 1 empty
    with pytest.raises(ValueError):
        _kernels.theta_counts(vecs, np.array([0, 0, 1]), 2, 0.5)  # length mismatch


def test_best_match_against_oracle():
    rng = np.random.default_rng(5)
    q = _unit(rng, 33, 12)
    k = _unit(rng, 21, 12)
    best, arg = _kernels.best_match(q, k)
    sims = q @ k.T
    np.testing.assert_allclose(best, sims.max(axis=0), atol=0)
    np.testing.assert_array_equal(arg, sims.argmax(axis=0))


def test_best_match_tie_keeps_earliest_row():
    q = np.vstack([np.eye(3)[0], np.eye(3)[1], np.eye(3)[0]])
    k = np.eye(3)
    best, arg = _kernels.best_match(q, k)
    assert arg[0] == 0  # rows 0 and 2 tie at 1.0
    assert best[0] == 1.0


def test_best_match_ties_across_internal_blocks():
    # identical query rows far beyond the first block must not steal the
    # argmax from row 0
    dim = 8
    row = np.ones((1, dim)) / np.sqrt(dim)
    q = np.repeat(row, 1300, axis=0)
    k = np.vstack([row, -row])
    best, arg = _kernels.best_match(q, k)
    np.testing.assert_array_equal(arg, [0, 0])
    assert best[0] == pytest.approx(1.0, abs=1e-12)


def test_best_match_requires_queries():
    with pytest.raises(ValueError):
        _kernels.best_match(np.empty((0, 4)), np.ones((2, 4)))


@pytest.mark.skipif(_core is None, reason="compiled extension not built")
def test_compiled_and_fallback_scans_agree_exactly():
    rng = np.random.default_rng(6)
    for _ in range(5):
        count = int(rng.integers(10, 300))
        n_libs = int(rng.integers(2, 8))
        vecs = _unit(rng, count, 16)
        ids = _lib_ids(rng, count, n_libs)
        sims = vecs @ vecs.T
        theta = _safe_theta(sims, rng)

        n_a = np.ones(count, dtype=np.int64)
        df_a = np.zeros(count, dtype=np.int64)
        bounds = np.searchsorted(ids, np.arange(n_libs))
        fallback.count_block(sims.copy(), ids, bounds, 0, theta, n_a, df_a)

        n_b = np.ones(count, dtype=np.int64)
        df_b = np.zeros(count, dtype=np.int64)
        stamp = np.zeros(n_libs, dtype=np.int64)
        _core.count_block(sims.copy(), ids, 0, theta, n_b, df_b, stamp)

        np.testing.assert_array_equal(n_a, n_b)
        np.testing.assert_array_equal(df_a, df_b)


@pytest.mark.skipif(_core is None, reason="compiled extension not built")
def test_compiled_and_fallback_argmax_agree_exactly():
    rng = np.random.default_rng(7)
    q = _unit(rng, 140, 16)
    k = _unit(rng, 60, 16)
    sims = q @ k.T

    best_a = np.full(60, -np.inf)
    arg_a = np.zeros(60, dtype=np.int64)
    fallback.best_match_block(sims, 37, best_a, arg_a)

    best_b = np.full(60, -np.inf)
    arg_b = np.zeros(60, dtype=np.int64)
    _core.best_match_block(sims, 37, best_b, arg_b)

    np.testing.assert_array_equal(best_a, best_b)
    np.testing.assert_array_equal(arg_a, arg_b)


def test_backend_name_is_reported():
    assert _kernels.backend in ("compiled", "numpy")
