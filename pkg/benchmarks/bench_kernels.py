"""Compare the compiled aggregation scans against the numpy fallback.

Both backends share the BLAS similarity products (an earlier hand-written
matmul lost to BLAS ~20x and was dropped); the compiled side replaces the
per-block counting and argmax scans. The similarity blocks are
precomputed once here so the scans are measured in isolation, then the
end-to-end stage time is shown for context.

    python3 benchmarks/bench_kernels.py [--dim 768] [--repeat 5]
"""
import argparse
import time

import numpy as np

from libsift._kernels import _BLOCK, backend, fallback, theta_counts

try:
    from libsift._kernels import _core
except ImportError:
    _core = None


def _unit_rows(rng, n, dim):
    m = rng.standard_normal((n, dim))
    return np.ascontiguousarray(m / np.linalg.norm(m, axis=1, keepdims=True))


def _blocks(queries, keys):
    kt = keys.T
    return [
        (start, queries[start : min(start + _BLOCK, queries.shape[0])] @ kt)
        for start in range(0, queries.shape[0], _BLOCK)
    ]


def timed(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=768)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--features", type=int, default=6000)
    ap.add_argument("--libraries", type=int, default=60)
    args = ap.parse_args()

    print("active pipeline backend: %s" % backend)
    if _core is None:
        print("compiled extension not built; nothing to compare")
        return
    rng = np.random.default_rng(args.seed)

    feats = _unit_rows(rng, args.features, args.dim)
    lib_ids = np.sort(rng.integers(0, args.libraries, args.features)).astype(np.int64)
    lib_ids[: args.libraries] = np.arange(args.libraries)
    lib_ids = np.sort(lib_ids)
    queries = _unit_rows(rng, 2000, args.dim)
    keys = _unit_rows(rng, 5000, args.dim)

    count_blocks = _blocks(feats, feats)
    match_blocks = _blocks(queries, keys)
    bounds = np.searchsorted(lib_ids, np.arange(args.libraries))

    def count_pure():
        n = np.ones(args.features, dtype=np.int64)
        df = np.zeros(args.features, dtype=np.int64)
        for start, sims in count_blocks:
            fallback.count_block(sims, lib_ids, bounds, start, 0.8, n, df)
        return n, df

    def count_compiled():
        n = np.ones(args.features, dtype=np.int64)
        df = np.zeros(args.features, dtype=np.int64)
        stamp = np.zeros(args.libraries, dtype=np.int64)
        for start, sims in count_blocks:
            _core.count_block(sims, lib_ids, start, 0.8, n, df, stamp)
        return n, df

    def match_with(scan):
        def run():
            best = np.full(keys.shape[0], -np.inf, dtype=np.float64)
            arg = np.zeros(keys.shape[0], dtype=np.int64)
            for start, sims in match_blocks:
                scan(sims, start, best, arg)
            return best, arg
        return run

    cases = [
        ("count scan %d feats, %d libs" % (args.features, args.libraries),
         count_pure, count_compiled),
        ("argmax scan 2000x5000",
         match_with(fallback.best_match_block), match_with(_core.best_match_block)),
    ]

    print("\nscan stage only (similarity blocks precomputed):")
    print("%-34s %12s %12s %8s" % ("case", "numpy", "compiled", "speedup"))
    for label, pure, compiled in cases:
        t_np, out_np = timed(pure, args.repeat)
        t_c, out_c = timed(compiled, args.repeat)
        for a, b in zip(out_np, out_c):
            np.testing.assert_array_equal(np.asarray(a), np.asarray(b))
        print("%-34s %10.2fms %10.2fms %7.2fx"
              % (label, t_np * 1e3, t_c * 1e3, t_np / t_c))

    t_full, _ = timed(lambda: theta_counts(feats, lib_ids, args.libraries, 0.8),
                      args.repeat)
    t_scan, _ = timed(count_compiled if backend == "compiled" else count_pure,
                      args.repeat)
    print("\nend-to-end theta_counts (%s backend): %.2fms"
          % (backend, t_full * 1e3))
    print("scan portion %.2fms; the rest is the BLAS similarity product"
          % (t_scan * 1e3))


if __name__ == "__main__":
    main()
