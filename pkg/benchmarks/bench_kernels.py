"""Time the two hot kernels on both implementation paths.

The package ships each kernel twice: a numba @njit version and a
numpy/scipy fallback (selected at import time via COMMSENT_NO_NUMBA).
This script times both on synthetic workloads of configurable size and
checks they produce identical results, so the fallback never drifts.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --tokens 5000000 --nodes 20000
"""

import argparse
import time

import numpy as np
from scipy import sparse

from commsent import _kernels


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _pair_matrix(rows, cols, vocab):
    data = np.ones(len(rows), dtype=np.int64)
    return sparse.coo_matrix((data, (rows, cols)), shape=(vocab, vocab)).tocsr()


def bench_cooccurrence(args, rng):
    ids = rng.integers(0, args.vocab, size=args.tokens).astype(np.int32)
    # sprinkle dummy separators the way real streams carry them
    n_gaps = args.tokens // 200
    gap_at = rng.integers(0, args.tokens, size=n_gaps)
    ids[gap_at] = -1

    t_np, (r_np, c_np) = _time(
        lambda: _kernels._cooc_pairs_numpy(ids, args.window), args.repeat
    )
    print(f"cooccurrence numpy  {t_np:8.3f}s  ({len(r_np):,} pairs)")

    if not _kernels.HAS_NUMBA:
        print("cooccurrence numba    (numba not installed)")
        return

    window = np.int64(args.window)
    _kernels._cooc_pairs_njit(ids[:64], window)  # compile outside the clock
    t_nb, (r_nb, c_nb) = _time(
        lambda: _kernels._cooc_pairs_njit(ids, window), args.repeat
    )
    same = (
        _pair_matrix(r_np, c_np, args.vocab) != _pair_matrix(r_nb, c_nb, args.vocab)
    ).nnz == 0
    print(
        f"cooccurrence numba  {t_nb:8.3f}s  "
        f"(speedup {t_np / t_nb:4.1f}x, results equal: {same})"
    )
    if not same:
        raise SystemExit("kernel paths disagree on co-occurrence counts")


def _random_transition(rng, n, knn):
    cols = np.vstack([rng.choice(n, size=knn, replace=False) for _ in range(n)])
    rows = np.repeat(np.arange(n), knn)
    adj = sparse.csr_matrix(
        (rng.random(n * knn) + 0.1, (rows, cols.ravel())), shape=(n, n)
    )
    adj = adj.maximum(adj.T)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = sparse.diags(1.0 / np.sqrt(deg))
    return (inv @ adj @ inv).tocsr()


def bench_walk(args, rng):
    t = _random_transition(rng, args.nodes, args.knn)
    s = np.zeros(args.nodes)
    s[rng.choice(args.nodes, size=10, replace=False)] = 0.1

    run_np = lambda: _kernels._walk_numpy(
        t.indptr, t.indices, t.data, s, 0.9, 1e-6, 5000
    )
    t_np, (p_np, it_np, _) = _time(run_np, args.repeat)
    print(f"walk         numpy  {t_np:8.3f}s  ({it_np} iterations)")

    if not _kernels.HAS_NUMBA:
        print("walk         numba    (numba not installed)")
        return

    data = np.ascontiguousarray(t.data, dtype=np.float64)
    run_nb = lambda: _kernels._walk_njit(
        t.indptr, t.indices, data, s, 0.9, 1e-6, 5000
    )
    run_nb()  # compile outside the clock
    t_nb, (p_nb, it_nb, _) = _time(run_nb, args.repeat)
    same = it_np == it_nb and np.array_equal(p_np, p_nb)
    print(
        f"walk         numba  {t_nb:8.3f}s  "
        f"(speedup {t_np / t_nb:4.1f}x, results equal: {same})"
    )
    if not same:
        raise SystemExit("kernel paths disagree on walk results")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tokens", type=int, default=2_000_000)
    ap.add_argument("--vocab", type=int, default=20_000)
    ap.add_argument("--window", type=int, default=4)
    ap.add_argument("--nodes", type=int, default=5_000)
    ap.add_argument("--knn", type=int, default=25)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(
        f"tokens={args.tokens:,} vocab={args.vocab:,} window={args.window} | "
        f"nodes={args.nodes:,} knn={args.knn} | best of {args.repeat}"
    )
    bench_cooccurrence(args, rng)
    bench_walk(args, rng)


if __name__ == "__main__":
    main()
