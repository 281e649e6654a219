"""Time the accelerated kernels against their pure-numpy fallbacks.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 5]

The accelerated variants are used only when numba is installed and
``HICLE_NO_NUMBA`` is unset; this script times both code paths directly,
so it reports meaningful numbers either way (the njit columns show "n/a"
without numba).
"""

import argparse
import time

import numpy as np

from hicle import _kernels


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def fmt(seconds):
    if seconds is None:
        return "     n/a"
    return f"{seconds * 1e3:8.2f}"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    gen = np.random.default_rng(0)

    cases = []

    for n, depth in [(256, 4), (1024, 4), (2048, 6)]:
        paths = gen.integers(0, 8, size=(n, depth)).astype(np.int64)
        cases.append(
            (
                f"lca_matrix      n={n:5d} depth={depth}",
                lambda p=paths: _kernels.lca_matrix_numpy(p),
                (lambda p=paths: _kernels.lca_matrix_numba(p))
                if _kernels.NUMBA_ENABLED
                else None,
            )
        )

    for n, d, k in [(2000, 16, 12), (10000, 32, 48)]:
        x = gen.standard_normal((n, d))
        centers = gen.standard_normal((k, d))
        labels = gen.integers(0, k, size=n)
        cases.append(
            (
                f"kmeans_assign   n={n:5d} d={d} k={k}",
                lambda a=x, c=centers: _kernels.kmeans_assign_numpy(a, c),
                (lambda a=x, c=centers: _kernels.kmeans_assign_numba(a, c))
                if _kernels.NUMBA_ENABLED
                else None,
            )
        )
        cases.append(
            (
                f"kmeans_update   n={n:5d} d={d} k={k}",
                lambda a=x, l=labels, kk=k: _kernels.kmeans_update_numpy(a, l, kk),
                (lambda a=x, l=labels, kk=k: _kernels.kmeans_update_numba(a, l, kk))
                if _kernels.NUMBA_ENABLED
                else None,
            )
        )

    print(f"numba available: {_kernels.NUMBA_ENABLED}")
    print(f"{'case':38s} {'numpy ms':>8s} {'njit ms':>8s} {'speedup':>8s}")
    for name, numpy_fn, numba_fn in cases:
        if numba_fn is not None:
            numba_fn()  # trigger compilation outside the timed region
        t_np = best_of(numpy_fn, args.repeats)
        t_nb = best_of(numba_fn, args.repeats) if numba_fn else None
        speedup = f"{t_np / t_nb:7.1f}x" if t_nb else "     n/a"
        print(f"{name:38s} {fmt(t_np)} {fmt(t_nb)} {speedup}")


if __name__ == "__main__":
    main()
