"""Hot numeric kernels with numba acceleration and pure-numpy fallbacks.

Setting the environment variable ``HICLE_NO_NUMBA`` (to any non-empty
value) before import forces the numpy path; so does an absent numba
install. ``benchmarks/bench_kernels.py`` times both variants.
"""

import os

import numpy as np


def _detect_numba() -> bool:
    if os.environ.get("HICLE_NO_NUMBA"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _detect_numba()


# ---------------------------------------------------------------------------
# LCA matrix: entry (i, j) is the deepest level on which label paths i and j
# agree on every column 0..l, or -1 if they already differ at level 0.
# ---------------------------------------------------------------------------

def lca_matrix_numpy(paths: np.ndarray) -> np.ndarray:
    paths = np.ascontiguousarray(paths, dtype=np.int64)
    eq = paths[:, None, :] == paths[None, :, :]
    agree = np.cumprod(eq, axis=2)
    return agree.sum(axis=2).astype(np.int64) - 1


def _lca_matrix_loops(paths):
    n, depth = paths.shape
    out = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        out[i, i] = depth - 1
        for j in range(i + 1, n):
            lca = -1
            for l in range(depth):
                if paths[i, l] != paths[j, l]:
                    break
                lca = l
            out[i, j] = lca
            out[j, i] = lca
    return out


# ---------------------------------------------------------------------------
# K-means inner steps (Lloyd iteration).
# ---------------------------------------------------------------------------

def kmeans_assign_numpy(x: np.ndarray, centers: np.ndarray):
    """Nearest center per row; returns (labels, per-point squared distance)."""
    sq = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * x @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    labels = np.argmin(sq, axis=1)
    best = np.maximum(sq[np.arange(x.shape[0]), labels], 0.0)
    return labels, best


def _kmeans_assign_loops(x, centers):
    n, d = x.shape
    k = centers.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for i in range(n):
        bd = np.inf
        bj = 0
        for j in range(k):
            dist = 0.0
            for c in range(d):
                diff = x[i, c] - centers[j, c]
                dist += diff * diff
            if dist < bd:
                bd = dist
                bj = j
        labels[i] = bj
        best[i] = bd
    return labels, best


def kmeans_update_numpy(x: np.ndarray, labels: np.ndarray, k: int):
    """Cluster means and member counts for the update step."""
    d = x.shape[1]
    sums = np.zeros((k, d), dtype=np.float64)
    np.add.at(sums, labels, x)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    centers = sums.copy()
    nonzero = counts > 0
    centers[nonzero] /= counts[nonzero, None]
    return centers, counts


def _kmeans_update_loops(x, labels, k):
    n, d = x.shape
    centers = np.zeros((k, d), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        j = labels[i]
        counts[j] += 1
        for c in range(d):
            centers[j, c] += x[i, c]
    for j in range(k):
        if counts[j] > 0:
            for c in range(d):
                centers[j, c] /= counts[j]
    return centers, counts


if NUMBA_ENABLED:
    from numba import njit

    lca_matrix_numba = njit(cache=True)(_lca_matrix_loops)
    kmeans_assign_numba = njit(cache=True)(_kmeans_assign_loops)
    kmeans_update_numba = njit(cache=True)(_kmeans_update_loops)

    def lca_matrix(paths: np.ndarray) -> np.ndarray:
        return lca_matrix_numba(np.ascontiguousarray(paths, dtype=np.int64))

    def kmeans_assign(x, centers):
        return kmeans_assign_numba(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(centers, dtype=np.float64),
        )

    def kmeans_update(x, labels, k):
        return kmeans_update_numba(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(labels, dtype=np.int64),
            k,
        )
else:
    lca_matrix = lca_matrix_numpy
    kmeans_assign = kmeans_assign_numpy
    kmeans_update = kmeans_update_numpy
