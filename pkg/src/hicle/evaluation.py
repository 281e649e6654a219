"""Frozen-embedding evaluation: retrieval, clustering NMI, hierarchy violations.

Retrieval ranks by descending inner product with ties broken by ascending
gallery index, so reports are deterministic. NMI uses the arithmetic mean
of the two entropies as its normalizer.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels, rng
from .errors import ConfigError, StructuralError
from .hierarchy import LabelPath, paths_to_array


@dataclass
class RetrievalReport:
    topk: dict[int, float]
    map_at_r: float | None = None
    excluded_queries: int = 0
    clamped_ks: list[int] = field(default_factory=list)


@dataclass
class ClusteringReport:
    nmi_per_level: dict[str, float | None]
    excluded_categories: int = 0


@dataclass
class ViolationReport:
    violation_rate: float | None
    comparisons: int
    seed: int


def _ranked_gallery(query_emb: np.ndarray, gallery_emb: np.ndarray) -> np.ndarray:
    sims = query_emb @ gallery_emb.T
    # stable sort on -sims: ties resolve to the lower gallery index
    return np.argsort(-sims, axis=1, kind="stable")


def topk_retrieval(
    query_emb: np.ndarray,
    gallery_emb: np.ndarray,
    query_classes: np.ndarray,
    gallery_classes: np.ndarray,
    ks: Sequence[int],
) -> RetrievalReport:
    if query_emb.shape[1] != gallery_emb.shape[1]:
        raise StructuralError("query and gallery dimensions differ")
    if gallery_emb.shape[0] == 0:
        raise StructuralError("gallery is empty")
    query_classes = np.asarray(query_classes)
    gallery_classes = np.asarray(gallery_classes)
    order = _ranked_gallery(query_emb, gallery_emb)
    hits = gallery_classes[order] == query_classes[:, None]
    report = RetrievalReport(topk={})
    for k in ks:
        kk = min(k, gallery_emb.shape[0])
        if kk != k:
            report.clamped_ks.append(k)
        report.topk[k] = float(np.mean(np.any(hits[:, :kk], axis=1)))
    return report


def map_at_r(
    query_emb: np.ndarray,
    gallery_emb: np.ndarray,
    query_classes: np.ndarray,
    gallery_classes: np.ndarray,
):
    """Mean over queries of MAP@R; R is the same-class gallery count.

    Queries whose class is absent from the gallery are excluded; returns
    (value or None, excluded count).
    """
    query_classes = np.asarray(query_classes)
    gallery_classes = np.asarray(gallery_classes)
    order = _ranked_gallery(query_emb, gallery_emb)
    rel = (gallery_classes[order] == query_classes[:, None]).astype(np.float64)
    r_per_query = rel.sum(axis=1).astype(int)
    scores = []
    excluded = 0
    for q in range(query_emb.shape[0]):
        r = r_per_query[q]
        if r == 0:
            excluded += 1
            continue
        top = rel[q, :r]
        precision = np.cumsum(top) / np.arange(1, r + 1)
        scores.append(float(np.sum(precision * top) / r))
    value = float(np.mean(scores)) if scores else None
    return value, excluded


def kmeans(
    embeddings: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-8,
) -> np.ndarray:
    """Lloyd's algorithm with D^2 (k-means++) seeding, deterministic per seed."""
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if k < 1 or n < k:
        raise ConfigError(f"cannot form {k} clusters from {n} points")
    gen = rng.stream(seed, "kmeans")
    centers = np.empty((k, x.shape[1]))
    first = int(gen.integers(n))
    centers[0] = x[first]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            pick = int(gen.integers(n))
        else:
            pick = int(gen.choice(n, p=closest / total))
        centers[j] = x[pick]
        closest = np.minimum(closest, np.sum((x - centers[j]) ** 2, axis=1))

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        labels, dists = _kernels.kmeans_assign(x, centers)
        new_centers, counts = _kernels.kmeans_update(x, labels, k)
        for j in np.nonzero(counts == 0)[0]:
            farthest = int(np.argmax(dists))
            new_centers[j] = x[farthest]
            dists[farthest] = 0.0
        movement = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if movement < tol:
            break
    labels, _ = _kernels.kmeans_assign(x, centers)
    return labels


def nmi(assignments: np.ndarray, labels: np.ndarray) -> float:
    """Mutual information normalized by the mean of the two entropies (nats)."""
    assignments = np.asarray(assignments)
    labels = np.asarray(labels)
    if assignments.shape != labels.shape or assignments.ndim != 1:
        raise StructuralError("assignment and label vectors must match in length")
    n = assignments.size
    if n == 0:
        raise StructuralError("empty clustering")
    _, ai = np.unique(assignments, return_inverse=True)
    _, bi = np.unique(labels, return_inverse=True)
    contingency = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(contingency, (ai, bi), 1.0)
    pxy = contingency / n
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    nz = pxy > 0
    mi = float(np.sum(pxy[nz] * np.log(pxy[nz] / np.outer(px, py)[nz])))
    hx = -float(np.sum(px[px > 0] * np.log(px[px > 0])))
    hy = -float(np.sum(py[py > 0] * np.log(py[py > 0])))
    denom = 0.5 * (hx + hy)
    if denom <= 0:
        return 0.0
    return min(1.0, mi / denom)


def clustering_report(
    embeddings: np.ndarray, paths: Sequence[LabelPath], seed: int
) -> ClusteringReport:
    """Category-level NMI plus the mean of per-category finest-level NMIs."""
    if len(paths) != embeddings.shape[0]:
        raise StructuralError("embeddings and paths disagree on sample count")
    labels = paths_to_array(paths)
    depth = labels.shape[1]
    categories = np.unique(labels[:, 0])

    report = ClusteringReport(nmi_per_level={})
    if len(categories) < 2:
        report.nmi_per_level["category"] = None
    else:
        assignments = kmeans(embeddings, len(categories), seed)
        report.nmi_per_level["category"] = nmi(assignments, labels[:, 0])

    if depth == 1:
        report.nmi_per_level["finest_mean"] = None
        return report

    per_category = []
    excluded = 0
    for cat in categories:
        members = np.nonzero(labels[:, 0] == cat)[0]
        finest = labels[members]
        _, finest_ids = np.unique(finest, axis=0, return_inverse=True)
        n_fine = finest_ids.max() + 1
        if n_fine < 2:
            excluded += 1
            continue
        assignments = kmeans(
            embeddings[members], n_fine, rng.derive_seed(seed, f"category/{cat}")
        )
        per_category.append(nmi(assignments, finest_ids))
    report.nmi_per_level["finest_mean"] = (
        float(np.mean(per_category)) if per_category else None
    )
    report.excluded_categories = excluded
    return report


def distance_violation_rate(
    embeddings: np.ndarray,
    paths: Sequence[LabelPath],
    num_comparisons: int,
    seed: int,
) -> ViolationReport:
    """Sampled pair-of-pairs hierarchy check on embedding distances.

    Draws random pairs, keeps pair-of-pairs whose LCA levels differ, and
    counts a violation when the finer pair (deeper shared ancestry) is
    farther apart than the coarser pair.
    """
    n = embeddings.shape[0]
    if n < 4:
        raise StructuralError("need at least 4 samples")
    labels = paths_to_array(paths)
    gen = rng.stream(seed, "distance-violations")

    violations = 0
    comparisons = 0
    max_rounds = 50
    for _ in range(max_rounds):
        if comparisons >= num_comparisons:
            break
        need = 2 * (num_comparisons - comparisons) + 16
        i = gen.integers(n, size=need)
        j = gen.integers(n, size=need)
        valid = i != j
        i, j = i[valid], j[valid]
        eq = labels[i] == labels[j]
        lca = np.cumprod(eq, axis=1).sum(axis=1) - 1
        dist = np.linalg.norm(embeddings[i] - embeddings[j], axis=1)
        half = len(lca) // 2
        lu, lv = lca[:half], lca[half : 2 * half]
        du, dv = dist[:half], dist[half : 2 * half]
        keep = lu != lv
        lu, lv, du, dv = lu[keep], lv[keep], du[keep], dv[keep]
        swap = lu < lv
        du_f = np.where(swap, dv, du)  # finer pair distance
        dv_c = np.where(swap, du, dv)  # coarser pair distance
        take = min(len(du_f), num_comparisons - comparisons)
        violations += int(np.sum(du_f[:take] > dv_c[:take]))
        comparisons += take
    if comparisons == 0:
        return ViolationReport(violation_rate=None, comparisons=0, seed=seed)
    return ViolationReport(
        violation_rate=violations / comparisons, comparisons=comparisons, seed=seed
    )
