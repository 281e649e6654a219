"""Epoch planning: batches with per-anchor positives at every feasible level.

The hierarchical strategy walks a seeded shuffle of the dataset. Each
anchor pulls one unused companion whose LCA with the anchor is exactly l,
for l from the finest level down to 0; exhausted sibling subtrees are
skipped so no index is ever reused within an epoch. Anchor groups never
straddle batch boundaries.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .errors import ConfigError, StructuralError
from .hierarchy import HierarchyTree, LabelPath, paths_to_array

STRATEGIES = ("hierarchical", "category_level", "random")


@dataclass
class SamplerConfig:
    batch_size: int
    strategy: str = "hierarchical"
    seed: int = 0
    views_per_sample: int = 2

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown sampler strategy {self.strategy!r}")
        if self.views_per_sample < 1:
            raise ConfigError("views_per_sample must be at least 1")


@dataclass
class EpochPlan:
    batches: list[list[int]]
    views_per_sample: int
    groups: list[list[int]] = field(default_factory=list, repr=False)

    def all_indices(self) -> list[int]:
        return [i for b in self.batches for i in b]


class _PrefixPools:
    """Unused-index sets keyed by path prefix, one map per prefix length."""

    def __init__(self, labels: np.ndarray):
        depth = labels.shape[1]
        self.depth = depth
        self.pools: list[dict[tuple[int, ...], set[int]]] = [
            {} for _ in range(depth + 1)
        ]
        for idx, row in enumerate(labels):
            path = tuple(int(v) for v in row)
            for k in range(1, depth + 1):
                self.pools[k].setdefault(path[:k], set()).add(idx)
        self._paths = [tuple(int(v) for v in row) for row in labels]

    def consume(self, idx: int) -> None:
        path = self._paths[idx]
        for k in range(1, self.depth + 1):
            self.pools[k][path[:k]].discard(idx)

    def exact_lca_candidates(self, idx: int, level: int) -> list[int]:
        """Unused indices agreeing with idx through level and diverging after."""
        path = self._paths[idx]
        shared = self.pools[level + 1].get(path[: level + 1], set())
        if level + 1 < self.depth:
            finer = self.pools[level + 2].get(path[: level + 2], set())
            cands = shared - finer
        else:
            cands = shared
        return sorted(cands)

    def at_least_lca_candidates(self, idx: int, level: int) -> list[int]:
        path = self._paths[idx]
        return sorted(self.pools[level + 1].get(path[: level + 1], set()))


def _pack_groups(groups: list[list[int]], batch_size: int) -> list[list[int]]:
    batches: list[list[int]] = []
    current: list[int] = []
    for group in groups:
        if current and len(current) + len(group) > batch_size:
            batches.append(current)
            current = []
        current.extend(group)
    if current:
        # A 1-sample tail cannot form any pair; merge it into the previous batch.
        if len(current) < 2 and batches:
            batches[-1].extend(current)
        else:
            batches.append(current)
    return batches


def plan_epoch(
    dataset_labels: Sequence[LabelPath] | np.ndarray,
    tree: HierarchyTree | None,
    cfg: SamplerConfig,
) -> EpochPlan:
    """Deterministic epoch plan; every dataset index appears at most once."""
    if isinstance(dataset_labels, np.ndarray):
        labels = np.asarray(dataset_labels, dtype=np.int64)
    else:
        labels = paths_to_array(dataset_labels)
    n, depth = labels.shape
    if n == 0:
        raise StructuralError("dataset is empty")
    if tree is not None and tree.level_count != depth:
        raise StructuralError("tree level count disagrees with the labels")
    if cfg.strategy == "hierarchical" and cfg.batch_size < 2 * (depth + 1):
        raise ConfigError(
            f"hierarchical sampling needs batch_size >= {2 * (depth + 1)}"
        )

    gen = rng.stream(cfg.seed, f"sampler/{cfg.strategy}")
    order = gen.permutation(n)

    if cfg.strategy == "random":
        batches = [
            list(map(int, order[i : i + cfg.batch_size]))
            for i in range(0, n, cfg.batch_size)
        ]
        if batches and len(batches[-1]) < 2 and len(batches) > 1:
            batches[-2].extend(batches.pop())
        return EpochPlan(batches=batches, views_per_sample=cfg.views_per_sample)

    pools = _PrefixPools(labels)
    used = np.zeros(n, dtype=bool)
    groups: list[list[int]] = []
    for anchor in order:
        anchor = int(anchor)
        if used[anchor]:
            continue
        used[anchor] = True
        pools.consume(anchor)
        group = [anchor]
        if cfg.strategy == "hierarchical":
            levels = range(depth - 1, -1, -1)
        else:  # category_level: one companion sharing the coarsest label
            levels = ()
            cands = pools.at_least_lca_candidates(anchor, 0)
            if cands:
                pick = int(cands[gen.integers(len(cands))])
                used[pick] = True
                pools.consume(pick)
                group.append(pick)
        for level in levels:
            cands = pools.exact_lca_candidates(anchor, level)
            if not cands:
                continue
            pick = int(cands[gen.integers(len(cands))])
            used[pick] = True
            pools.consume(pick)
            group.append(pick)
        groups.append(group)

    plan = EpochPlan(
        batches=_pack_groups(groups, cfg.batch_size),
        views_per_sample=cfg.views_per_sample,
    )
    plan.groups = groups
    return plan
