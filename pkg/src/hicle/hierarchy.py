"""Label taxonomy: paths, the tree, LCA levels and per-level pairing masks.

Level 0 is the coarsest label and level L-1 the finest. Two paths denote
the same node at level l iff they agree on every entry 0..l, so label ids
only need to be unique among siblings.
"""

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateBatchError, StructuralError

POSITIVES_MODES = ("cumulative", "exact-lca")


@dataclass(frozen=True)
class LabelPath:
    """One sample's label ids from coarsest to finest, plus its image id."""

    labels: tuple[int, ...]
    sample_id: int

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))
        if len(self.labels) < 1:
            raise StructuralError("label path must have at least one level")
        if any(v < 0 for v in self.labels) or self.sample_id < 0:
            raise StructuralError("label ids and sample ids must be non-negative")


@dataclass
class HierarchyTree:
    """Materialized label tree. Node 0 is a virtual root at level -1."""

    level_count: int
    parents: dict[int, int]          # node id -> parent node id
    levels: dict[int, int]           # node id -> level (root: -1)
    children_index: dict[int, list[int]]
    leaf_index: dict[int, int]       # sample_id -> node at level L-1
    node_of_prefix: dict[tuple[int, ...], int] = field(repr=False, default_factory=dict)

    def nodes_at_level(self, level: int) -> list[int]:
        return [n for n, l in self.levels.items() if l == level]


def build_tree(paths: Iterable[LabelPath]) -> HierarchyTree:
    """Build the taxonomy tree from label paths.

    Order-independent: the node set is the set of distinct path prefixes.
    """
    paths = list(paths)
    if not paths:
        raise StructuralError("cannot build a tree from an empty path collection")
    depth = len(paths[0].labels)
    for p in paths:
        if len(p.labels) != depth:
            raise StructuralError(
                f"inconsistent path lengths: expected {depth}, got {len(p.labels)}"
            )

    node_of_prefix: dict[tuple[int, ...], int] = {(): 0}
    parents = {0: 0}
    levels = {0: -1}
    children_index: dict[int, list[int]] = {0: []}
    leaf_index: dict[int, int] = {}

    for p in sorted(paths, key=lambda q: (q.labels, q.sample_id)):
        for l in range(depth):
            prefix = p.labels[: l + 1]
            if prefix not in node_of_prefix:
                node = len(node_of_prefix)
                parent = node_of_prefix[prefix[:-1]]
                node_of_prefix[prefix] = node
                parents[node] = parent
                levels[node] = l
                children_index[node] = []
                children_index[parent].append(node)
        leaf_index[p.sample_id] = node_of_prefix[p.labels]

    return HierarchyTree(
        level_count=depth,
        parents=parents,
        levels=levels,
        children_index=children_index,
        leaf_index=leaf_index,
        node_of_prefix=node_of_prefix,
    )


def lca_level(a: LabelPath, b: LabelPath) -> int:
    """Deepest level on which the two paths agree; -1 if they differ at level 0."""
    if len(a.labels) != len(b.labels):
        raise StructuralError("label paths have different lengths")
    level = -1
    for l, (x, y) in enumerate(zip(a.labels, b.labels)):
        if x != y:
            break
        level = l
    return level


def paths_to_array(
    paths: Sequence[LabelPath], instance_level: bool = False
) -> np.ndarray:
    """Stack label paths into an int matrix, optionally appending sample ids."""
    depth = len(paths[0].labels)
    for p in paths:
        if len(p.labels) != depth:
            raise StructuralError("label paths have different lengths")
    rows = [p.labels + ((p.sample_id,) if instance_level else ()) for p in paths]
    return np.asarray(rows, dtype=np.int64)


@dataclass
class PairingTensor:
    """Per-level positive-pair masks for one batch.

    ``lca`` is symmetric with diagonal ``level_count - 1`` (the instance
    level when enabled). ``per_level_positive[l]`` has a false diagonal;
    cumulative mode marks pairs with lca >= l, exact-lca mode pairs with
    lca == l.
    """

    lca: np.ndarray
    per_level_positive: np.ndarray  # (level_count, N, N) bool
    mode: str
    level_count: int


def pairing_tensor(
    batch_paths: Sequence[LabelPath],
    mode: str = "cumulative",
    instance_level: bool = True,
) -> PairingTensor:
    if mode not in POSITIVES_MODES:
        raise StructuralError(f"unknown positives mode {mode!r}")
    n = len(batch_paths)
    if n < 2:
        raise DegenerateBatchError("pairing needs a batch of at least 2 samples")

    arr = paths_to_array(batch_paths, instance_level=instance_level)
    lca = _kernels.lca_matrix(arr)
    level_count = arr.shape[1]

    off_diag = ~np.eye(n, dtype=bool)
    per_level = np.empty((level_count, n, n), dtype=bool)
    for l in range(level_count):
        if mode == "cumulative":
            per_level[l] = (lca >= l) & off_diag
        else:
            per_level[l] = (lca == l) & off_diag

    return PairingTensor(
        lca=lca, per_level_positive=per_level, mode=mode, level_count=level_count
    )
