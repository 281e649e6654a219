"""Synthetic hierarchical datasets, augmentation, and seen/unseen splitting.

Samples are drawn from a hierarchical Gaussian mixture: level-0 means at
scale sigma_0, each child mean offset from its parent at its own (smaller)
scale, and observations around the finest mean at the observation noise
scale. Features are quantized to float32 precision so dataset files
round-trip bit-exactly.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, StructuralError
from .hierarchy import LabelPath, paths_to_array


@dataclass
class SyntheticSpec:
    level_counts: tuple[int, ...] = (4, 3, 4)
    samples_per_instance: int = 8
    input_dim: int = 32
    level_sigmas: tuple[float, ...] = (1.4, 0.6, 0.4)
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.level_counts or any(c < 1 for c in self.level_counts):
            raise ConfigError("level counts must all be >= 1")
        if len(self.level_sigmas) != len(self.level_counts):
            raise ConfigError("need one dispersion scale per level")
        if any(
            b >= a for a, b in zip(self.level_sigmas, self.level_sigmas[1:])
        ):
            raise ConfigError("dispersion scales must strictly decrease with depth")
        if self.noise_sigma <= 0:
            raise ConfigError("observation noise scale must be positive")
        if self.samples_per_instance < 1 or self.input_dim < 1:
            raise ConfigError("samples_per_instance and input_dim must be >= 1")


@dataclass
class Dataset:
    features: np.ndarray
    paths: list[LabelPath]
    splits: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.features.shape[0] != len(self.paths):
            raise StructuralError("feature rows and label paths disagree")

    @property
    def level_count(self) -> int:
        return len(self.paths[0].labels)

    def labels_array(self) -> np.ndarray:
        return paths_to_array(self.paths)

    def labels_at(self, level: int) -> np.ndarray:
        """Per-sample node id at a level, unique across parents (path prefix)."""
        arr = self.labels_array()[:, : level + 1]
        _, ids = np.unique(arr, axis=0, return_inverse=True)
        return ids


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    mean_gen = rng.stream(spec.seed, "synthetic-means")
    noise_gen = rng.stream(spec.seed, "synthetic-noise")
    depth = len(spec.level_counts)

    means: dict[tuple[int, ...], np.ndarray] = {(): np.zeros(spec.input_dim)}
    for l, count in enumerate(spec.level_counts):
        for prefix in sorted(p for p in means if len(p) == l):
            for c in range(count):
                means[prefix + (c,)] = means[prefix] + spec.level_sigmas[
                    l
                ] * mean_gen.standard_normal(spec.input_dim)

    features = []
    paths = []
    sample_id = 0
    for full in itertools.product(*(range(c) for c in spec.level_counts)):
        mu = means[full]
        for _ in range(spec.samples_per_instance):
            x = mu + spec.noise_sigma * noise_gen.standard_normal(spec.input_dim)
            features.append(x)
            paths.append(LabelPath(labels=full, sample_id=sample_id))
            sample_id += 1

    features = np.asarray(features, dtype=np.float64)
    features = features.astype(np.float32).astype(np.float64)
    return Dataset(features=features, paths=paths)


def generate_skewed(
    num_categories: int = 4000,
    max_min_ratio: float = 30.0,
    input_dim: int = 32,
    category_sigma: float = 1.0,
    noise_sigma: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """Single-level dataset with geometrically skewed category sizes.

    Category sample counts follow a geometric profile from
    ``max_min_ratio`` down to 1, for the batch-sampler ablation.
    """
    if num_categories < 2:
        raise ConfigError("need at least 2 categories")
    if max_min_ratio < 1:
        raise ConfigError("max:min ratio must be >= 1")
    mean_gen = rng.stream(seed, "skewed-means")
    noise_gen = rng.stream(seed, "skewed-noise")
    exponents = np.linspace(1.0, 0.0, num_categories)
    counts = np.maximum(1, np.rint(max_min_ratio ** exponents)).astype(int)

    features = []
    paths = []
    sample_id = 0
    for cat, count in enumerate(counts):
        mu = category_sigma * mean_gen.standard_normal(input_dim)
        for _ in range(count):
            x = mu + noise_sigma * noise_gen.standard_normal(input_dim)
            features.append(x)
            paths.append(LabelPath(labels=(cat,), sample_id=sample_id))
            sample_id += 1
    features = np.asarray(features, dtype=np.float64)
    features = features.astype(np.float32).astype(np.float64)
    return Dataset(features=features, paths=paths)


def augment(
    feature_row: np.ndarray, aug_sigma: float, gen: np.random.Generator
) -> np.ndarray:
    """Vector-space augmentation: additive seeded Gaussian noise."""
    if aug_sigma < 0:
        raise ConfigError("augmentation scale must be non-negative")
    return feature_row + aug_sigma * gen.standard_normal(feature_row.shape)


def _split_side(
    dataset: Dataset,
    side_indices: np.ndarray,
    fractions: tuple[float, float, float],
    gen: np.random.Generator,
):
    """Train/val/test partition of one side, splitting within each instance."""
    labels = dataset.labels_array()
    out = {"train": [], "val": [], "test": []}
    keys = labels[side_indices]
    order = np.lexsort(keys.T[::-1])
    side_sorted = side_indices[order]
    boundaries = np.nonzero(
        np.any(np.diff(keys[order], axis=0) != 0, axis=1)
    )[0]
    start = 0
    for end in list(boundaries + 1) + [len(side_sorted)]:
        members = side_sorted[start:end].copy()
        start = end
        gen.shuffle(members)
        n = len(members)
        n_train = max(1, int(round(fractions[0] * n)))
        n_val = int(round(fractions[1] * n))
        n_val = min(n_val, n - n_train)
        out["train"].extend(members[:n_train])
        out["val"].extend(members[n_train : n_train + n_val])
        out["test"].extend(members[n_train + n_val :])
    return {k: np.sort(np.asarray(v, dtype=np.int64)) for k, v in out.items()}


def split_seen_unseen(
    dataset: Dataset,
    unseen_category_fraction: float,
    seed: int,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
) -> Dataset:
    """Category-level seen/unseen partition with per-instance sub-splits.

    No category straddles the seen/unseen boundary, and within each side
    every instance's images are divided across train/val/test so no image
    appears in more than one split.
    """
    categories = np.unique(dataset.labels_array()[:, 0])
    if len(categories) < 2:
        raise ConfigError("seen/unseen split needs at least 2 categories")
    n_unseen = int(round(unseen_category_fraction * len(categories)))
    if n_unseen < 1 or n_unseen >= len(categories):
        raise ConfigError(
            f"unseen fraction {unseen_category_fraction} leaves an empty side"
        )
    gen = rng.stream(seed, "seen-unseen-split")
    shuffled = categories.copy()
    gen.shuffle(shuffled)
    unseen_cats = set(int(c) for c in shuffled[:n_unseen])

    level0 = dataset.labels_array()[:, 0]
    unseen_mask = np.isin(level0, list(unseen_cats))
    splits: dict[str, np.ndarray] = {
        "seen": np.nonzero(~unseen_mask)[0].astype(np.int64),
        "unseen": np.nonzero(unseen_mask)[0].astype(np.int64),
    }
    for side in ("seen", "unseen"):
        side_splits = _split_side(dataset, splits[side], fractions, gen)
        for part, idx in side_splits.items():
            splits[f"{side}_{part}"] = idx
    for part in ("train", "val", "test"):
        splits[part] = np.sort(
            np.concatenate([splits[f"seen_{part}"], splits[f"unseen_{part}"]])
        )
    return Dataset(features=dataset.features, paths=dataset.paths, splits=splits)


def split_by_instance(
    dataset: Dataset,
    seed: int,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
) -> Dataset:
    """Train/val/test split only (all categories seen), instance-stratified."""
    all_idx = np.arange(len(dataset.paths), dtype=np.int64)
    gen = rng.stream(seed, "instance-split")
    splits = _split_side(dataset, all_idx, fractions, gen)
    return Dataset(
        features=dataset.features,
        paths=dataset.paths,
        splits={k: v for k, v in splits.items()},
    )
