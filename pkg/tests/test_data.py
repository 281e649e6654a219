"""Synthetic generators, augmentation, splits, and the file formats."""

import numpy as np
import pytest

from hicle.data import (
    Dataset,
    SyntheticSpec,
    augment,
    generate_skewed,
    generate_synthetic,
    split_by_instance,
    split_seen_unseen,
)
from hicle.errors import ConfigError, FormatError, StructuralError
from hicle.hierarchy import LabelPath
from hicle.io import (
    read_checkpoint_tensors,
    read_features,
    read_labels_csv,
    read_split_manifest,
    write_checkpoint_tensors,
    write_features,
    write_labels_csv,
    write_split_manifest,
)
from hicle.rng import derive_seed, stream


class TestRngStreams:
    def test_tagged_streams_are_independent(self):
        a = stream(0, "alpha").standard_normal(4)
        b = stream(0, "beta").standard_normal(4)
        assert not np.array_equal(a, b)

    def test_reproducible(self):
        assert np.array_equal(
            stream(7, "x").standard_normal(4), stream(7, "x").standard_normal(4)
        )

    def test_derive_seed_stable(self):
        assert derive_seed(1, "tag") == derive_seed(1, "tag")
        assert derive_seed(1, "tag") != derive_seed(2, "tag")
        assert derive_seed(1, "tag") != derive_seed(1, "other")


class TestSyntheticSpec:
    def test_defaults_are_the_three_level_grid(self):
        spec = SyntheticSpec()
        assert spec.level_counts == (4, 3, 4)
        assert len(spec.level_sigmas) == 3

    def test_validation(self):
        with pytest.raises(ConfigError):
            SyntheticSpec(level_counts=())
        with pytest.raises(ConfigError):
            SyntheticSpec(level_sigmas=(1.0,))
        with pytest.raises(ConfigError):
            SyntheticSpec(level_sigmas=(0.4, 0.6, 1.0))  # must decrease
        with pytest.raises(ConfigError):
            SyntheticSpec(noise_sigma=0.0)


class TestGenerateSynthetic:
    def test_shapes_and_paths(self):
        spec = SyntheticSpec(
            level_counts=(2, 3), samples_per_instance=4, input_dim=5,
            level_sigmas=(1.0, 0.5),
        )
        ds = generate_synthetic(spec)
        assert ds.features.shape == (2 * 3 * 4, 5)
        assert ds.level_count == 2
        # every instance appears samples_per_instance times
        labels = ds.labels_array()
        _, counts = np.unique(labels, axis=0, return_counts=True)
        assert (counts == 4).all()
        # sample ids are unique
        assert len({p.sample_id for p in ds.paths}) == len(ds.paths)

    def test_deterministic_per_seed(self):
        a = generate_synthetic(SyntheticSpec(seed=3, samples_per_instance=2))
        b = generate_synthetic(SyntheticSpec(seed=3, samples_per_instance=2))
        assert np.array_equal(a.features, b.features)

    def test_features_survive_float32_round_trip(self):
        ds = generate_synthetic(SyntheticSpec(samples_per_instance=2))
        assert np.array_equal(
            ds.features, ds.features.astype(np.float32).astype(np.float64)
        )

    def test_within_instance_variance_matches_noise_scale(self):
        # observations are mu + noise_sigma * N(0, I); the per-instance
        # variance estimate should land near noise_sigma^2
        spec = SyntheticSpec(
            level_counts=(2, 2), samples_per_instance=200, input_dim=16,
            level_sigmas=(1.0, 0.5), noise_sigma=0.7, seed=0,
        )
        ds = generate_synthetic(spec)
        labels = ds.labels_array()
        variances = []
        for row in np.unique(labels, axis=0):
            members = np.all(labels == row, axis=1)
            variances.append(float(np.var(ds.features[members], axis=0).mean()))
        assert np.mean(variances) == pytest.approx(0.49, rel=0.1)

    def test_hierarchical_means_cluster_by_category(self):
        # category centers are far relative to within-category spread when
        # sigma_0 dominates
        spec = SyntheticSpec(
            level_counts=(3, 2), samples_per_instance=50, input_dim=32,
            level_sigmas=(3.0, 0.3), noise_sigma=0.3, seed=1,
        )
        ds = generate_synthetic(spec)
        labels = ds.labels_array()[:, 0]
        centers = np.stack(
            [ds.features[labels == c].mean(axis=0) for c in range(3)]
        )
        between = np.linalg.norm(
            centers[:, None] - centers[None, :], axis=-1
        )[np.triu_indices(3, 1)]
        within = np.mean(
            [
                np.linalg.norm(ds.features[labels == c] - centers[c], axis=1).mean()
                for c in range(3)
            ]
        )
        assert between.min() > within


class TestGenerateSkewed:
    def test_counts_follow_geometric_profile(self):
        ds = generate_skewed(num_categories=100, max_min_ratio=30.0, seed=0)
        labels = ds.labels_array()[:, 0]
        counts = np.bincount(labels)
        assert counts[0] == 30
        assert counts[-1] == 1
        assert (np.diff(counts) <= 0).all()

    def test_single_level(self):
        ds = generate_skewed(num_categories=10, seed=0)
        assert ds.level_count == 1

    def test_validation(self):
        with pytest.raises(ConfigError):
            generate_skewed(num_categories=1)
        with pytest.raises(ConfigError):
            generate_skewed(num_categories=5, max_min_ratio=0.5)


class TestAugment:
    def test_zero_sigma_is_identity(self, gen):
        x = gen.standard_normal(8)
        assert np.array_equal(augment(x, 0.0, gen), x)

    def test_noise_scale(self):
        g = stream(0, "augtest")
        x = np.zeros(10_000)
        y = augment(x, 0.3, g)
        assert np.std(y) == pytest.approx(0.3, rel=0.05)

    def test_negative_sigma_rejected(self, gen):
        with pytest.raises(ConfigError):
            augment(np.zeros(3), -0.1, gen)


class TestSplits:
    def test_instance_split_partitions_everything(self):
        ds = split_by_instance(
            generate_synthetic(SyntheticSpec(samples_per_instance=10)), seed=0
        )
        all_idx = np.concatenate([ds.splits[k] for k in ("train", "val", "test")])
        assert sorted(all_idx.tolist()) == list(range(len(ds.paths)))

    def test_instance_split_fractions(self):
        ds = split_by_instance(
            generate_synthetic(SyntheticSpec(samples_per_instance=10)), seed=0
        )
        labels = ds.labels_array()
        n_instances = len(np.unique(labels, axis=0))
        assert len(ds.splits["train"]) == 6 * n_instances
        assert len(ds.splits["val"]) == 2 * n_instances
        assert len(ds.splits["test"]) == 2 * n_instances

    def test_every_instance_in_every_split(self):
        ds = split_by_instance(
            generate_synthetic(SyntheticSpec(samples_per_instance=10)), seed=0
        )
        labels = ds.labels_array()
        total = len(np.unique(labels, axis=0))
        for part in ("train", "val", "test"):
            assert len(np.unique(labels[ds.splits[part]], axis=0)) == total

    def test_seen_unseen_categories_disjoint(self):
        ds = split_seen_unseen(
            generate_synthetic(SyntheticSpec(samples_per_instance=4)),
            unseen_category_fraction=0.25,
            seed=0,
        )
        seen_cats = set(ds.labels_array()[ds.splits["seen"], 0])
        unseen_cats = set(ds.labels_array()[ds.splits["unseen"], 0])
        assert not (seen_cats & unseen_cats)
        assert len(unseen_cats) == 1  # 25% of 4 categories

    def test_seen_unseen_no_sample_in_two_parts(self):
        ds = split_seen_unseen(
            generate_synthetic(SyntheticSpec(samples_per_instance=4)),
            unseen_category_fraction=0.25,
            seed=0,
        )
        parts = [
            ds.splits[f"{side}_{part}"]
            for side in ("seen", "unseen")
            for part in ("train", "val", "test")
        ]
        flat = np.concatenate(parts)
        assert len(flat) == len(np.unique(flat)) == len(ds.paths)

    def test_seen_unseen_validation(self):
        ds = generate_synthetic(SyntheticSpec(samples_per_instance=2))
        with pytest.raises(ConfigError):
            split_seen_unseen(ds, unseen_category_fraction=0.0, seed=0)
        with pytest.raises(ConfigError):
            split_seen_unseen(ds, unseen_category_fraction=1.0, seed=0)

    def test_dataset_shape_mismatch(self):
        with pytest.raises(StructuralError):
            Dataset(features=np.zeros((2, 3)), paths=[LabelPath((0,), 0)])


class TestFileFormats:
    def test_features_round_trip(self, gen, tmp_path):
        x = gen.standard_normal((7, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "features.bin"
        write_features(path, x)
        assert np.array_equal(read_features(path), x)

    def test_features_header_layout(self, gen, tmp_path):
        path = tmp_path / "features.bin"
        write_features(path, np.zeros((2, 3), dtype=np.float32))
        blob = path.read_bytes()
        assert blob[:4] == b"HCB1"
        assert int.from_bytes(blob[4:8], "little") == 2
        assert int.from_bytes(blob[8:12], "little") == 3
        assert len(blob) == 12 + 4 * 6

    def test_features_bad_magic_offset(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 8)
        with pytest.raises(FormatError) as err:
            read_features(path)
        assert err.value.offset == 0

    def test_features_truncated_payload(self, gen, tmp_path):
        path = tmp_path / "features.bin"
        write_features(path, gen.standard_normal((4, 4)))
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(FormatError):
            read_features(path)

    def test_checkpoint_round_trip(self, gen, tmp_path):
        tensors = [gen.standard_normal((3, 4)), gen.standard_normal((1, 4))]
        path = tmp_path / "ckpt.bin"
        write_checkpoint_tensors(path, tensors)
        loaded = read_checkpoint_tensors(path)
        for a, b in zip(tensors, loaded):
            assert np.array_equal(np.atleast_2d(a), b)

    def test_checkpoint_trailing_bytes(self, gen, tmp_path):
        path = tmp_path / "ckpt.bin"
        write_checkpoint_tensors(path, [gen.standard_normal((2, 2))])
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            read_checkpoint_tensors(path)

    def test_labels_round_trip(self, tmp_path):
        paths = [LabelPath((0, 2), 0), LabelPath((1, 0), 1)]
        f = tmp_path / "labels.csv"
        write_labels_csv(f, paths)
        assert read_labels_csv(f) == paths
        header = f.read_text().splitlines()[0]
        assert header == "id,level_0,level_1"

    def test_labels_bad_header(self, tmp_path):
        f = tmp_path / "labels.csv"
        f.write_text("sample,cat\n0,1\n")
        with pytest.raises(FormatError):
            read_labels_csv(f)

    def test_labels_bad_value(self, tmp_path):
        f = tmp_path / "labels.csv"
        f.write_text("id,level_0\n0,banana\n")
        with pytest.raises(FormatError):
            read_labels_csv(f)

    def test_split_manifest_round_trip(self, tmp_path):
        splits = {"train": np.array([0, 2]), "test": np.array([1])}
        f = tmp_path / "splits.json"
        write_split_manifest(f, splits)
        loaded = read_split_manifest(f)
        assert set(loaded) == {"train", "test"}
        assert np.array_equal(loaded["train"], splits["train"])

    def test_writes_are_atomic_no_temp_left_behind(self, gen, tmp_path):
        write_features(tmp_path / "a.bin", gen.standard_normal((2, 2)))
        leftovers = [p for p in tmp_path.iterdir() if p.name != "a.bin"]
        assert leftovers == []
