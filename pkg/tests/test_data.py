"""Dataset loading: CIFAR binary layout parsing, blobs generation, and the
three-track label invariants."""

import numpy as np
import pytest

from labelrefinery.data import (BlobsSpec, LabeledImageDataset, LabelOracle,
                                load_cifar, load_dataset, make_blobs)
from labelrefinery.exceptions import ConfigError, IngestionError


def write_cifar10_file(path, labels, fill):
    """Official layout: each record is 1 label byte + 1024 R + 1024 G + 1024 B."""
    records = []
    for lab, val in zip(labels, fill):
        rec = np.empty(3073, dtype=np.uint8)
        rec[0] = lab
        rec[1:1025] = val          # red plane
        rec[1025:2049] = val + 1   # green plane
        rec[2049:] = val + 2       # blue plane
        records.append(rec)
    np.concatenate(records).tofile(path)


class TestCifarLoader:
    def make_tree(self, root, per_file=4):
        labels = np.arange(per_file) % 10
        fill = np.arange(per_file) * 10
        for i in range(1, 6):
            write_cifar10_file(root / f"data_batch_{i}.bin", labels, fill)
        write_cifar10_file(root / "test_batch.bin", labels, fill)

    def test_train_split_concatenates_batches(self, tmp_path):
        self.make_tree(tmp_path)
        ds = load_cifar(str(tmp_path), "cifar10", "train")
        assert len(ds) == 20
        assert ds.num_classes == 10
        assert ds.image_shape == (32, 32, 3)

    def test_pixel_planes_map_to_channels(self, tmp_path):
        self.make_tree(tmp_path)
        ds = load_cifar(str(tmp_path), "cifar10", "train")
        # second record: fill=10 => R=10, G=11, B=12 everywhere
        assert tuple(ds.images[1][0, 0]) == (10, 11, 12)
        assert ds.oracle.clean_labels[1] == 1

    def test_labels_initialize_all_three_tracks(self, tmp_path):
        self.make_tree(tmp_path)
        ds = load_cifar(str(tmp_path), "cifar10", "test")
        assert np.array_equal(ds.noisy_labels, ds.oracle.clean_labels)
        assert np.array_equal(ds.working_labels, ds.oracle.clean_labels)

    def test_missing_file_names_the_offender(self, tmp_path):
        with pytest.raises(IngestionError, match="data_batch_1.bin"):
            load_cifar(str(tmp_path), "cifar10", "train")

    def test_truncated_file_rejected(self, tmp_path):
        self.make_tree(tmp_path)
        path = tmp_path / "data_batch_3.bin"
        raw = path.read_bytes()
        path.write_bytes(raw[:-100])
        with pytest.raises(IngestionError, match="data_batch_3.bin"):
            load_cifar(str(tmp_path), "cifar10", "train")

    def test_cifar100_record_layout(self, tmp_path):
        # coarse byte, fine byte, then 3072 pixel bytes
        rec = np.zeros((3, 3074), dtype=np.uint8)
        rec[:, 0] = 7
        rec[:, 1] = [3, 99, 42]
        rec.tofile(tmp_path / "train.bin")
        ds = load_cifar(str(tmp_path), "cifar100", "train")
        assert ds.num_classes == 100
        assert list(ds.oracle.clean_labels) == [3, 99, 42]

    def test_unknown_variant_is_config_error(self):
        with pytest.raises(ConfigError):
            load_dataset("", "mnist")


class TestBlobs:
    def test_shapes_and_classes(self):
        ds = make_blobs(BlobsSpec(num_samples=120, num_classes=3, image_size=16, seed=0))
        assert len(ds) == 120
        assert ds.image_shape == (16, 16, 3)
        assert set(np.unique(ds.oracle.clean_labels)) <= {0, 1, 2}
        assert ds.images.dtype == np.uint8

    def test_deterministic_generation(self):
        spec = BlobsSpec(num_samples=50, seed=9)
        a = make_blobs(spec)
        b = make_blobs(spec)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.oracle.clean_labels, b.oracle.clean_labels)

    def test_test_split_disjoint_stream(self):
        spec = BlobsSpec(num_samples=50, test_samples=50, seed=9)
        train = make_blobs(spec, split="train")
        test = make_blobs(spec, split="test")
        assert not np.array_equal(train.images, test.images)

    def test_load_dataset_dispatch(self):
        ds = load_dataset("", "blobs", blobs=BlobsSpec(num_samples=10))
        assert len(ds) == 10

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            BlobsSpec(num_classes=1)


class TestDatasetInvariants:
    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ConfigError):
            LabeledImageDataset(images=np.zeros((4, 8, 8, 3), dtype=np.uint8),
                                noisy_labels=np.zeros(3, dtype=np.int64),
                                working_labels=np.zeros(4, dtype=np.int64),
                                sample_ids=np.arange(4), num_classes=2,
                                oracle=LabelOracle(np.zeros(4, dtype=np.int64)))

    def test_label_range_enforced(self):
        with pytest.raises(ConfigError):
            LabeledImageDataset(images=np.zeros((2, 8, 8, 3), dtype=np.uint8),
                                noisy_labels=np.array([0, 5]),
                                working_labels=np.array([0, 1]),
                                sample_ids=np.arange(2), num_classes=2,
                                oracle=LabelOracle(np.array([0, 1])))

    def test_duplicate_sample_ids_rejected(self):
        with pytest.raises(ConfigError):
            LabeledImageDataset(images=np.zeros((2, 8, 8, 3), dtype=np.uint8),
                                noisy_labels=np.array([0, 1]),
                                working_labels=np.array([0, 1]),
                                sample_ids=np.array([1, 1]), num_classes=2,
                                oracle=LabelOracle(np.array([0, 1])))
