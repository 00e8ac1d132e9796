"""Dataset loading and the three-track label model.

Every dataset carries three parallel label arrays: the ground-truth clean
labels (quarantined behind :class:`LabelOracle` so training code never sees
them), the noisy labels produced by injection, and the mutable working
labels the trainer actually consumes.
"""

import os
from dataclasses import dataclass, field, replace

import numpy as np

from labelrefinery.exceptions import ConfigError, IngestionError

CIFAR10_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR10_TEST_FILES = ["test_batch.bin"]
CIFAR10_RECORD = 1 + 3072
CIFAR100_RECORD = 2 + 3072


@dataclass(frozen=True)
class LabelOracle:
    """Ground-truth labels, exposed only to evaluation and noise auditing."""

    clean_labels: np.ndarray


@dataclass
class LabeledImageDataset:
    images: np.ndarray          # uint8, (N, H, W, C)
    noisy_labels: np.ndarray    # int64, (N,)
    working_labels: np.ndarray  # int64, (N,), the only mutable track
    sample_ids: np.ndarray      # int64, (N,), unique
    num_classes: int
    oracle: LabelOracle

    def __post_init__(self):
        n = len(self.images)
        for name in ("noisy_labels", "working_labels", "sample_ids"):
            arr = getattr(self, name)
            if len(arr) != n:
                raise ConfigError(f"{name} has length {len(arr)}, expected {n}")
        for name in ("noisy_labels", "working_labels"):
            arr = getattr(self, name)
            if len(arr) and (arr.min() < 0 or arr.max() >= self.num_classes):
                raise ConfigError(f"{name} contains ids outside [0, {self.num_classes})")
        if len(np.unique(self.sample_ids)) != n:
            raise ConfigError("sample_ids must be unique")

    def __len__(self):
        return len(self.images)

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])


def _from_clean(images, clean_labels, num_classes):
    clean_labels = np.asarray(clean_labels, dtype=np.int64)
    return LabeledImageDataset(
        images=images,
        noisy_labels=clean_labels.copy(),
        working_labels=clean_labels.copy(),
        sample_ids=np.arange(len(images), dtype=np.int64),
        num_classes=num_classes,
        oracle=LabelOracle(clean_labels=clean_labels),
    )


def with_noisy_labels(dataset, noisy_labels):
    """New dataset record with updated noisy track; working labels reset to it."""
    noisy_labels = np.asarray(noisy_labels, dtype=np.int64)
    return replace(dataset, noisy_labels=noisy_labels.copy(), working_labels=noisy_labels.copy())


# ---------------------------------------------------------------------------
# CIFAR binary distribution
# ---------------------------------------------------------------------------

def _read_cifar_file(path, record_size, label_offset):
    if not os.path.isfile(path):
        raise IngestionError(f"dataset file not found: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % record_size != 0:
        raise IngestionError(
            f"corrupt dataset file {path}: {raw.size} bytes is not a multiple of the {record_size}-byte record")
    records = raw.reshape(-1, record_size)
    labels = records[:, label_offset].astype(np.int64)
    pixels = records[:, record_size - 3072:]
    images = pixels.reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return np.ascontiguousarray(images), labels


def _resolve_cifar_dir(path, variant):
    subdir = "cifar-10-batches-bin" if variant == "cifar10" else "cifar-100-binary"
    nested = os.path.join(path, subdir)
    return nested if os.path.isdir(nested) else path


def load_cifar(path, variant, split="train"):
    """Read the official CIFAR binary layout (1 label byte for CIFAR-10,
    coarse+fine label bytes for CIFAR-100, then 3072 image bytes)."""
    root = _resolve_cifar_dir(path, variant)
    if variant == "cifar10":
        files = CIFAR10_FILES if split == "train" else CIFAR10_TEST_FILES
        record, label_offset, k = CIFAR10_RECORD, 0, 10
    else:
        files = ["train.bin"] if split == "train" else ["test.bin"]
        record, label_offset, k = CIFAR100_RECORD, 1, 100
    images, labels = [], []
    for name in files:
        img, lab = _read_cifar_file(os.path.join(root, name), record, label_offset)
        images.append(img)
        labels.append(lab)
    return _from_clean(np.concatenate(images), np.concatenate(labels), k)


# ---------------------------------------------------------------------------
# Synthetic "blobs" toy variant
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlobsSpec:
    """Toy dataset: class identity is a low-frequency luminance pattern
    (gratings at fixed orientations, or rings) under per-sample phase,
    frequency, amplitude, tint, and pixel-noise variation. Pattern families
    are mirror-symmetric so horizontal flips never change the class."""

    num_samples: int = 3000
    num_classes: int = 3
    image_size: int = 16
    test_samples: int = 1000
    seed: int = 0
    orientation_jitter: float = 20.0  # degrees, std of per-sample rotation
    amplitude_range: tuple = (0.10, 0.32)
    pixel_noise: float = 0.10

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("blobs need at least two classes")
        if self.num_samples < 1 or self.image_size < 4:
            raise ConfigError("blobs num_samples/image_size too small")


def _blob_image(label, hw, spec, rng, yy, xx):
    family = label % 3
    ring_octave = label // 3
    phase = rng.uniform(0.0, 2.0 * np.pi)
    freq = rng.uniform(1.2, 2.0) * (1.0 + ring_octave)
    amp = rng.uniform(*spec.amplitude_range)
    jitter = rng.normal(0.0, np.deg2rad(spec.orientation_jitter))
    if family == 0 or family == 1:
        angle = (0.0 if family == 0 else np.pi / 2.0) + jitter
        coord = np.cos(angle) * yy + np.sin(angle) * xx
        pattern = np.sin(2.0 * np.pi * freq * coord / hw + phase)
    else:
        cy = hw / 2.0 + rng.uniform(-hw / 3.0, hw / 3.0)
        cx = hw / 2.0 + rng.uniform(-hw / 3.0, hw / 3.0)
        radius = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        pattern = np.sin(2.0 * np.pi * freq * radius / hw + phase)
    tint = rng.uniform(0.75, 1.25, size=3)
    img = 0.5 + amp * pattern[..., None] * tint[None, None, :]
    img = img + rng.normal(0.0, spec.pixel_noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def make_blobs(spec, split="train"):
    """Deterministic synthetic dataset; the test split uses a disjoint
    random stream derived from the same spec seed."""
    stream = 0 if split == "train" else 1
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), stream]))
    n = spec.num_samples if split == "train" else spec.test_samples
    hw = spec.image_size
    yy, xx = np.meshgrid(np.arange(hw, dtype=np.float64), np.arange(hw, dtype=np.float64), indexing="ij")
    labels = rng.integers(0, spec.num_classes, size=n).astype(np.int64)
    images = np.empty((n, hw, hw, 3), dtype=np.uint8)
    for i in range(n):
        img = _blob_image(int(labels[i]), hw, spec, rng, yy, xx)
        images[i] = np.rint(img * 255.0).astype(np.uint8)
    return _from_clean(images, labels, spec.num_classes)


def load_dataset(path, variant, split="train", blobs=None):
    """Load a dataset by variant name.

    For CIFAR variants `path` must hold the official binary distribution;
    the blobs variant is generated in memory from `blobs` (a BlobsSpec).
    """
    if variant in ("cifar10", "cifar100"):
        if not path:
            raise ConfigError(f"variant {variant!r} requires a dataset path")
        return load_cifar(path, variant, split)
    if variant == "blobs":
        return make_blobs(blobs or BlobsSpec(), split)
    raise ConfigError(f"unknown dataset variant {variant!r}")
