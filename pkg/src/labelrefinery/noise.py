"""Synthetic instance-dependent label noise with a ground-truth ledger.

The flip machinery is deterministic in the image content: per-sample flip
rates come from a truncated normal field evaluated on a random projection
of the flattened pixels, the flipped-to class is the best-scoring wrong
class under per-class random projections, and the flip coin itself is a
keyed hash of the image bytes. Two byte-identical images therefore always
receive the same decision, and re-running with the same spec reproduces
the noisy labels bit for bit.
"""

import csv
import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import stats

from labelrefinery.data import with_noisy_labels
from labelrefinery.exceptions import ConfigError, IntegrityError


@dataclass(frozen=True)
class IdnSpec:
    """Parameters of the synthetic instance-dependent noise process."""

    target_rate: float
    seed: int
    rate_spread: float = 0.1
    feature_projection_dim: int = 32

    def __post_init__(self):
        if not (0.0 <= self.target_rate < 1.0):
            raise ConfigError(f"target_rate must lie in [0, 1), got {self.target_rate}")
        if self.rate_spread < 0.0:
            raise ConfigError(f"rate_spread must be non-negative, got {self.rate_spread}")
        if self.feature_projection_dim < 1:
            raise ConfigError(f"feature_projection_dim must be positive, got {self.feature_projection_dim}")


@dataclass
class FlipLedger:
    """Exact record of the injection: which labels flipped, from what, to
    what, and each sample's flip rate."""

    flipped: np.ndarray               # bool (N,)
    original_label: np.ndarray        # int64 (N,)
    corrupted_label: np.ndarray       # int64 (N,)
    per_sample_flip_rate: np.ndarray  # float64 (N,)

    def __post_init__(self):
        n = len(self.flipped)
        if not (len(self.original_label) == len(self.corrupted_label) == len(self.per_sample_flip_rate) == n):
            raise IntegrityError("ledger arrays have mismatched lengths")
        if not np.array_equal(self.flipped, self.original_label != self.corrupted_label):
            raise IntegrityError("flipped mask inconsistent with label columns")


@dataclass
class NoiseReport:
    overall_rate: float
    per_class_flip_rates: np.ndarray  # (K,), flip rate among samples of each clean class
    confusion: np.ndarray             # (K, K) counts, rows clean, columns noisy


def _hash_uniforms(images, seed, domain):
    """One uniform in [0, 1) per image, keyed by (seed, domain) and depending
    only on the image bytes, so duplicated images share their draw."""
    key = hashlib.blake2b(f"{seed}:{domain}".encode(), digest_size=32).digest()
    out = np.empty(len(images), dtype=np.float64)
    for i in range(len(images)):
        digest = hashlib.blake2b(images[i].tobytes(), key=key, digest_size=8).digest()
        out[i] = int.from_bytes(digest, "little") / 2.0 ** 64
    return out


def _rate_field(projected, spec):
    """Per-sample flip rates: a truncated normal N(target, spread^2, [0, 1])
    evaluated through a smooth scalar field over projected feature space, so
    flip probability genuinely varies with image content."""
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 1]))
    direction = rng.normal(size=projected.shape[1])
    direction /= np.linalg.norm(direction)
    score = projected @ direction
    sd = score.std()
    if sd == 0.0:
        unit = np.full(len(score), 0.5)
    else:
        unit = stats.norm.cdf((score - score.mean()) / sd)
    if spec.rate_spread == 0.0:
        return np.full(len(score), spec.target_rate)
    a = (0.0 - spec.target_rate) / spec.rate_spread
    b = (1.0 - spec.target_rate) / spec.rate_spread
    unit = np.clip(unit, 1e-12, 1.0 - 1e-12)
    return stats.truncnorm.ppf(unit, a, b, loc=spec.target_rate, scale=spec.rate_spread)


def _rescale_to_target(rates, target):
    """Global multiplicative rescale so the mean rate equals the target."""
    if target == 0.0 or rates.max() == 0.0:
        return np.zeros_like(rates)
    lo, hi = 0.0, 1.0
    while np.clip(rates * hi, 0.0, 1.0).mean() < target:
        hi *= 2.0
        if hi > 1e6:
            break
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if np.clip(rates * mid, 0.0, 1.0).mean() < target:
            lo = mid
        else:
            hi = mid
    return np.clip(rates * 0.5 * (lo + hi), 0.0, 1.0)


def inject_idn(dataset, spec):
    """Corrupt labels with instance-dependent noise.

    Returns a new dataset (noisy and working tracks updated) plus the
    FlipLedger recording every decision.
    """
    k = dataset.num_classes
    if spec.target_rate >= 1.0 - 1.0 / k:
        raise ConfigError(
            f"target_rate {spec.target_rate} is not meaningful for {k} classes (must be < {1.0 - 1.0 / k:.4f})")
    clean = dataset.oracle.clean_labels
    n = len(dataset)

    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 0]))
    flat = dataset.images.reshape(n, -1).astype(np.float64) / 255.0
    projection = rng.normal(size=(flat.shape[1], spec.feature_projection_dim)) / np.sqrt(flat.shape[1])
    class_scorers = rng.normal(size=(k, spec.feature_projection_dim, k))
    projected = flat @ projection

    if spec.rate_spread == 0.0:
        rates = np.full(n, spec.target_rate)
    else:
        rates = _rescale_to_target(_rate_field(projected, spec), spec.target_rate)
    coins = _hash_uniforms(dataset.images, spec.seed, "flip")

    corrupted = clean.copy()
    flip = coins < rates
    for cls in range(k):
        rows = np.flatnonzero((clean == cls) & flip)
        if rows.size == 0:
            continue
        scores = projected[rows] @ class_scorers[cls]
        scores[:, cls] = -np.inf
        corrupted[rows] = np.argmax(scores, axis=1)

    ledger = FlipLedger(
        flipped=corrupted != clean,
        original_label=clean.copy(),
        corrupted_label=corrupted.copy(),
        per_sample_flip_rate=rates,
    )
    return with_noisy_labels(dataset, corrupted), ledger


def noise_statistics(dataset, ledger):
    """Summarize a ledger against its dataset (rates and clean->noisy
    confusion counts)."""
    n = len(dataset)
    if len(ledger.flipped) != n:
        raise IntegrityError(f"ledger length {len(ledger.flipped)} does not match dataset length {n}")
    if not np.array_equal(ledger.original_label, dataset.oracle.clean_labels):
        raise IntegrityError("ledger original labels do not match the dataset's clean labels")
    k = dataset.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (ledger.original_label, ledger.corrupted_label), 1)
    class_counts = confusion.sum(axis=1)
    flips_per_class = class_counts - np.diag(confusion)
    with np.errstate(invalid="ignore"):
        per_class = np.where(class_counts > 0, flips_per_class / np.maximum(class_counts, 1), 0.0)
    return NoiseReport(
        overall_rate=float(ledger.flipped.mean()) if n else 0.0,
        per_class_flip_rates=per_class,
        confusion=confusion,
    )


# ---------------------------------------------------------------------------
# Columnar audit file
# ---------------------------------------------------------------------------

LEDGER_FIELDS = ["sample_id", "clean_label", "noisy_label", "flip_rate"]


def write_ledger(path, sample_ids, ledger):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LEDGER_FIELDS)
        for i in range(len(sample_ids)):
            writer.writerow([
                int(sample_ids[i]),
                int(ledger.original_label[i]),
                int(ledger.corrupted_label[i]),
                repr(float(ledger.per_sample_flip_rate[i])),
            ])


def read_ledger(path):
    """Returns (sample_ids, FlipLedger) parsed from a ledger CSV."""
    sample_ids, orig, corr, rate = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LEDGER_FIELDS:
            raise IntegrityError(f"unexpected ledger header in {path}: {header}")
        for row in reader:
            sample_ids.append(int(row[0]))
            orig.append(int(row[1]))
            corr.append(int(row[2]))
            rate.append(float(row[3]))
    orig = np.asarray(orig, dtype=np.int64)
    corr = np.asarray(corr, dtype=np.int64)
    ledger = FlipLedger(
        flipped=orig != corr,
        original_label=orig,
        corrupted_label=corr,
        per_sample_flip_rate=np.asarray(rate),
    )
    return np.asarray(sample_ids, dtype=np.int64), ledger


def apply_ledger(dataset, sample_ids, ledger):
    """Stamp a previously generated ledger onto a freshly loaded dataset."""
    if len(sample_ids) != len(dataset):
        raise IntegrityError("ledger does not cover the dataset")
    if not np.array_equal(sample_ids, dataset.sample_ids):
        raise IntegrityError("ledger sample ids do not match the dataset")
    if not np.array_equal(ledger.original_label, dataset.oracle.clean_labels):
        raise IntegrityError("ledger clean labels do not match the dataset; wrong dataset or seed")
    return with_noisy_labels(dataset, ledger.corrupted_label)
