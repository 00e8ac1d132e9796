"""Supervised machinery: warmup, per-epoch training over working labels,
and exact per-sample loss evaluation for the refinement stages."""

from dataclasses import dataclass

import numpy as np
import torch

from labelrefinery import augment
from labelrefinery.exceptions import ConfigError, ContractError
from labelrefinery.models import apply_gradients, cosine_lr, forward_logits, to_model_input


@dataclass(frozen=True)
class TrainPhaseConfig:
    warmup_epochs: int = 5
    batch_size: int = 128
    learning_rate: float = 0.05           # warmup phase, cosine-decayed
    refinement_learning_rate: float = 0.02  # refinement phase, one cosine across all iterations
    weight_decay: float = 5e-4
    loss_threshold: float = 1.0  # stage selection threshold
    crop_padding: int = 2        # light augmentation: zero-pad then crop
    eval_batch_size: int = 512

    def __post_init__(self):
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be non-negative")
        if self.loss_threshold <= 0.0:
            raise ConfigError(f"loss_threshold must be positive, got {self.loss_threshold}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


@dataclass
class EpochStats:
    phase: str
    epoch: int
    mean_loss: float
    learning_rate: float
    sample_count: int


def cross_entropy(logits, label):
    """Scalar cross-entropy -log softmax(logits)[label], computed in float64
    through the log-sum-exp identity."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ContractError(f"expected a (K,) logit vector, got shape {logits.shape}")
    k = logits.shape[0]
    label = int(label)
    if not 0 <= label < k:
        raise ContractError(f"label {label} out of range [0, {k})")
    peak = logits.max()
    lse = peak + np.log(np.exp(logits - peak).sum())
    return float(lse - logits[label])


def batched_cross_entropy(logits, labels):
    """Per-row cross-entropy as a differentiable tensor (B,)."""
    lse = torch.logsumexp(logits, dim=1)
    picked = logits.gather(1, labels.unsqueeze(1)).squeeze(1)
    return lse - picked


def _assemble_batch(dataset, injected, indices, rng, pad):
    """Materialize one training batch from base + injected sample indices.

    Base samples get the light pad-crop-flip augmentation; injected samples
    were stored pre-augmented and are consumed as-is, labeled with their
    source sample's current working label.
    """
    n = len(dataset)
    images, labels = [], []
    for j in indices:
        if j < n:
            images.append(augment.pad_crop_flip(dataset.images[j], rng, pad=pad))
            labels.append(dataset.working_labels[j])
        else:
            entry = injected[j - n]
            images.append(entry.image)
            labels.append(dataset.working_labels[entry.source_id])
    return np.stack(images), np.asarray(labels, dtype=np.int64)


def train_epoch(state, dataset, config, rng, lr, injected=(), phase="train", epoch=0):
    """One randomized full pass over base + injected samples.

    Returns (state, EpochStats). The caller owns the learning-rate schedule
    and passes the epoch's rate explicitly.
    """
    n_total = len(dataset) + len(injected)
    if n_total == 0:
        raise ContractError("cannot train on an empty dataset view")
    state.set_learning_rate(lr)
    order = rng.permutation(n_total)
    total, count = 0.0, 0
    for start in range(0, n_total, config.batch_size):
        idx = order[start:start + config.batch_size]
        images, labels = _assemble_batch(dataset, injected, idx, rng, config.crop_padding)
        batch = to_model_input(images)
        logits = forward_logits(state, batch, train=True)
        loss = batched_cross_entropy(logits, torch.from_numpy(labels)).mean()
        if not torch.isfinite(loss):
            raise ContractError(f"non-finite loss in {phase} epoch {epoch}, batch {start // config.batch_size}")
        state.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        apply_gradients(state, context=f"{phase} epoch {epoch}")
        total += loss.item() * len(idx)
        count += len(idx)
    state.epoch += 1
    return state, EpochStats(phase=phase, epoch=epoch, mean_loss=total / count,
                             learning_rate=lr, sample_count=count)


def warmup(state, dataset, config, rng, on_epoch=None):
    """Supervised warmup on the working labels for config.warmup_epochs
    epochs with a phase-local cosine schedule."""
    if config.warmup_epochs == 0:
        return state, []
    state.configure_optimizer("supervised", config.learning_rate, weight_decay=config.weight_decay)
    stats = []
    for epoch in range(1, config.warmup_epochs + 1):
        lr = cosine_lr(config.learning_rate, epoch - 1, config.warmup_epochs)
        state, st = train_epoch(state, dataset, config, rng, lr, phase="warmup", epoch=epoch)
        stats.append(st)
        if on_epoch is not None:
            on_epoch(st)
    return state, stats


def per_sample_losses(state, dataset, batch_size=512):
    """Cross-entropy of every base sample's working label on un-augmented
    images, inference mode. Injected copies are never part of this array."""
    n = len(dataset)
    losses = np.empty(n, dtype=np.float64)
    state.set_mode(False)
    with torch.no_grad():
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            batch = to_model_input(dataset.images[start:stop])
            logits = forward_logits(state, batch, train=False).double()
            labels = torch.from_numpy(dataset.working_labels[start:stop])
            losses[start:stop] = batched_cross_entropy(logits, labels).numpy()
    return losses


def predict_labels(state, images, batch_size=512):
    """Argmax class ids for a uint8 image array, inference mode."""
    n = len(images)
    out = np.empty(n, dtype=np.int64)
    state.set_mode(False)
    with torch.no_grad():
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            logits = forward_logits(state, to_model_input(images[start:stop]), train=False)
            out[start:stop] = logits.argmax(dim=1).numpy()
    return out
