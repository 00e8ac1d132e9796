"""Contrastive self-supervised pretraining with the normalized
temperature-scaled cross-entropy objective over augmented view pairs.

The pretraining loop receives images only: no label track is reachable
from this module, so its outcome cannot depend on label noise.
"""

from dataclasses import dataclass, field

import numpy as np
import torch

from labelrefinery import augment
from labelrefinery.augment import AugmentationPolicy
from labelrefinery.exceptions import ConfigError, ContractError
from labelrefinery.models import apply_gradients, cosine_lr, forward_embed, forward_project, to_model_input


@dataclass(frozen=True)
class ContrastiveConfig:
    epochs: int = 30
    temperature: float = 0.5
    batch_size: int = 128
    learning_rate: float = 0.2
    weight_decay: float = 1e-4
    policy: AugmentationPolicy = field(default_factory=AugmentationPolicy)

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be at least 2 (a batch needs negatives), got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")


def nt_xent_loss(projections, temperature):
    """NT-Xent over 2B unit vectors arranged as view pairs (2i, 2i+1).

    Each anchor's positive is its paired view; all other 2B-2 rows are
    negatives; self-similarity is excluded. Returns the mean over all 2B
    anchors of -log softmax(sim / temperature)[positive].
    """
    if projections.ndim != 2:
        raise ContractError(f"expected a (2B, d) matrix, got shape {tuple(projections.shape)}")
    two_b = projections.shape[0]
    if two_b % 2 != 0 or two_b < 4:
        raise ContractError(f"need at least two pairs of views, got {two_b} rows: no negatives available")
    norms = projections.norm(dim=1)
    if (norms - 1.0).abs().max().item() > 1e-4:
        raise ContractError("projection rows must be unit-normalized")
    sim = projections @ projections.t() / temperature
    eye = torch.eye(two_b, dtype=torch.bool, device=sim.device)
    sim = sim.masked_fill(eye, float("-inf"))
    positive = torch.arange(two_b, device=sim.device) ^ 1
    pos_sim = sim.gather(1, positive.unsqueeze(1)).squeeze(1)
    return (torch.logsumexp(sim, dim=1) - pos_sim).mean()


def pretrain(state, images, config, rng, on_epoch=None):
    """Train encoder + projection head for config.epochs epochs.

    `images` is the raw uint8 (N, H, W, C) array; labels are deliberately
    not part of the signature. Returns (state, per-epoch mean losses).
    `on_epoch(epoch, mean_loss, lr, n_views)` fires after each epoch.
    """
    if len(images) == 0:
        raise ContractError("cannot pretrain on an empty dataset")
    if config.epochs == 0:
        return state, []
    state.configure_optimizer("contrastive", config.learning_rate, weight_decay=config.weight_decay)
    epoch_losses = []
    n = len(images)
    for epoch in range(1, config.epochs + 1):
        lr = cosine_lr(config.learning_rate, epoch - 1, config.epochs)
        state.set_learning_rate(lr)
        order = rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            views = []
            for j in idx:
                a, b = augment.make_view_pair(images[j], config.policy, rng)
                views.append(a)
                views.append(b)
            batch = to_model_input(np.stack(views))
            emb = forward_embed(state, batch, train=True)
            proj = forward_project(state, emb, train=True)
            loss = nt_xent_loss(proj, config.temperature)
            if not torch.isfinite(loss):
                raise ContractError(f"non-finite contrastive loss at epoch {epoch}, batch {start // config.batch_size}")
            state.optimizer.zero_grad(set_to_none=True)
            loss.backward()
            apply_gradients(state, context=f"pretrain epoch {epoch}")
            total += loss.item() * len(views)
            count += len(views)
        mean_loss = total / max(count, 1)
        epoch_losses.append(mean_loss)
        state.epoch += 1
        if on_epoch is not None:
            on_epoch(epoch, mean_loss, lr, count)
    return state, epoch_losses
