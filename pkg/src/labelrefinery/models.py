"""Encoder / projection-head / classifier-head model stack.

The encoder maps images to D-dimensional embeddings; the projection head
(used only during contrastive pretraining) maps them to a normalized
low-dimensional space; the classifier head produces class logits. All
parameter updates flow through :func:`apply_gradients`, which rejects
non-finite gradients and guarantees finite parameters after every step.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from labelrefinery.exceptions import CheckpointError, ConfigError, ContractError

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderSpec:
    architecture: str = "small_resnet"
    embedding_dim: int = 128
    input_shape: tuple = (16, 16, 3)  # (H, W, C)

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(
                f"unknown architecture {self.architecture!r}; available: {sorted(ARCHITECTURES)}")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be positive")


class ResidualBlock(nn.Module):
    def __init__(self, c_in, c_out, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(c_out)
        if stride != 1 or c_in != c_out:
            self.shortcut = nn.Sequential(nn.Conv2d(c_in, c_out, 1, stride, bias=False), nn.BatchNorm2d(c_out))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        h = torch.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        return torch.relu(h + self.shortcut(x))


class SmallResNet(nn.Module):
    """Three-stage residual convnet with global average pooling."""

    def __init__(self, in_channels, width, embedding_dim):
        super().__init__()
        self.stem = nn.Sequential(nn.Conv2d(in_channels, width, 3, 1, 1, bias=False),
                                  nn.BatchNorm2d(width), nn.ReLU())
        self.body = nn.Sequential(
            ResidualBlock(width, width),
            ResidualBlock(width, 2 * width, stride=2),
            ResidualBlock(2 * width, 4 * width, stride=2),
        )
        self.fc = nn.Linear(4 * width, embedding_dim)

    def forward(self, x):
        h = self.body(self.stem(x))
        return self.fc(h.mean(dim=(2, 3)))


class ResNet18(nn.Module):
    """18-layer residual network with a 3x3 stem (CIFAR-scale inputs)."""

    def __init__(self, in_channels, embedding_dim):
        super().__init__()
        self.stem = nn.Sequential(nn.Conv2d(in_channels, 64, 3, 1, 1, bias=False),
                                  nn.BatchNorm2d(64), nn.ReLU())
        stages = []
        widths = [64, 128, 256, 512]
        c_in = 64
        for i, w in enumerate(widths):
            stride = 1 if i == 0 else 2
            stages += [ResidualBlock(c_in, w, stride=stride), ResidualBlock(w, w)]
            c_in = w
        self.body = nn.Sequential(*stages)
        self.fc = nn.Linear(512, embedding_dim)

    def forward(self, x):
        h = self.body(self.stem(x))
        return self.fc(h.mean(dim=(2, 3)))


class TinyMLP(nn.Module):
    """Two-layer perceptron encoder; used by gradient-check tests."""

    def __init__(self, in_features, embedding_dim, hidden=32):
        super().__init__()
        self.fc1 = nn.Linear(in_features, hidden)
        self.fc2 = nn.Linear(hidden, embedding_dim)

    def forward(self, x):
        return self.fc2(torch.relu(self.fc1(x.flatten(1))))


def _build_encoder(spec):
    h, w, c = spec.input_shape
    name = spec.architecture
    if name == "small_resnet":
        return SmallResNet(c, 32, spec.embedding_dim)
    if name == "small_resnet_w16":
        return SmallResNet(c, 16, spec.embedding_dim)
    if name == "resnet18":
        return ResNet18(c, spec.embedding_dim)
    if name == "tiny_mlp":
        return TinyMLP(h * w * c, spec.embedding_dim)
    raise ConfigError(f"unknown architecture {name!r}")


ARCHITECTURES = ("small_resnet", "small_resnet_w16", "resnet18", "tiny_mlp")

OPTIMIZERS = {
    "sgd": lambda params, lr, momentum, weight_decay: torch.optim.SGD(
        params, lr=lr, momentum=momentum, weight_decay=weight_decay),
}


class ModelState:
    """Owns the three module stacks plus the active optimizer and epoch
    counter. Exclusively held by the training loop."""

    def __init__(self, spec, num_classes, projection_dim=64, torch_seed=None):
        if torch_seed is not None:
            torch.manual_seed(int(torch_seed))
        d = spec.embedding_dim
        self.spec = spec
        self.num_classes = num_classes
        self.projection_dim = projection_dim
        self.encoder = _build_encoder(spec)
        self.projector = nn.Sequential(nn.Linear(d, d), nn.ReLU(), nn.Linear(d, projection_dim))
        self.classifier = nn.Linear(d, num_classes)
        self.optimizer = None
        self._optimizer_config = None
        self.epoch = 0

    def configure_optimizer(self, scope, learning_rate, momentum=0.9, weight_decay=0.0, name="sgd"):
        """(Re)create the optimizer over a parameter scope: "contrastive"
        trains encoder+projector, "supervised" trains encoder+classifier."""
        if name not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {name!r}; available: {sorted(OPTIMIZERS)}")
        if scope == "contrastive":
            params = list(self.encoder.parameters()) + list(self.projector.parameters())
        elif scope == "supervised":
            params = list(self.encoder.parameters()) + list(self.classifier.parameters())
        else:
            raise ConfigError(f"unknown optimizer scope {scope!r}")
        self.optimizer = OPTIMIZERS[name](params, learning_rate, momentum, weight_decay)
        self._optimizer_config = {"scope": scope, "learning_rate": learning_rate,
                                  "momentum": momentum, "weight_decay": weight_decay, "name": name}

    def set_learning_rate(self, lr):
        for group in self.optimizer.param_groups:
            group["lr"] = lr

    def modules(self):
        return (self.encoder, self.projector, self.classifier)

    def set_mode(self, train):
        for m in self.modules():
            m.train(train)

    def parameter_count(self):
        return sum(p.numel() for m in self.modules() for p in m.parameters())


def to_model_input(images):
    """uint8 (B, H, W, C) numpy batch -> float32 (B, C, H, W) tensor on [-1, 1]."""
    x = images.astype(np.float32) / np.float32(255.0)
    x = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    return torch.from_numpy(x) * 2.0 - 1.0


def _check_batch(state, batch):
    if batch.ndim != 4:
        raise ContractError(f"expected a 4-d image batch, got shape {tuple(batch.shape)}")
    h, w, c = state.spec.input_shape
    if tuple(batch.shape[1:]) != (c, h, w):
        raise ContractError(
            f"batch shape {tuple(batch.shape[1:])} does not match encoder input {(c, h, w)}")


def forward_embed(state, batch, train=False):
    """(B, C, H, W) tensor -> (B, D) embeddings. Eval mode unless training."""
    _check_batch(state, batch)
    state.encoder.train(train)
    return state.encoder(batch)


def forward_project(state, embeddings, train=False):
    """(B, D) embeddings -> (B, d) L2-normalized projections."""
    if embeddings.ndim != 2 or embeddings.shape[1] != state.spec.embedding_dim:
        raise ContractError(f"expected (batch, {state.spec.embedding_dim}) embeddings, got {tuple(embeddings.shape)}")
    state.projector.train(train)
    p = state.projector(embeddings)
    norms = p.norm(dim=1, keepdim=True).clamp_min(1e-12)
    return p / norms


def forward_logits(state, batch, train=False):
    """(B, C, H, W) tensor -> (B, K) class scores."""
    emb = forward_embed(state, batch, train=train)
    state.classifier.train(train)
    return state.classifier(emb)


def apply_gradients(state, context=""):
    """One optimizer step. Rejects non-finite gradients before stepping and
    verifies parameters stayed finite afterwards."""
    if state.optimizer is None:
        raise ContractError("no optimizer configured")
    for group in state.optimizer.param_groups:
        for p in group["params"]:
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise ContractError(f"non-finite gradient encountered{': ' + context if context else ''}")
    state.optimizer.step()
    for group in state.optimizer.param_groups:
        for p in group["params"]:
            if not torch.isfinite(p).all():
                raise ContractError(f"non-finite parameter after update{': ' + context if context else ''}")
    return state


def cosine_lr(base_lr, epoch_index, total_epochs):
    """Cosine decay from base_lr; epoch_index counts completed epochs in the
    phase (0-based), so the first epoch runs at base_lr."""
    if total_epochs <= 0:
        return base_lr
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch_index / total_epochs))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(state, path, phase, extra=None):
    """Versioned binary checkpoint keyed by pipeline phase."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "phase": phase,
        "architecture": state.spec.architecture,
        "embedding_dim": state.spec.embedding_dim,
        "input_shape": tuple(state.spec.input_shape),
        "num_classes": state.num_classes,
        "projection_dim": state.projection_dim,
        "encoder": state.encoder.state_dict(),
        "projector": state.projector.state_dict(),
        "classifier": state.classifier.state_dict(),
        "optimizer": state.optimizer.state_dict() if state.optimizer is not None else None,
        "optimizer_config": state._optimizer_config,
        "epoch": state.epoch,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path):
    """Restore a ModelState. Returns (state, phase, extra)."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint {path} has format version {version}, expected {CHECKPOINT_VERSION}")
    spec = EncoderSpec(architecture=payload["architecture"],
                       embedding_dim=payload["embedding_dim"],
                       input_shape=tuple(payload["input_shape"]))
    state = ModelState(spec, payload["num_classes"], projection_dim=payload["projection_dim"])
    try:
        state.encoder.load_state_dict(payload["encoder"])
        state.projector.load_state_dict(payload["projector"])
        state.classifier.load_state_dict(payload["classifier"])
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint {path} is shape-incompatible with its declared architecture: {exc}") from exc
    if payload["optimizer"] is not None:
        state.configure_optimizer(**payload["optimizer_config"])
        state.optimizer.load_state_dict(payload["optimizer"])
    state.epoch = payload["epoch"]
    return state, payload["phase"], payload["extra"]
