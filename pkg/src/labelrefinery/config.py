"""Run configuration: one JSON file per run, strict key checking, and the
master-seed fan-out used by every phase.

Seed derivation: each phase draws from numpy SeedSequence([master_seed,
crc32(domain)]) where the domain string names the phase ("noise",
"pretrain", "supervised", "injection", "model", "blobs"). Identical
configs therefore reproduce every stream bit for bit, and phases cannot
bleed entropy into each other.
"""

import json
import zlib
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from labelrefinery.augment import AugmentationPolicy
from labelrefinery.contrastive import ContrastiveConfig
from labelrefinery.data import BlobsSpec
from labelrefinery.exceptions import ConfigError
from labelrefinery.models import EncoderSpec
from labelrefinery.noise import IdnSpec
from labelrefinery.refinery import StagePlan
from labelrefinery.training import TrainPhaseConfig

SEED_DOMAINS = ("noise", "pretrain", "supervised", "injection", "model", "blobs")


def derive_seed_sequence(master_seed, domain):
    if domain not in SEED_DOMAINS:
        raise ConfigError(f"unknown seed domain {domain!r}; known: {SEED_DOMAINS}")
    return np.random.SeedSequence([int(master_seed), zlib.crc32(domain.encode())])


def derive_rng(master_seed, domain):
    return np.random.default_rng(derive_seed_sequence(master_seed, domain))


def derive_int_seed(master_seed, domain):
    return int(derive_seed_sequence(master_seed, domain).generate_state(1)[0])


def _strict_kwargs(section, payload, cls):
    names = {f.name for f in fields(cls)}
    unknown = set(payload) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in config section {section!r}: {sorted(unknown)}")
    return payload


@dataclass(frozen=True)
class DatasetConfig:
    variant: str = "blobs"
    path: str = ""
    blobs: BlobsSpec = field(default_factory=BlobsSpec)


@dataclass(frozen=True)
class NoiseConfig:
    target_rate: float = 0.3
    rate_spread: float = 0.1
    feature_projection_dim: int = 32


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "small_resnet_w16"
    embedding_dim: int = 128
    projection_dim: int = 64


@dataclass(frozen=True)
class RefinementConfig:
    iterations: int = 4
    copies_per_sample: int = 1

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be non-negative")
        if self.copies_per_sample < 0:
            raise ConfigError("copies_per_sample must be non-negative")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    train: TrainPhaseConfig = field(default_factory=TrainPhaseConfig)
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    stage_plan: StagePlan = None
    seed: int = 0
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.stage_plan is None:
            object.__setattr__(self, "stage_plan", StagePlan.default(self.refinement.iterations))
        if self.refinement.iterations > len(self.stage_plan.iterations):
            raise ConfigError(
                f"stage plan covers {len(self.stage_plan.iterations)} iterations, "
                f"config asks for {self.refinement.iterations}")

    # -- derived objects ----------------------------------------------------

    def idn_spec(self):
        return IdnSpec(target_rate=self.noise.target_rate,
                       seed=derive_int_seed(self.seed, "noise"),
                       rate_spread=self.noise.rate_spread,
                       feature_projection_dim=self.noise.feature_projection_dim)

    def encoder_spec(self, image_shape):
        return EncoderSpec(architecture=self.model.architecture,
                           embedding_dim=self.model.embedding_dim,
                           input_shape=tuple(image_shape))

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "dataset": {"variant": self.dataset.variant, "path": self.dataset.path,
                        "blobs": asdict(self.dataset.blobs)},
            "noise": asdict(self.noise),
            "model": asdict(self.model),
            "contrastive": {
                "epochs": self.contrastive.epochs,
                "temperature": self.contrastive.temperature,
                "batch_size": self.contrastive.batch_size,
                "learning_rate": self.contrastive.learning_rate,
                "weight_decay": self.contrastive.weight_decay,
                "policy": self.contrastive.policy.to_dict(),
            },
            "train": asdict(self.train),
            "refinement": asdict(self.refinement),
            "stage_plan": self.stage_plan.to_dict(),
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, payload):
        top_known = {"dataset", "noise", "model", "contrastive", "train",
                     "refinement", "stage_plan", "seed", "output_dir"}
        unknown = set(payload) - top_known
        if unknown:
            raise ConfigError(f"unknown top-level config key(s): {sorted(unknown)}")

        ds = dict(payload.get("dataset", {}))
        blobs_payload = _strict_kwargs("dataset.blobs", dict(ds.pop("blobs", {})), BlobsSpec)
        if "amplitude_range" in blobs_payload:
            blobs_payload["amplitude_range"] = tuple(blobs_payload["amplitude_range"])
        ds = _strict_kwargs("dataset", ds, DatasetConfig)
        dataset = DatasetConfig(blobs=BlobsSpec(**blobs_payload), **ds)

        noise = NoiseConfig(**_strict_kwargs("noise", dict(payload.get("noise", {})), NoiseConfig))
        model = ModelConfig(**_strict_kwargs("model", dict(payload.get("model", {})), ModelConfig))

        con = dict(payload.get("contrastive", {}))
        policy_payload = con.pop("policy", None)
        con = _strict_kwargs("contrastive", con, ContrastiveConfig)
        policy = AugmentationPolicy.from_dict(policy_payload) if policy_payload else AugmentationPolicy()
        contrastive = ContrastiveConfig(policy=policy, **con)

        train = TrainPhaseConfig(**_strict_kwargs("train", dict(payload.get("train", {})), TrainPhaseConfig))
        refinement = RefinementConfig(
            **_strict_kwargs("refinement", dict(payload.get("refinement", {})), RefinementConfig))
        plan = StagePlan.from_dict(payload["stage_plan"]) if "stage_plan" in payload else None

        return cls(dataset=dataset, noise=noise, model=model, contrastive=contrastive,
                   train=train, refinement=refinement, stage_plan=plan,
                   seed=int(payload.get("seed", 0)),
                   output_dir=payload.get("output_dir", "runs/default"))


def load_config(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(payload)


def save_config(config, path):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
