"""Noisy-label training pipeline: contrastive pretraining, supervised
warmup, and stage-scheduled iterative pseudo-label refinement, plus a
synthetic instance-dependent noise generator with a ground-truth ledger."""

from labelrefinery.augment import AugmentationPolicy, apply_policy, make_view_pair
from labelrefinery.config import RunConfig, load_config, save_config
from labelrefinery.contrastive import ContrastiveConfig, nt_xent_loss, pretrain
from labelrefinery.data import BlobsSpec, LabeledImageDataset, load_dataset, make_blobs
from labelrefinery.evaluation import MetricsReport, accuracy, emit_report, label_quality
from labelrefinery.exceptions import (AugmentationError, CheckpointError, ConfigError,
                                      ContractError, IngestionError, IntegrityError,
                                      PipelineError)
from labelrefinery.models import EncoderSpec, ModelState, forward_embed, forward_logits, forward_project
from labelrefinery.noise import FlipLedger, IdnSpec, inject_idn, noise_statistics
from labelrefinery.refinery import (RefinementState, SelectionLedger, StagePlan,
                                    assign_pseudo_labels, augment_and_inject, consensus,
                                    record_stage, run_iteration)
from labelrefinery.training import TrainPhaseConfig, cross_entropy, per_sample_losses, warmup

__version__ = "0.1.0"
