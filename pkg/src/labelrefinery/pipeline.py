"""End-to-end run orchestration: noise preparation, contrastive
pretraining, supervised warmup, refinement iterations, metrics, and all
on-disk artifacts (checkpoints, epoch log, per-iteration audits, ledger,
result tables)."""

import csv
import os
from dataclasses import dataclass

import numpy as np
import torch

from labelrefinery import evaluation, noise
from labelrefinery.config import derive_int_seed, derive_rng
from labelrefinery.contrastive import pretrain
from labelrefinery.data import load_dataset
from labelrefinery.exceptions import CheckpointError, ContractError
from labelrefinery.models import ModelState, cosine_lr, load_checkpoint, save_checkpoint
from labelrefinery.refinery import (InjectedSample, RefinementState, RelabelEvent,
                                    SelectionLedger, run_iteration)
from labelrefinery.training import warmup

EPOCH_LOG_FIELDS = ["phase", "epoch", "mean_loss", "learning_rate", "sample_count", "test_accuracy"]


@dataclass
class PipelineResult:
    model_state: object
    refinement_state: object
    report: object
    train_dataset: object
    test_dataset: object
    warmup_accuracy: float


def build_datasets(config):
    """Train/test datasets per the run config. The blobs seed folds the
    master seed in, so different master seeds draw different toy datasets."""
    ds_cfg = config.dataset
    blobs = ds_cfg.blobs
    if ds_cfg.variant == "blobs":
        from dataclasses import replace
        blobs = replace(blobs, seed=(derive_int_seed(config.seed, "blobs") + blobs.seed) % (2 ** 63))
    train = load_dataset(ds_cfg.path, ds_cfg.variant, split="train", blobs=blobs)
    test = load_dataset(ds_cfg.path, ds_cfg.variant, split="test", blobs=blobs)
    return train, test


def prepare_noise(config):
    """Build the training set and inject instance-dependent noise.

    Returns (noisy train dataset, test dataset, ledger).
    """
    train, test = build_datasets(config)
    noisy_train, ledger = noise.inject_idn(train, config.idn_spec())
    return noisy_train, test, ledger


class _EpochLog:
    def __init__(self, path, append=False):
        exists = os.path.exists(path) and append
        self._fh = open(path, "a" if append else "w", newline="")
        self._writer = csv.writer(self._fh)
        if not exists:
            self._writer.writerow(EPOCH_LOG_FIELDS)

    def row(self, phase, epoch, mean_loss, lr, sample_count, test_accuracy=""):
        acc = f"{test_accuracy:.6f}" if test_accuracy != "" else ""
        self._writer.writerow([phase, epoch, f"{mean_loss:.6f}", f"{lr:.6g}", sample_count, acc])
        self._fh.flush()

    def close(self):
        self._fh.close()


def _write_iteration_audit(path, dataset, refinement_state, result):
    """Per-iteration audit: stage masks, consensus flag, label transition,
    and provenance for every base sample."""
    stage_cols = [f"stage_{s}" for s in result.stage_epochs]
    event = refinement_state.relabel_history[-1]
    old_labels = dataset.working_labels.copy()
    old_labels[event.sample_ids] = event.old_labels
    consensus_mask = np.zeros(len(dataset), dtype=bool)
    consensus_mask[result.consensus_ids] = True
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + stage_cols + ["consensus", "old_label", "new_label", "provenance"])
        for i in range(len(dataset)):
            row = [int(dataset.sample_ids[i])]
            row += [int(result.stage_masks[s][i]) for s in result.stage_epochs]
            row += [int(consensus_mask[i]), int(old_labels[i]), int(dataset.working_labels[i]),
                    int(refinement_state.label_provenance[i])]
            writer.writerow(row)


def _refinement_payload(state):
    return {
        "iteration": state.iteration,
        "working_labels": state.working_labels.copy(),
        "label_provenance": state.label_provenance.copy(),
        "injected": [(e.source_id, e.image, e.label_at_injection, e.iteration) for e in state.injected],
        "ledger": state.ledger.state_dict(),
        "relabel_history": [(e.iteration, e.sample_ids, e.old_labels, e.new_labels)
                            for e in state.relabel_history],
    }


def _restore_refinement(payload, dataset):
    dataset.working_labels[:] = payload["working_labels"]
    state = RefinementState(working_labels=dataset.working_labels,
                            iteration=payload["iteration"],
                            label_provenance=payload["label_provenance"].copy(),
                            injected=[InjectedSample(*tup) for tup in payload["injected"]],
                            ledger=SelectionLedger.from_state_dict(payload["ledger"]))
    state.relabel_history = [RelabelEvent(*tup) for tup in payload["relabel_history"]]
    return state


def _iteration_lrs(config, completed_epochs):
    """Cosine schedule spanning the whole post-warmup refinement phase."""
    base = config.train.refinement_learning_rate
    plans = config.stage_plan.iterations[:config.refinement.iterations]
    total = sum(p.epochs for p in plans)
    out = []
    for p in plans:
        lrs = [cosine_lr(base, completed_epochs + i, total) for i in range(p.epochs)]
        completed_epochs += p.epochs
        out.append(lrs)
    return out


def run_pipeline(config, train_dataset, test_dataset, out_dir, resume_from=None):
    """Execute pretrain -> warmup -> refinement iterations.

    `train_dataset` must already carry injected noisy labels. With
    `resume_from` pointing at an iteration checkpoint, earlier phases are
    restored from it and only the remaining iterations run.
    """
    os.makedirs(out_dir, exist_ok=True)
    n_iterations = config.refinement.iterations
    plans = config.stage_plan.iterations[:n_iterations]
    lr_blocks = _iteration_lrs(config, 0)

    if resume_from is None:
        torch.manual_seed(derive_int_seed(config.seed, "model"))
        state = ModelState(config.encoder_spec(train_dataset.image_shape),
                           train_dataset.num_classes,
                           projection_dim=config.model.projection_dim)
        pretrain_rng = derive_rng(config.seed, "pretrain")
        supervised_rng = derive_rng(config.seed, "supervised")
        injection_rng = derive_rng(config.seed, "injection")
        log = _EpochLog(os.path.join(out_dir, "epochs.csv"))

        state, _ = pretrain(state, train_dataset.images, config.contrastive, pretrain_rng,
                            on_epoch=lambda e, loss, lr, n: log.row("pretrain", e, loss, lr, n))
        save_checkpoint(state, os.path.join(out_dir, "pretrain.ckpt"), "pretrain")

        def warmup_row(st):
            acc = evaluation.accuracy(state, test_dataset)
            log.row(st.phase, st.epoch, st.mean_loss, st.learning_rate, st.sample_count, acc)

        state, _ = warmup(state, train_dataset, config.train, supervised_rng, on_epoch=warmup_row)
        warmup_acc = evaluation.accuracy(state, test_dataset)
        refinement = RefinementState(working_labels=train_dataset.working_labels)
        save_checkpoint(state, os.path.join(out_dir, "warmup.ckpt"), "warmup",
                        extra={"refinement": _refinement_payload(refinement),
                               "warmup_accuracy": warmup_acc})
        start_iteration = 1
    else:
        state, phase, extra = load_checkpoint(resume_from)
        if "refinement" not in extra:
            raise CheckpointError(f"{resume_from} is a {phase} checkpoint without refinement state; "
                                  "resume needs warmup or iteration checkpoints")
        refinement = _restore_refinement(extra["refinement"], train_dataset)
        warmup_acc = extra["warmup_accuracy"]
        supervised_rng = derive_rng(config.seed, "supervised")
        supervised_rng.bit_generator.state = extra["rng_supervised"]
        injection_rng = derive_rng(config.seed, "injection")
        injection_rng.bit_generator.state = extra["rng_injection"]
        torch.set_rng_state(extra["torch_rng"])
        start_iteration = refinement.iteration + 1
        log = _EpochLog(os.path.join(out_dir, "epochs.csv"), append=True)

    if state.optimizer is None and n_iterations >= start_iteration:
        raise ContractError("checkpoint has no optimizer state; cannot continue training")

    for k in range(start_iteration, n_iterations + 1):
        plan = plans[k - 1]

        def iter_row(st):
            acc = evaluation.accuracy(state, test_dataset)
            log.row(st.phase, st.epoch, st.mean_loss, st.learning_rate, st.sample_count, acc)

        state, refinement, result = run_iteration(
            state, refinement, train_dataset, plan, config.train,
            config.contrastive.policy, supervised_rng, k, lr_blocks[k - 1],
            copies_per_sample=config.refinement.copies_per_sample,
            on_epoch=iter_row, injection_rng=injection_rng)
        _write_iteration_audit(os.path.join(out_dir, f"iter{k}_audit.csv"),
                               train_dataset, refinement, result)
        save_checkpoint(state, os.path.join(out_dir, f"iter{k}.ckpt"), f"iteration-{k}",
                        extra={"refinement": _refinement_payload(refinement),
                               "warmup_accuracy": warmup_acc,
                               "rng_supervised": supervised_rng.bit_generator.state,
                               "rng_injection": injection_rng.bit_generator.state,
                               "torch_rng": torch.get_rng_state()})

    test_acc = evaluation.accuracy(state, test_dataset)
    quality = evaluation.label_quality(refinement, train_dataset.oracle.clean_labels,
                                       train_dataset.noisy_labels)
    evaluation.write_quality_rows(quality, os.path.join(out_dir, "label_quality.csv"))
    report = evaluation.MetricsReport(
        dataset=config.dataset.variant, noise_rate=config.noise.target_rate,
        method="refinery", seed=config.seed, test_accuracy=test_acc,
        warmup_test_accuracy=warmup_acc, quality_rows=quality)
    evaluation.emit_report([report], os.path.join(out_dir, "report.csv"))
    log.close()
    return PipelineResult(model_state=state, refinement_state=refinement, report=report,
                          train_dataset=train_dataset, test_dataset=test_dataset,
                          warmup_accuracy=warmup_acc)
