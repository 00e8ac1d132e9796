"""Iterative pseudo-label refinement: stage snapshots, loss-threshold
filtering, cross-stage consensus, pseudo-label assignment with retention,
and augmented re-injection.

An iteration trains for a fixed number of epochs; at each designated stage
epoch the per-sample losses are snapshotted and thresholded into a
selection mask. At the iteration's end, samples selected at every stage
(the consensus) take the model's predicted label as their new working
label; everyone else retains their current label. Consensus samples are
additionally re-injected as strongly augmented copies for subsequent
epochs.
"""

from dataclasses import dataclass, field

import numpy as np

from labelrefinery import augment as augment_mod
from labelrefinery.exceptions import ConfigError, ContractError, IntegrityError
from labelrefinery.models import cosine_lr
from labelrefinery.training import per_sample_losses, predict_labels, train_epoch


@dataclass(frozen=True)
class IterationPlan:
    epochs: int
    stage_epochs: tuple

    def __post_init__(self):
        stages = tuple(self.stage_epochs)
        if len(stages) == 0:
            raise ConfigError("an iteration needs at least one stage epoch")
        if sorted(set(stages)) != list(stages):
            raise ConfigError(f"stage epochs must be strictly increasing, got {stages}")
        if stages[0] < 1 or stages[-1] > self.epochs:
            raise ConfigError(f"stage epochs {stages} must lie within [1, {self.epochs}]")


@dataclass(frozen=True)
class StagePlan:
    """Per-iteration epoch budgets and stage epochs (1-based within each
    iteration). Default: iteration 1 snapshots at epochs 2, 3, 4; later
    iterations at epochs 2, 5, 7."""

    iterations: tuple

    def __post_init__(self):
        if len(self.iterations) == 0:
            raise ConfigError("stage plan needs at least one iteration")

    @classmethod
    def default(cls, num_iterations=4):
        plans = []
        for k in range(1, num_iterations + 1):
            if k == 1:
                plans.append(IterationPlan(epochs=4, stage_epochs=(2, 3, 4)))
            else:
                plans.append(IterationPlan(epochs=7, stage_epochs=(2, 5, 7)))
        return cls(iterations=tuple(plans))

    def to_dict(self):
        return [{"epochs": p.epochs, "stage_epochs": list(p.stage_epochs)} for p in self.iterations]

    @classmethod
    def from_dict(cls, entries):
        plans = []
        for e in entries:
            unknown = set(e) - {"epochs", "stage_epochs"}
            if unknown:
                raise ConfigError(f"unknown stage plan keys: {sorted(unknown)}")
            plans.append(IterationPlan(epochs=int(e["epochs"]), stage_epochs=tuple(e["stage_epochs"])))
        return cls(iterations=tuple(plans))


class SelectionLedger:
    """Immutable-once-recorded stage selection masks keyed by
    (iteration, stage epoch)."""

    def __init__(self):
        self._masks = {}
        self._thresholds = {}

    def record(self, iteration, stage_epoch, losses, threshold):
        key = (int(iteration), int(stage_epoch))
        if key in self._masks:
            raise IntegrityError(f"stage {key} already recorded")
        mask = np.asarray(losses) < threshold  # strict: boundary losses are not selected
        self._masks[key] = mask
        self._thresholds[key] = float(threshold)
        return mask

    def mask(self, iteration, stage_epoch):
        return self._masks[(iteration, stage_epoch)]

    def threshold(self, iteration, stage_epoch):
        return self._thresholds[(iteration, stage_epoch)]

    def stages_recorded(self, iteration):
        return sorted(s for (it, s) in self._masks if it == iteration)

    def state_dict(self):
        return {"masks": {f"{k[0]}:{k[1]}": v.copy() for k, v in self._masks.items()},
                "thresholds": {f"{k[0]}:{k[1]}": v for k, v in self._thresholds.items()}}

    @classmethod
    def from_state_dict(cls, payload):
        ledger = cls()
        for key, mask in payload["masks"].items():
            it, st = key.split(":")
            ledger._masks[(int(it), int(st))] = np.asarray(mask, dtype=bool)
        for key, th in payload["thresholds"].items():
            it, st = key.split(":")
            ledger._thresholds[(int(it), int(st))] = float(th)
        return ledger


def record_stage(ledger, iteration, stage_epoch, losses, threshold):
    """Threshold a per-sample loss snapshot into the ledger (strict <)."""
    mask = ledger.record(iteration, stage_epoch, losses, threshold)
    return mask


def consensus(ledger, iteration, stage_epochs):
    """Sample ids selected at every stage of the iteration (mask AND)."""
    masks = []
    for stage in stage_epochs:
        try:
            masks.append(ledger.mask(iteration, stage))
        except KeyError:
            raise ContractError(f"stage {stage} of iteration {iteration} has no recorded mask") from None
    combined = np.logical_and.reduce(masks)
    return np.flatnonzero(combined)


@dataclass
class InjectedSample:
    source_id: int
    image: np.ndarray          # uint8, pre-augmented, consumed as-is
    label_at_injection: int    # audit only; training reads the source's current label
    iteration: int


@dataclass
class RelabelEvent:
    iteration: int
    sample_ids: np.ndarray
    old_labels: np.ndarray
    new_labels: np.ndarray


@dataclass
class RefinementState:
    """Mutable refinement bookkeeping. working_labels is the same array
    object as the dataset's working track, so label updates are visible to
    the trainer without copying."""

    working_labels: np.ndarray
    iteration: int = 0
    label_provenance: np.ndarray = None  # -1 original, k >= 1 pseudo(iteration k)
    injected: list = field(default_factory=list)
    ledger: SelectionLedger = field(default_factory=SelectionLedger)
    relabel_history: list = field(default_factory=list)

    def __post_init__(self):
        if self.label_provenance is None:
            self.label_provenance = np.full(len(self.working_labels), -1, dtype=np.int64)


def assign_pseudo_labels(state, consensus_ids, predictions):
    """working_labels[i] := predictions[i] for consensus samples; all other
    entries are untouched. Provenance records the assigning iteration even
    when the value is unchanged."""
    n = len(state.working_labels)
    ids = np.asarray(consensus_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ContractError(f"consensus ids out of range [0, {n})")
    old = state.working_labels[ids].copy()
    state.working_labels[ids] = predictions[ids]
    state.label_provenance[ids] = state.iteration
    state.relabel_history.append(RelabelEvent(
        iteration=state.iteration, sample_ids=ids,
        old_labels=old, new_labels=state.working_labels[ids].copy()))
    return state


def augment_and_inject(state, dataset, consensus_ids, policy, copies_per_sample, rng):
    """Append strongly augmented copies of this iteration's consensus
    samples to the injected registry. The base dataset is untouched."""
    for sid in np.asarray(consensus_ids, dtype=np.int64):
        for _ in range(copies_per_sample):
            image = augment_mod.apply_policy(dataset.images[sid], policy, rng)
            state.injected.append(InjectedSample(
                source_id=int(sid), image=image,
                label_at_injection=int(state.working_labels[sid]),
                iteration=state.iteration))
    return state


@dataclass
class IterationResult:
    iteration: int
    epoch_stats: list
    stage_epochs: tuple
    consensus_ids: np.ndarray
    predictions: np.ndarray
    stage_masks: dict  # stage epoch -> mask


def run_iteration(model_state, refinement_state, dataset, plan_entry, train_config,
                  policy, rng, iteration, epoch_lrs, copies_per_sample=1, on_epoch=None,
                  injection_rng=None):
    """Run one refinement iteration: train plan_entry.epochs epochs over
    base + injected samples, snapshot stages, then relabel the consensus
    and inject augmented copies.

    `rng` drives epoch shuffling and light augmentation; `injection_rng`
    (defaults to `rng`) drives the strong augmentation of injected copies.
    """
    if len(epoch_lrs) != plan_entry.epochs:
        raise ContractError(f"need {plan_entry.epochs} learning rates, got {len(epoch_lrs)}")
    if injection_rng is None:
        injection_rng = rng
    refinement_state.iteration = iteration
    theta = train_config.loss_threshold
    stats = []
    for epoch in range(1, plan_entry.epochs + 1):
        model_state, st = train_epoch(
            model_state, dataset, train_config, rng, epoch_lrs[epoch - 1],
            injected=refinement_state.injected, phase=f"iteration-{iteration}", epoch=epoch)
        stats.append(st)
        if on_epoch is not None:
            on_epoch(st)
        if epoch in plan_entry.stage_epochs:
            losses = per_sample_losses(model_state, dataset, batch_size=train_config.eval_batch_size)
            record_stage(refinement_state.ledger, iteration, epoch, losses, theta)
    ids = consensus(refinement_state.ledger, iteration, plan_entry.stage_epochs)
    predictions = predict_labels(model_state, dataset.images, batch_size=train_config.eval_batch_size)
    assign_pseudo_labels(refinement_state, ids, predictions)
    augment_and_inject(refinement_state, dataset, ids, policy, copies_per_sample, injection_rng)
    masks = {s: refinement_state.ledger.mask(iteration, s) for s in plan_entry.stage_epochs}
    return model_state, refinement_state, IterationResult(
        iteration=iteration, epoch_stats=stats, stage_epochs=tuple(plan_entry.stage_epochs),
        consensus_ids=ids, predictions=predictions, stage_masks=masks)
