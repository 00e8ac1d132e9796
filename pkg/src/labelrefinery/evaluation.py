"""Test accuracy, ground-truth label-quality metrics, and result tables."""

import csv
from dataclasses import dataclass, field

import numpy as np

from labelrefinery.exceptions import ContractError, IntegrityError
from labelrefinery.training import predict_labels


def accuracy(state, dataset, batch_size=512):
    """Fraction of argmax predictions matching the dataset's clean labels.

    Test-set inference is un-augmented and runs in inference mode.
    """
    if len(dataset) == 0:
        raise ContractError("cannot evaluate on an empty test set")
    preds = predict_labels(state, dataset.images, batch_size=batch_size)
    return float(np.mean(preds == dataset.oracle.clean_labels))


@dataclass
class QualityRow:
    """Oracle view of one refinement iteration (synthetic-noise runs only)."""

    iteration: int
    working_label_accuracy: float      # after this iteration's relabel step
    consensus_size: int
    consensus_clean_fraction: float    # clean fraction inside the consensus, pre-relabel
    base_clean_fraction: float         # clean fraction of the full base set, pre-relabel
    pseudo_label_precision: float      # fraction of relabeled samples now matching clean


def label_quality(refinement_state, clean_labels, noisy_labels):
    """Replay the relabel history against the ground-truth labels.

    Returns one QualityRow per iteration. Raises IntegrityError if the
    history is inconsistent with the provided noisy starting point.
    """
    clean = np.asarray(clean_labels)
    working = np.asarray(noisy_labels).copy()
    if len(clean) != len(working):
        raise IntegrityError("clean and noisy label arrays differ in length")
    rows = []
    for event in refinement_state.relabel_history:
        ids = event.sample_ids
        if not np.array_equal(working[ids], event.old_labels):
            raise IntegrityError(f"relabel history for iteration {event.iteration} "
                                 "does not chain from the provided noisy labels")
        base_clean = float(np.mean(working == clean))
        cons_clean = float(np.mean(working[ids] == clean[ids])) if ids.size else float("nan")
        working[ids] = event.new_labels
        precision = float(np.mean(working[ids] == clean[ids])) if ids.size else float("nan")
        rows.append(QualityRow(
            iteration=event.iteration,
            working_label_accuracy=float(np.mean(working == clean)),
            consensus_size=int(ids.size),
            consensus_clean_fraction=cons_clean,
            base_clean_fraction=base_clean,
            pseudo_label_precision=precision,
        ))
    if not np.array_equal(working, refinement_state.working_labels):
        raise IntegrityError("replayed working labels do not match the refinement state")
    return rows


@dataclass
class MetricsReport:
    dataset: str
    noise_rate: float
    method: str
    seed: int
    test_accuracy: float
    warmup_test_accuracy: float = float("nan")
    quality_rows: list = field(default_factory=list)


REPORT_FIELDS = ["dataset", "noise_rate", "method", "seed", "accuracy_pct"]
QUALITY_FIELDS = ["iteration", "working_label_accuracy", "consensus_size",
                  "consensus_clean_fraction", "base_clean_fraction", "pseudo_label_precision"]


def emit_report(reports, path):
    """One CSV row per (dataset, noise rate, method) with accuracy as a
    two-decimal percentage."""
    if not reports:
        raise ContractError("emit_report needs at least one report")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_FIELDS)
        for r in reports:
            writer.writerow([r.dataset, f"{r.noise_rate:g}", r.method, r.seed,
                             f"{100.0 * r.test_accuracy:.2f}"])


def parse_report(path):
    """Inverse of emit_report; returns a list of row dicts."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_FIELDS:
            raise IntegrityError(f"unexpected report header in {path}: {reader.fieldnames}")
        return [dict(row) for row in reader]


def write_quality_rows(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(QUALITY_FIELDS)
        for q in rows:
            writer.writerow([q.iteration, repr(q.working_label_accuracy), q.consensus_size,
                             repr(q.consensus_clean_fraction), repr(q.base_clean_fraction),
                             repr(q.pseudo_label_precision)])


def read_quality_rows(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(QualityRow(
                iteration=int(row["iteration"]),
                working_label_accuracy=float(row["working_label_accuracy"]),
                consensus_size=int(row["consensus_size"]),
                consensus_clean_fraction=float(row["consensus_clean_fraction"]),
                base_clean_fraction=float(row["base_clean_fraction"]),
                pseudo_label_precision=float(row["pseudo_label_precision"]),
            ))
    return rows
