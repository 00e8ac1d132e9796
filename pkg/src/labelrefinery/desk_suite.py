"""Desk-scale verification battery.

Each check returns a CheckResult; the CLI command `reproduce-desk-suite`
prints one pass/fail line per check, and the pytest acceptance module
asserts the same results. The efficacy battery runs the full pipeline on
the toy dataset over several seeds and is the expensive part (minutes per
seed on one CPU core).
"""

import math
import os
from dataclasses import dataclass, replace

import numpy as np
import torch

from labelrefinery import noise
from labelrefinery.config import RunConfig
from labelrefinery.contrastive import nt_xent_loss
from labelrefinery.data import BlobsSpec, make_blobs
from labelrefinery.noise import IdnSpec, inject_idn
from labelrefinery.refinery import SelectionLedger, consensus, record_stage
from labelrefinery.training import cross_entropy

EFFICACY_SEEDS = (0, 1, 2, 3, 4)
MIN_LABEL_GAIN = 0.05
MIN_TEST_GAIN = 0.03
MIN_SELECTION_SEEDS = 4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def format_result(res):
    return f"[{'PASS' if res.passed else 'FAIL'}] {res.name}: {res.detail}"


def desk_config(seed=0, output_dir="runs/desk"):
    """The canonical desk-scale configuration: 3,000-sample toy dataset,
    3 classes, 30% instance-dependent noise, full pipeline."""
    return replace(RunConfig(), seed=seed, output_dir=output_dir)


# ---------------------------------------------------------------------------
# Cheap analytic checks
# ---------------------------------------------------------------------------

def check_nt_xent_hand_case():
    e1 = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64)
    e2 = torch.tensor([0.0, 1.0, 0.0, 0.0], dtype=torch.float64)
    z = torch.stack([e1, e1, e2, e2])
    loss = nt_xent_loss(z, temperature=1.0).item()
    expected = math.log(1.0 + 2.0 / math.e)
    ok = abs(loss - expected) < 1e-6
    return CheckResult("nt-xent hand case", ok, f"loss {loss:.10f} vs ln(1+2/e) {expected:.10f}")


def check_nt_xent_gradient(d=4, b=3, rel_tol=1e-4):
    gen = torch.Generator().manual_seed(7)
    raw = torch.randn(2 * b, d, generator=gen, dtype=torch.float64)
    z = (raw / raw.norm(dim=1, keepdim=True)).clone().requires_grad_(True)
    loss = nt_xent_loss(z, temperature=0.5)
    analytic = torch.autograd.grad(loss, z)[0]
    rng = np.random.default_rng(11)
    worst = 0.0
    h = 1e-6
    for _ in range(10):
        i = int(rng.integers(0, 2 * b))
        j = int(rng.integers(0, d))
        zp = z.detach().clone(); zp[i, j] += h
        zm = z.detach().clone(); zm[i, j] -= h
        fd = (nt_xent_loss(zp, 0.5).item() - nt_xent_loss(zm, 0.5).item()) / (2 * h)
        a = analytic[i, j].item()
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
        worst = max(worst, rel)
    ok = worst < rel_tol
    return CheckResult("nt-xent gradient vs central differences", ok,
                       f"worst relative error {worst:.2e} (tol {rel_tol:g}) at d={d}, B={b}")


def check_cross_entropy_analytic():
    worst = 0.0
    for k in (2, 10, 100):
        loss = cross_entropy(np.zeros(k), 0)
        worst = max(worst, abs(loss - math.log(k)))
    ok = worst < 1e-9
    return CheckResult("cross-entropy uniform-logit values", ok,
                       f"max |loss - ln K| = {worst:.2e} over K in (2, 10, 100)")


def check_per_sample_losses_brute_force():
    from labelrefinery.models import EncoderSpec, ModelState, forward_logits, to_model_input
    from labelrefinery.training import per_sample_losses

    spec = BlobsSpec(num_samples=100, num_classes=3, image_size=16, seed=5)
    ds = make_blobs(spec)
    torch.manual_seed(3)
    state = ModelState(EncoderSpec(architecture="small_resnet_w16", input_shape=ds.image_shape), 3)
    losses = per_sample_losses(state, ds)
    state.set_mode(False)
    with torch.no_grad():
        logits = forward_logits(state, to_model_input(ds.images)).double().numpy()
    brute = np.array([cross_entropy(logits[i], ds.working_labels[i]) for i in range(len(ds))])
    worst = float(np.abs(losses - brute).max())
    ok = worst < 1e-6
    return CheckResult("per-sample losses vs single-sample loop", ok,
                       f"max |batched - loop| = {worst:.2e} over 100 samples")


def check_idn_calibration(n=50_000):
    spec = BlobsSpec(num_samples=n, num_classes=10, image_size=16, seed=2)
    ds = make_blobs(spec)
    details = []
    ok = True
    for rate in (0.2, 0.5):
        noisy, ledger = inject_idn(ds, IdnSpec(target_rate=rate, seed=123))
        realized = float(ledger.flipped.mean())
        ok = ok and abs(realized - rate) <= 0.02
        ok = ok and np.array_equal(ledger.original_label, ds.oracle.clean_labels)
        ok = ok and np.array_equal(noisy.working_labels, ledger.corrupted_label)
        details.append(f"target {rate} -> realized {realized:.4f}")
    # duplicated images must flip identically
    small = make_blobs(BlobsSpec(num_samples=500, num_classes=10, image_size=16, seed=3))
    dup_images = np.concatenate([small.images, small.images])
    dup_clean = np.concatenate([small.oracle.clean_labels] * 2)
    from labelrefinery.data import LabeledImageDataset, LabelOracle
    dup = LabeledImageDataset(images=dup_images, noisy_labels=dup_clean.copy(),
                              working_labels=dup_clean.copy(),
                              sample_ids=np.arange(1000), num_classes=10,
                              oracle=LabelOracle(dup_clean))
    _, dup_ledger = inject_idn(dup, IdnSpec(target_rate=0.3, seed=9))
    agree = np.array_equal(dup_ledger.corrupted_label[:500], dup_ledger.corrupted_label[500:])
    ok = ok and agree
    details.append(f"duplicate decisions agree: {agree}")
    return CheckResult("idn calibration and ledger round-trip", ok, "; ".join(details))


def check_refinery_correctness():
    rng = np.random.default_rng(21)
    ledger = SelectionLedger()
    theta = 1.0
    losses = rng.uniform(0.0, 2.0, size=(3, 1000))
    for stage, ls in zip((2, 5, 7), losses):
        record_stage(ledger, 1, stage, ls, theta)
    ids = consensus(ledger, 1, (2, 5, 7))
    brute = np.array([i for i in range(1000)
                      if all(losses[s][i] < theta for s in range(3))])
    exact = np.array_equal(ids, brute)
    boundary = record_stage(SelectionLedger(), 9, 2, np.array([0.5, 1.0, 1.5]), 1.0)
    strict = list(boundary) == [True, False, False]
    ok = exact and strict
    return CheckResult("consensus vs brute-force intersection", ok,
                       f"exact match on 1000x3 random masks: {exact}; strict boundary: {strict}")


# ---------------------------------------------------------------------------
# Full-pipeline batteries
# ---------------------------------------------------------------------------

def run_desk_pipeline(seed, out_dir):
    """One full desk-scale run; returns the PipelineResult."""
    from labelrefinery.pipeline import prepare_noise, run_pipeline
    config = desk_config(seed=seed, output_dir=out_dir)
    train, test, ledger = prepare_noise(config)
    os.makedirs(out_dir, exist_ok=True)
    noise.write_ledger(os.path.join(out_dir, "ledger.csv"), train.sample_ids, ledger)
    return run_pipeline(config, train, test, out_dir)


def summarize_run(result):
    initial = float(np.mean(result.train_dataset.noisy_labels ==
                            result.train_dataset.oracle.clean_labels))
    rows = result.report.quality_rows
    return {
        "initial_label_accuracy": initial,
        "final_label_accuracy": rows[-1].working_label_accuracy if rows else initial,
        "selection_ok": all(r.consensus_clean_fraction >= r.base_clean_fraction for r in rows),
        "warmup_test_accuracy": result.warmup_accuracy,
        "final_test_accuracy": result.report.test_accuracy,
        "final_working_labels": result.train_dataset.working_labels.copy(),
    }


def run_efficacy_battery(workdir, seeds=EFFICACY_SEEDS):
    summaries = []
    for seed in seeds:
        result = run_desk_pipeline(seed, os.path.join(workdir, f"seed{seed}"))
        summaries.append(summarize_run(result))
    return summaries


def check_efficacy(summaries):
    selection_hits = sum(1 for s in summaries if s["selection_ok"])
    label_gains = sorted(s["final_label_accuracy"] - s["initial_label_accuracy"] for s in summaries)
    test_gains = sorted(s["final_test_accuracy"] - s["warmup_test_accuracy"] for s in summaries)
    median_label = label_gains[len(label_gains) // 2]
    median_test = test_gains[len(test_gains) // 2]
    checks = [
        CheckResult("selection never anti-selects",
                    selection_hits >= MIN_SELECTION_SEEDS,
                    f"consensus clean fraction >= base fraction at every iteration in "
                    f"{selection_hits}/{len(summaries)} seeds (need >= {MIN_SELECTION_SEEDS})"),
        CheckResult("median working-label gain",
                    median_label >= MIN_LABEL_GAIN,
                    f"median gain {median_label:+.4f} (need >= +{MIN_LABEL_GAIN})"),
        CheckResult("median test-accuracy gain over warmup",
                    median_test >= MIN_TEST_GAIN,
                    f"median gain {median_test:+.4f} (need >= +{MIN_TEST_GAIN})"),
    ]
    return checks


def check_determinism(workdir):
    a = run_desk_pipeline(EFFICACY_SEEDS[0], os.path.join(workdir, "det_a"))
    b = run_desk_pipeline(EFFICACY_SEEDS[0], os.path.join(workdir, "det_b"))
    labels_equal = np.array_equal(a.train_dataset.working_labels, b.train_dataset.working_labels)
    acc_equal = a.report.test_accuracy == b.report.test_accuracy
    ok = labels_equal and acc_equal
    return CheckResult("run-twice determinism", ok,
                       f"working labels identical: {labels_equal}; "
                       f"test accuracy {a.report.test_accuracy:.4f} == {b.report.test_accuracy:.4f}: {acc_equal}")


def run_suite(workdir, quick=False):
    results = [
        check_nt_xent_hand_case(),
        check_nt_xent_gradient(),
        check_cross_entropy_analytic(),
        check_per_sample_losses_brute_force(),
        check_idn_calibration(),
        check_refinery_correctness(),
    ]
    if not quick:
        summaries = run_efficacy_battery(os.path.join(workdir, "efficacy"))
        results.extend(check_efficacy(summaries))
        results.append(check_determinism(workdir))
    return results
