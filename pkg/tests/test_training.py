"""Supervised trainer contracts: the cross-entropy primitive, per-sample
loss evaluation, and the warmup/epoch loops."""

import math

import numpy as np
import pytest
import torch

from labelrefinery.data import BlobsSpec, make_blobs
from labelrefinery.exceptions import ConfigError, ContractError
from labelrefinery.models import EncoderSpec, ModelState, forward_logits, to_model_input
from labelrefinery.refinery import InjectedSample
from labelrefinery.training import (TrainPhaseConfig, cross_entropy, per_sample_losses,
                                    predict_labels, train_epoch, warmup)


class TestCrossEntropy:
    def test_uniform_logits_give_log_k(self):
        for k in (2, 10, 100):
            assert abs(cross_entropy(np.zeros(k), 0) - math.log(k)) < 1e-9

    def test_saturated_true_class(self):
        logits = np.zeros(10)
        logits[3] = 1000.0
        assert cross_entropy(logits, 3) < 1e-6

    def test_two_class_hand_value(self):
        # softmax((1, 0))[0] = 1/(1+e^-1), so the loss is ln(1+e^-1)
        loss = cross_entropy(np.array([1.0, 0.0]), 0)
        assert abs(loss - math.log(1.0 + math.exp(-1.0))) < 1e-9

    def test_label_out_of_range(self):
        with pytest.raises(ContractError):
            cross_entropy(np.zeros(5), 5)
        with pytest.raises(ContractError):
            cross_entropy(np.zeros(5), -1)

    def test_extreme_logits_stay_finite(self):
        logits = np.array([1e30, -1e30, 0.0])
        assert math.isfinite(cross_entropy(logits, 2))


def small_state(seed=0, num_classes=3, arch="small_resnet_w16"):
    torch.manual_seed(seed)
    return ModelState(EncoderSpec(architecture=arch, input_shape=(16, 16, 3)), num_classes)


def small_dataset(n=64, seed=0, k=3):
    return make_blobs(BlobsSpec(num_samples=n, num_classes=k, seed=seed))


class TestPerSampleLosses:
    def test_matches_single_sample_loop(self):
        ds = small_dataset(100, seed=1)
        state = small_state(1)
        losses = per_sample_losses(state, ds)
        state.set_mode(False)
        with torch.no_grad():
            logits = forward_logits(state, to_model_input(ds.images)).double().numpy()
        brute = np.array([cross_entropy(logits[i], ds.working_labels[i]) for i in range(len(ds))])
        assert np.abs(losses - brute).max() < 1e-6

    def test_uniform_model_gives_log_k_everywhere(self):
        ds = small_dataset(32, seed=2)
        state = small_state(2)
        with torch.no_grad():
            state.classifier.weight.zero_()
            state.classifier.bias.zero_()
        losses = per_sample_losses(state, ds)
        assert np.abs(losses - math.log(3)).max() < 1e-6

    def test_duplicate_samples_equal_losses(self):
        ds = small_dataset(8, seed=3)
        ds.images[1] = ds.images[0]
        ds.working_labels[1] = ds.working_labels[0]
        losses = per_sample_losses(small_state(3), ds)
        assert losses[0] == losses[1]

    def test_bit_identical_across_calls(self):
        ds = small_dataset(48, seed=4)
        state = small_state(4)
        a = per_sample_losses(state, ds)
        b = per_sample_losses(state, ds)
        assert np.array_equal(a, b)

    def test_covers_base_samples_only(self):
        ds = small_dataset(16, seed=5)
        assert per_sample_losses(small_state(5), ds).shape == (16,)


class TestEpochLoops:
    def config(self, **kw):
        defaults = dict(warmup_epochs=2, batch_size=16, learning_rate=0.05)
        defaults.update(kw)
        return TrainPhaseConfig(**defaults)

    def test_warmup_zero_epochs_keeps_state(self):
        ds = small_dataset(16, seed=6)
        state = small_state(6)
        before = [p.detach().clone() for m in state.modules() for p in m.parameters()]
        state, stats = warmup(state, ds, self.config(warmup_epochs=0), np.random.default_rng(0))
        after = [p.detach() for m in state.modules() for p in m.parameters()]
        assert stats == []
        assert all(torch.equal(a, b) for a, b in zip(before, after))

    def test_warmup_logs_one_stat_per_epoch(self):
        ds = small_dataset(32, seed=7)
        state = small_state(7)
        state, stats = warmup(state, ds, self.config(warmup_epochs=5), np.random.default_rng(1))
        assert len(stats) == 5
        assert [s.epoch for s in stats] == [1, 2, 3, 4, 5]

    def test_warmup_on_clean_labels_beats_chance(self):
        ds = small_dataset(300, seed=8)
        state = small_state(8)
        state, _ = warmup(state, ds, self.config(warmup_epochs=5, batch_size=64,
                                                 learning_rate=0.08),
                          np.random.default_rng(2))
        preds = predict_labels(state, ds.images)
        assert np.mean(preds == ds.working_labels) > 1.0 / 3.0

    def test_train_epoch_counts_injected_samples(self):
        ds = small_dataset(32, seed=9)
        state = small_state(9)
        state.configure_optimizer("supervised", 0.01)
        injected = [InjectedSample(source_id=0, image=ds.images[0], label_at_injection=0, iteration=1)
                    for _ in range(10)]
        state, stats = train_epoch(state, ds, self.config(), np.random.default_rng(3), 0.01,
                                   injected=injected)
        assert stats.sample_count == 42

    def test_fixed_seed_reproduces_epoch_stats(self):
        ds = small_dataset(32, seed=10)
        results = []
        for _ in range(2):
            state = small_state(10)
            state.configure_optimizer("supervised", 0.02)
            _, stats = train_epoch(state, ds, self.config(), np.random.default_rng(4), 0.02)
            results.append(stats)
        assert results[0].mean_loss == results[1].mean_loss
        assert results[0].sample_count == results[1].sample_count

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainPhaseConfig(warmup_epochs=-1)
        with pytest.raises(ConfigError):
            TrainPhaseConfig(loss_threshold=0.0)
