"""Contrastive objective and pretraining loop contracts."""

import math

import numpy as np
import pytest
import torch

from labelrefinery.contrastive import ContrastiveConfig, nt_xent_loss, pretrain
from labelrefinery.data import BlobsSpec, make_blobs
from labelrefinery.exceptions import ConfigError, ContractError
from labelrefinery.models import EncoderSpec, ModelState


def orthogonal_pairs():
    """Two pairs {e1, e1} and {e2, e2} with e1 perpendicular to e2."""
    e1 = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64)
    e2 = torch.tensor([0.0, 1.0, 0.0, 0.0], dtype=torch.float64)
    return torch.stack([e1, e1, e2, e2])


class TestNtXentValues:
    def test_hand_case_orthogonal_pairs(self):
        """B=2, tau=1: every anchor sees one positive at similarity 1 and two
        negatives at 0, so the loss is ln(1 + 2/e) ~= 0.5514447139."""
        loss = nt_xent_loss(orthogonal_pairs(), temperature=1.0).item()
        expected = math.log(1.0 + 2.0 / math.e)
        assert abs(loss - expected) < 1e-6

    def test_hand_case_matches_brute_force_softmax(self):
        z = orthogonal_pairs().numpy()
        tau = 1.0
        total = 0.0
        for i in range(4):
            pos = i ^ 1
            sims = np.array([z[i] @ z[j] / tau for j in range(4) if j != i])
            pos_sim = z[i] @ z[pos] / tau
            total += -np.log(np.exp(pos_sim) / np.exp(sims).sum())
        brute = total / 4.0
        loss = nt_xent_loss(orthogonal_pairs(), temperature=1.0).item()
        assert abs(loss - brute) < 1e-12

    def test_rotation_invariance(self):
        gen = torch.Generator().manual_seed(0)
        raw = torch.randn(8, 6, generator=gen, dtype=torch.float64)
        z = raw / raw.norm(dim=1, keepdim=True)
        q, _ = torch.linalg.qr(torch.randn(6, 6, generator=gen, dtype=torch.float64))
        base = nt_xent_loss(z, 0.7).item()
        rotated = nt_xent_loss(z @ q, 0.7).item()
        assert abs(base - rotated) < 1e-6

    def test_small_temperature_limit(self):
        """Identical positives, orthogonal negatives: loss vanishes as the
        temperature shrinks."""
        eye = torch.eye(4, dtype=torch.float64)
        z = torch.stack([eye[0], eye[0], eye[1], eye[1], eye[2], eye[2]])
        loss = nt_xent_loss(z, temperature=0.05).item()
        assert 0.0 <= loss < 1e-3

    def test_positive_and_finite_for_random_batches(self):
        gen = torch.Generator().manual_seed(3)
        for _ in range(20):
            raw = torch.randn(12, 5, generator=gen)
            z = raw / raw.norm(dim=1, keepdim=True)
            loss = nt_xent_loss(z, 0.5).item()
            assert math.isfinite(loss)
            assert loss > 0.0


class TestNtXentContracts:
    def test_single_pair_rejected(self):
        z = orthogonal_pairs()[:2]
        with pytest.raises(ContractError, match="negatives"):
            nt_xent_loss(z, 1.0)

    def test_unnormalized_rows_rejected(self):
        z = orthogonal_pairs() * 2.0
        with pytest.raises(ContractError, match="unit"):
            nt_xent_loss(z, 1.0)

    def test_gradient_matches_central_differences(self):
        gen = torch.Generator().manual_seed(5)
        raw = torch.randn(6, 4, generator=gen, dtype=torch.float64)  # B=3, d=4
        z = (raw / raw.norm(dim=1, keepdim=True)).clone().requires_grad_(True)
        analytic = torch.autograd.grad(nt_xent_loss(z, 0.5), z)[0]
        rng = np.random.default_rng(6)
        h = 1e-6
        for _ in range(12):
            i, j = int(rng.integers(0, 6)), int(rng.integers(0, 4))
            zp = z.detach().clone()
            zp[i, j] += h
            zm = z.detach().clone()
            zm[i, j] -= h
            fd = (nt_xent_loss(zp, 0.5).item() - nt_xent_loss(zm, 0.5).item()) / (2 * h)
            a = analytic[i, j].item()
            assert abs(a - fd) / max(abs(a), abs(fd), 1e-8) < 1e-4


def tiny_state(seed=0, num_classes=3):
    torch.manual_seed(seed)
    return ModelState(EncoderSpec(architecture="tiny_mlp", embedding_dim=16,
                                  input_shape=(16, 16, 3)), num_classes, projection_dim=8)


def flat_params(state):
    return torch.cat([p.detach().flatten() for m in state.modules() for p in m.parameters()])


class TestPretrainLoop:
    def test_zero_epochs_is_identity(self):
        state = tiny_state()
        before = flat_params(state).clone()
        config = ContrastiveConfig(epochs=0, batch_size=8)
        out, losses = pretrain(state, make_blobs(BlobsSpec(num_samples=16)).images,
                               config, np.random.default_rng(0))
        assert losses == []
        assert torch.equal(flat_params(out), before)

    def test_loss_log_length_matches_epochs(self):
        ds = make_blobs(BlobsSpec(num_samples=32, seed=1))
        config = ContrastiveConfig(epochs=5, batch_size=16, learning_rate=0.05)
        _, losses = pretrain(tiny_state(), ds.images, config, np.random.default_rng(1))
        assert len(losses) == 5
        assert all(math.isfinite(x) for x in losses)

    def test_outcome_independent_of_labels(self):
        """The loop receives images only; permuting every label track cannot
        change a single parameter bit."""
        ds = make_blobs(BlobsSpec(num_samples=32, seed=2))
        config = ContrastiveConfig(epochs=2, batch_size=16, learning_rate=0.05)
        s1, _ = pretrain(tiny_state(seed=4), ds.images, config, np.random.default_rng(7))
        ds.working_labels[:] = np.random.default_rng(0).permutation(ds.working_labels)
        s2, _ = pretrain(tiny_state(seed=4), ds.images, config, np.random.default_rng(7))
        assert torch.equal(flat_params(s1), flat_params(s2))

    def test_loss_decreases_on_toy_data(self):
        ds = make_blobs(BlobsSpec(num_samples=256, seed=3))
        config = ContrastiveConfig(epochs=5, batch_size=64, learning_rate=0.1)
        _, losses = pretrain(tiny_state(seed=2), ds.images, config, np.random.default_rng(3))
        assert losses[-1] <= losses[0]

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ContrastiveConfig(temperature=0.0)
        with pytest.raises(ConfigError):
            ContrastiveConfig(batch_size=1)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ContractError):
            pretrain(tiny_state(), np.zeros((0, 16, 16, 3), dtype=np.uint8),
                     ContrastiveConfig(), np.random.default_rng(0))
