import math

import pytest
import torch
from hypothesis import given, settings, strategies as st
from mpmath import mp, mpf, log as mlog

from oracles import bce_reference, central_diff, hybrid_reference, rel_err
from ugda_seg.losses import (
    LossConfig,
    active_loss,
    bce,
    dice_loss,
    entropy_weight_map,
    hybrid_loss,
    pixel_entropy,
    weighted_bce,
)


def _mp_entropy(p):
    mp.dps = 30
    p = mpf(p)
    return float(-(p * mlog(p, 2) + (1 - p) * mlog(1 - p, 2)))


def _batch(seed=0, shape=(2, 1, 6, 6), dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    logits = torch.randn(shape, generator=g, dtype=dtype) * 2
    target = (torch.rand(shape, generator=g) > 0.5).to(dtype)
    return logits, target


class TestEntropy:
    def test_half(self):
        assert pixel_entropy(torch.tensor(0.5)).item() == 1.0

    def test_quarter(self):
        expected = _mp_entropy("0.25")
        assert expected == pytest.approx(0.811278, abs=1e-6)
        assert pixel_entropy(torch.tensor(0.25, dtype=torch.float64)).item() == pytest.approx(expected, abs=1e-12)

    def test_confident(self):
        assert pixel_entropy(torch.tensor([0.0, 1.0])).max().item() < 1e-5

    @given(st.floats(0, 1))
    def test_symmetry_and_bounds(self, p):
        t = torch.tensor(p, dtype=torch.float64)
        h = pixel_entropy(t)
        assert 0 <= h.item() <= 1
        assert h.item() == pytest.approx(pixel_entropy(1 - t).item(), abs=1e-9)


class TestWeights:
    def test_values(self):
        assert entropy_weight_map(torch.tensor(0.5), 0.3).item() == pytest.approx(1.3)
        w = entropy_weight_map(torch.tensor(0.25, dtype=torch.float64), 0.3).item()
        assert w == pytest.approx(1 + 0.3 * _mp_entropy("0.25"), abs=1e-12)
        assert w == pytest.approx(1.2433834, abs=1e-7)

    def test_beta_zero(self):
        assert torch.all(entropy_weight_map(torch.rand(2, 1, 4, 4), 0.0) == 1.0)

    def test_negative_beta(self):
        with pytest.raises(ValueError):
            entropy_weight_map(torch.rand(3), -0.1)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
    def test_bounds_exact(self, ps):
        w = entropy_weight_map(torch.tensor(ps, dtype=torch.float32), 0.3)
        assert torch.all(w >= 1.0) and torch.all(w <= 1.3)

    def test_detached(self):
        p = torch.rand(4, requires_grad=True)
        assert not entropy_weight_map(p).requires_grad


class TestBCE:
    def test_log2_at_zero_logit(self):
        loss = weighted_bce(torch.zeros(1, 1, 2, 2), torch.ones(1, 1, 2, 2), torch.ones(1, 1, 2, 2))
        assert loss.item() == pytest.approx(math.log(2), abs=1e-7)

    def test_confident_is_zero(self):
        t = (torch.rand(1, 1, 5, 5) > 0.5).float()
        assert weighted_bce((t * 2 - 1) * 50, t).item() < 1e-12

    def test_linear_in_weights(self):
        logits, target = _batch()
        w = torch.rand_like(logits) + 0.5
        assert weighted_bce(logits, target, 2 * w).item() == pytest.approx(2 * weighted_bce(logits, target, w).item(), rel=1e-12)

    def test_matches_reference(self):
        logits, target = _batch(1)
        assert bce(logits, target).item() == pytest.approx(bce_reference(logits, target).item(), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            weighted_bce(torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 2, 3))


class TestDice:
    def test_perfect(self):
        g = torch.zeros(1, 1, 20, 20)
        g[0, 0, :10, :10] = 1
        assert dice_loss(g.clone(), g).item() == pytest.approx(0.0, abs=1e-12)

    def test_empty_prediction(self):
        g = torch.zeros(1, 1, 20, 20, dtype=torch.float64)
        g[0, 0, :10, :10] = 1
        assert dice_loss(torch.zeros_like(g), g, 1.0).item() == pytest.approx(1 - 1 / 101, abs=1e-12)

    def test_empty_empty(self):
        z = torch.zeros(1, 1, 4, 4)
        assert dice_loss(z, z).item() == 0.0

    @given(st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_range(self, seed):
        logits, target = _batch(seed)
        v = dice_loss(torch.sigmoid(logits), target).item()
        assert 0 <= v < 1


class TestHybrid:
    def test_beta_zero(self):
        logits, target = _batch(2)
        cfg = LossConfig(beta=0.0)
        expected = 0.7 * bce_reference(logits, target) + 0.3 * dice_loss(torch.sigmoid(logits), target)
        assert hybrid_loss(logits, target, cfg).item() == pytest.approx(expected.item(), abs=1e-9)

    def test_lambda_dice_zero_is_bce(self):
        logits, target = _batch(3)
        cfg = LossConfig(beta=0.0, lambda_bce=1.0, lambda_dice=0.0)
        assert hybrid_loss(logits, target, cfg).item() == pytest.approx(bce_reference(logits, target).item(), abs=1e-9)

    def test_decomposition(self):
        logits, target = _batch(4)
        p = torch.sigmoid(logits)
        w = entropy_weight_map(p, 0.3)
        parts = 0.7 * weighted_bce(logits, target, w) + 0.3 * dice_loss(p, target)
        assert hybrid_loss(logits, target).item() == pytest.approx(parts.item(), abs=1e-9)
        assert hybrid_loss(logits, target).item() == pytest.approx(hybrid_reference(logits, target).item(), abs=1e-9)

    def test_confident_near_zero(self):
        t = torch.zeros(1, 1, 8, 8)
        t[..., 2:6, 2:6] = 1
        assert hybrid_loss((t * 2 - 1) * 40, t).item() < 1e-6

    @given(st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_non_negative(self, seed):
        logits, target = _batch(seed)
        assert hybrid_loss(logits, target).item() >= 0
        assert bce(logits, target).item() >= 0

    def test_gradient_finite_differences(self):
        logits, target = _batch(5, shape=(1, 1, 5, 5))
        logits.requires_grad_(True)
        hybrid_loss(logits, target).backward()
        frozen_w = (1 + 0.3 * pixel_entropy(torch.sigmoid(logits.detach()))).clone()
        with torch.no_grad():
            fd = central_diff(lambda: hybrid_reference(logits, target, weights=frozen_w), logits)
        assert rel_err(logits.grad, fd) < 1e-4

    def test_weight_stop_gradient(self):
        # the analytic gradient equals the one obtained with W passed in as a constant
        logits, target = _batch(6)
        a = logits.clone().requires_grad_(True)
        hybrid_loss(a, target).backward()
        b = logits.clone().requires_grad_(True)
        w = 1 + 0.3 * pixel_entropy(torch.sigmoid(logits))
        (0.7 * weighted_bce(b, target, w) + 0.3 * dice_loss(torch.sigmoid(b), target)).backward()
        assert torch.allclose(a.grad, b.grad, atol=1e-15)
        # and differs from letting gradient flow through W
        c = logits.clone().requires_grad_(True)
        wc = 1 + 0.3 * pixel_entropy(torch.sigmoid(c))
        hybrid_reference(c, target, weights=wc).backward()
        assert not torch.allclose(a.grad, c.grad)


class TestSchedule:
    @pytest.mark.parametrize("epoch", [0, 1, 2])
    def test_warmup_is_bce(self, epoch):
        logits, target = _batch(epoch)
        fn = active_loss(epoch, LossConfig())
        assert fn(logits, target).item() == pytest.approx(bce_reference(logits, target).item(), abs=1e-9)

    @pytest.mark.parametrize("epoch", [3, 4, 39])
    def test_after_warmup_is_hybrid(self, epoch):
        logits, target = _batch(epoch)
        fn = active_loss(epoch, LossConfig())
        assert fn(logits, target).item() == pytest.approx(hybrid_reference(logits, target).item(), abs=1e-9)

    def test_no_warmup(self):
        logits, target = _batch(7)
        fn = active_loss(0, LossConfig(warmup_epochs=0))
        assert fn(logits, target).item() == pytest.approx(hybrid_reference(logits, target).item(), abs=1e-9)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LossConfig(lambda_bce=0.5, lambda_dice=0.3)
        with pytest.raises(ValueError):
            LossConfig(beta=-1)
