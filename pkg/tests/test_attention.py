import math

import pytest
import torch
from hypothesis import given, settings, strategies as st

from oracles import central_diff, rel_err
from ugda_seg.attention import UGDA, uncertainty_map


def _module(c=8, r=4, dtype=torch.float64, seed=0):
    torch.manual_seed(seed)
    m = UGDA(c, reduction=r).to(dtype)
    for conv in (m.channel_fc[0], m.channel_fc[2], m.spatial_conv):
        torch.nn.init.normal_(conv.bias, std=0.1)
    return m


class TestChannelAttention:
    def test_zero_input_gives_half(self):
        m = UGDA(16, reduction=8)
        out = m.channel_attention(torch.zeros(2, 16, 5, 5))
        assert out.shape == (2, 16, 1, 1)
        assert torch.all(out == 0.5)

    def test_range(self):
        m = UGDA(16, reduction=8)
        out = m.channel_attention(torch.randn(3, 16, 6, 7) * 10)
        assert torch.all((out > 0) & (out < 1))

    def test_responds_to_mean_shift(self):
        m = _module(8, 4)
        x = torch.randn(2, 8, 4, 4, dtype=torch.float64)
        assert not torch.allclose(m.channel_attention(x), m.channel_attention(x + 0.5))

    def test_bad_reduction(self):
        with pytest.raises(ValueError):
            UGDA(4, reduction=8)
        with pytest.raises(ValueError):
            UGDA(12, reduction=8)


class TestSpatialAttention:
    def test_zero_input_gives_half(self):
        out = UGDA(8, 4).spatial_attention(torch.zeros(1, 8, 9, 9))
        assert torch.all(out == 0.5)

    @pytest.mark.parametrize("shape", [(1, 8, 1, 1), (2, 8, 7, 3), (1, 8, 13, 16)])
    def test_shape(self, shape):
        out = UGDA(8, 4).spatial_attention(torch.randn(shape))
        assert out.shape == (shape[0], 1, shape[2], shape[3])

    def test_channel_permutation_invariant(self):
        m = _module(8, 4)
        x = torch.randn(2, 8, 6, 6, dtype=torch.float64)
        perm = torch.randperm(8)
        assert torch.allclose(m.spatial_attention(x), m.spatial_attention(x[:, perm]), atol=1e-12)


class TestUncertainty:
    def test_constant_channels(self):
        x = torch.ones(1, 5, 4, 4) * 3.0
        assert torch.all(uncertainty_map(x) == 0.5)

    def test_plus_minus_one(self):
        x = torch.tensor([-1.0, 1.0], dtype=torch.float64).view(1, 2, 1, 1)
        # population std of {-1, 1} is 1
        assert uncertainty_map(x).item() == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-12)
        assert uncertainty_map(x).item() == pytest.approx(0.731059, abs=1e-6)

    def test_single_channel_rejected(self):
        with pytest.raises(ValueError):
            uncertainty_map(torch.randn(1, 1, 3, 3))

    # scales kept moderate: sigmoid(std) rounds to exactly 1.0 once std exceeds ~37 in float64
    @given(st.integers(2, 6), st.floats(0.01, 5))
    @settings(max_examples=30, deadline=None)
    def test_bounds(self, c, scale):
        u = uncertainty_map(torch.randn(2, c, 3, 3, dtype=torch.float64) * scale)
        assert torch.all((u >= 0.5) & (u < 1))


class TestForward:
    def test_gamma_zero_identity(self):
        m = UGDA(16, 8)
        with torch.no_grad():
            m.gamma.zero_()
        x = torch.randn(2, 16, 8, 8)
        assert torch.equal(m(x), x)

    def test_zero_input(self):
        m = _module(8, 4, torch.float32)
        assert torch.equal(m(torch.zeros(1, 8, 5, 5)), torch.zeros(1, 8, 5, 5))

    def test_gamma_init_and_shape(self):
        m = UGDA(32, 8)
        assert m.gamma.item() == pytest.approx(0.1)
        assert m.gamma.numel() == 1
        x = torch.randn(2, 32, 7, 9)
        assert m(x).shape == x.shape

    def test_attention_bounds(self):
        m = _module(8, 4)
        x = torch.randn(3, 8, 5, 5, dtype=torch.float64) * 4
        a = m.attention_map(x)
        ch, sp, unc = m.components(x)
        assert torch.all((a > 0) & (a < 2))
        assert torch.all((1 + unc >= 1.5) & (1 + unc < 2))

    def test_gamma_proportional(self):
        m = _module(8, 4)
        x = torch.randn(1, 8, 5, 5, dtype=torch.float64)
        norms = []
        for g in (0.1, 0.2, -0.4):
            with torch.no_grad():
                m.gamma.fill_(g)
            norms.append(float((m(x) - x).norm().detach()))
        assert norms[1] == pytest.approx(2 * norms[0], rel=1e-12)
        assert norms[2] == pytest.approx(4 * norms[0], rel=1e-12)

    def test_non_finite_rejected(self):
        x = torch.randn(1, 8, 3, 3)
        x[0, 0, 0, 0] = float("nan")
        with pytest.raises(ValueError):
            UGDA(8, 4)(x)


def test_gradients_match_finite_differences():
    m = _module(4, 2, seed=3)
    x = torch.randn(1, 4, 5, 5, dtype=torch.float64, requires_grad=True)
    proj = torch.randn(1, 4, 5, 5, dtype=torch.float64)

    def objective():
        return (m(x) * proj).sum()

    objective().backward()
    with torch.no_grad():
        assert rel_err(x.grad, central_diff(objective, x)) < 1e-4
        for name, p in m.named_parameters():
            assert rel_err(p.grad, central_diff(objective, p)) < 1e-4, name
