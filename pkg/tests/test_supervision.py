import pytest
from hypothesis import given, strategies as st

from ugda_seg.supervision import DSConfig, total_loss

losses = st.floats(0, 100, allow_nan=False)


def test_unit_losses():
    assert total_loss(1.0, (1.0, 1.0)) == pytest.approx(1.05, abs=1e-9)


def test_no_aux():
    assert total_loss(0.7, ()) == 0.7
    assert total_loss(0.7, []) == 0.7


def test_worked_example():
    # 0.5 + 0.05 * (0.3 * 0.2 + 0.7 * 0.4)
    assert total_loss(0.5, (0.2, 0.4), DSConfig(alpha=0.05)) == pytest.approx(0.517, abs=1e-12)


def test_deeper_head_weighs_more():
    assert total_loss(0.0, (0.0, 1.0)) > total_loss(0.0, (1.0, 0.0))


@pytest.mark.parametrize("aux", [(1.0,), (1.0, 1.0, 1.0)])
def test_wrong_aux_count(aux):
    with pytest.raises(ValueError):
        total_loss(1.0, aux)


def test_config_validation():
    with pytest.raises(ValueError):
        DSConfig(alpha=-0.1)
    with pytest.raises(ValueError):
        DSConfig(weights=(0.5, 0.6))


@given(losses, losses, losses, st.floats(0, 1))
def test_linearity(m, a1, a2, alpha):
    cfg = DSConfig(alpha=alpha)
    assert total_loss(m, (a1, a2), cfg) - m == pytest.approx(alpha * (0.3 * a1 + 0.7 * a2), abs=1e-9)


@given(losses, losses, losses)
def test_alpha_zero(m, a1, a2):
    assert total_loss(m, (a1, a2), DSConfig(alpha=0.0)) == m


@given(losses, losses, losses, st.floats(0, 10))
def test_monotone(m, a1, a2, bump):
    base = total_loss(m, (a1, a2))
    assert total_loss(m, (a1 + bump, a2)) >= base
    assert total_loss(m, (a1, a2 + bump)) >= base
