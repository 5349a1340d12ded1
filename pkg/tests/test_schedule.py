import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaitrecon.optim import ScheduleConfig, lr_schedule


def test_defaults():
    cfg = ScheduleConfig()
    assert cfg.total_steps == 5000 and cfg.warmup == 250


def test_endpoints_paper_length():
    cfg = ScheduleConfig(total_steps=50_000)
    assert cfg.warmup == 2500
    assert lr_schedule(0, cfg) == pytest.approx(1e-6, rel=1e-9)
    assert lr_schedule(2500, cfg) == pytest.approx(1e-4, rel=1e-9)
    assert lr_schedule(50_000, cfg) == pytest.approx(1e-6, rel=1e-9)


def test_continuity_at_junction():
    cfg = ScheduleConfig(total_steps=1000, warmup_steps=100)
    assert abs(lr_schedule(99, cfg) - lr_schedule(100, cfg)) < 1.1 * (1e-4 - 1e-6) / 100


def test_no_warmup_is_pure_decay():
    cfg = ScheduleConfig(total_steps=100, warmup_steps=0)
    lrs = [lr_schedule(s, cfg) for s in range(101)]
    assert lrs[0] == pytest.approx(1e-4)
    ratios = np.array(lrs[1:]) / np.array(lrs[:-1])
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)


def test_out_of_range():
    with pytest.raises(ValueError):
        lr_schedule(-1)
    with pytest.raises(ValueError):
        lr_schedule(5001)


def test_validation():
    with pytest.raises(ValueError):
        ScheduleConfig(init_lr=1e-3)
    with pytest.raises(ValueError):
        ScheduleConfig(final_lr=1e-3)
    with pytest.raises(ValueError):
        ScheduleConfig(total_steps=10, warmup_steps=10)
    with pytest.raises(ValueError):
        ScheduleConfig(total_steps=0)


@given(st.integers(10, 20_000), st.floats(0.0, 0.5))
def test_shape_properties(total, frac):
    cfg = ScheduleConfig(total_steps=total, warmup_steps=int(frac * (total - 1)))
    w = cfg.warmup
    steps = np.unique(np.linspace(0, total, 200).astype(int))
    lrs = np.array([lr_schedule(int(s), cfg) for s in steps])
    assert np.all(lrs <= 1e-4 * (1 + 1e-12)) and np.all(lrs >= 1e-6 * (1 - 1e-12))
    up, down = lrs[steps <= w], lrs[steps >= w]
    assert np.all(np.diff(up) >= 0)
    assert np.all(np.diff(down) <= 1e-18)
