import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from gaitrecon.optim import MlpConfig, TrajectoryMLP, frame_times, mlp_forward, positional_encoding

SMALL = MlpConfig(widths=(16, 24, 32, 40, 48), n_frequencies=6, dtype="float64")


def test_encoding_at_zero():
    e = positional_encoding(0.0, 16)
    assert e.shape == (32,)
    np.testing.assert_array_equal(e[0::2], 0.0)
    np.testing.assert_array_equal(e[1::2], 1.0)


def test_encoding_single_frequency():
    np.testing.assert_allclose(positional_encoding(math.pi / 2, 1), [1.0, 0.0], atol=1e-15)


def test_encoding_torch_matches_numpy():
    t = np.linspace(0, math.pi, 17)
    np.testing.assert_allclose(positional_encoding(torch.tensor(t), 16).numpy(), positional_encoding(t, 16),
                               atol=1e-12)


def test_encoding_distinguishes_grid():
    t = np.linspace(0, math.pi, 1000)
    e = positional_encoding(t, 16)
    d2 = (e * e).sum(1)[:, None] + (e * e).sum(1)[None] - 2 * e @ e.T
    np.fill_diagonal(d2, np.inf)
    assert np.sqrt(max(d2.min(), 0)) > 1e-6


def test_frame_times():
    t = frame_times(5)
    assert t[0] == 0.0 and t[-1] == math.pi
    np.testing.assert_allclose(np.diff(t), math.pi / 4)


def test_config_validation():
    with pytest.raises(ValueError):
        MlpConfig(n_frequencies=0)
    with pytest.raises(ValueError):
        MlpConfig(widths=(8, 8), n_skip=3)
    with pytest.raises(ValueError):
        MlpConfig(dtype="float16")


def test_architecture_shapes():
    m = TrajectoryMLP(25)
    enc = 32
    ins = [l.in_features for l in m.layers]
    outs = [l.out_features for l in m.layers]
    assert outs == [128, 256, 512, 1024, 2048]
    assert ins == [enc, 128 + enc, 256 + enc, 512 + enc, 1024 + enc]
    # fifth layer output is not concatenated
    assert m.head.in_features == 2048 and m.head.out_features == 75


@pytest.mark.parametrize("J", [25, 136])
def test_output_shape(J):
    m = TrajectoryMLP(J, SMALL).reset_parameters(0)
    assert mlp_forward(m, 0.3).shape == (J, 3)
    assert mlp_forward(m, frame_times(7)).shape == (7, J, 3)


def test_zero_head_returns_bias():
    b = np.random.default_rng(0).normal(size=(4, 3))
    m = TrajectoryMLP(4, SMALL).reset_parameters(3, b)
    for t in (0.0, 1.0, math.pi):
        np.testing.assert_allclose(mlp_forward(m, t), b, atol=1e-15)


def test_forward_deterministic():
    m = TrajectoryMLP(3, SMALL).reset_parameters(1)
    with torch.no_grad():
        m.head.weight.normal_(generator=torch.Generator().manual_seed(0))
    a, b = mlp_forward(m, 0.7), mlp_forward(m, 0.7)
    np.testing.assert_array_equal(a, b)


def test_seeded_init():
    a = TrajectoryMLP(3, SMALL).reset_parameters(5).state_dict()
    b = TrajectoryMLP(3, SMALL).reset_parameters(5).state_dict()
    c = TrajectoryMLP(3, SMALL).reset_parameters(6).state_dict()
    assert all(torch.equal(a[k], b[k]) for k in a)
    assert not torch.equal(a["layers.0.weight"], c["layers.0.weight"])


def test_load_params_shape_checks():
    m = TrajectoryMLP(3, SMALL)
    state = {k: v.numpy().copy() for k, v in m.state_dict().items()}
    m.load_params(state)
    bad = dict(state)
    bad["head.bias"] = np.zeros(5)
    with pytest.raises(ValueError):
        m.load_params(bad)
    bad = dict(state)
    del bad["head.bias"]
    with pytest.raises(ValueError):
        m.load_params(bad)
    with pytest.raises(ValueError):
        m.load_params({**state, "extra": np.zeros(1)})


def test_manual_forward_oracle():
    # independent numpy forward pass over the same weights
    m = TrajectoryMLP(2, SMALL).reset_parameters(2)
    with torch.no_grad():
        m.head.weight.normal_(generator=torch.Generator().manual_seed(1))
    p = {k: v.numpy() for k, v in m.state_dict().items()}
    t = 1.1
    enc = positional_encoding(t, SMALL.n_frequencies)
    h = enc
    for k in range(5):
        z = p[f"layers.{k}.weight"] @ h + p[f"layers.{k}.bias"]
        z = (z - z.mean()) / np.sqrt(z.var() + 1e-5) * p[f"norms.{k}.weight"] + p[f"norms.{k}.bias"]
        h = np.maximum(z, 0)
        if k < 4:
            h = np.concatenate([h, enc])
    out = (p["head.weight"] @ h + p["head.bias"]).reshape(2, 3)
    np.testing.assert_allclose(mlp_forward(m, t), out, atol=1e-12)


@given(st.floats(0, math.pi))
def test_encoding_bounded(t):
    e = positional_encoding(t, 8)
    assert np.all(np.abs(e) <= 1.0)
    np.testing.assert_allclose(e[0::2] ** 2 + e[1::2] ** 2, 1.0, atol=1e-12)
