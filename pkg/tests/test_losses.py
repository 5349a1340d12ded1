import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from gaitrecon.camera import project as np_project
from gaitrecon.errors import NonFiniteLossError, UndefinedLossError
from gaitrecon.optim import (CameraTensors, LossConfig, Skeleton, gradient, huber, loss_terms, project,
                             reprojection_loss, skeleton_loss, smoothness_loss, total_loss)

from conftest import ring_rig
from fdcheck import fd_check


def t64(a):
    return torch.tensor(np.asarray(a, dtype=float))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    return q if np.linalg.det(q) > 0 else -q


# --- huber -------------------------------------------------------------------

def test_huber_values():
    assert huber(0.0) == 0.0
    assert huber(5.0) == pytest.approx(12.5)
    assert huber(10.0) == pytest.approx(37.5)
    assert huber(3.0) == pytest.approx(4.5)


@pytest.mark.parametrize("m", [None, 10.0])
def test_huber_continuity(m):
    for edge in [5.0] + ([m] if m else []):
        lo, hi = huber(edge - 1e-13, 5.0, m), huber(edge + 1e-13, 5.0, m)
        assert abs(lo - hi) < 1e-11
    r = np.linspace(0, 40, 4001)
    v = huber(r, 5.0, m)
    assert np.all(np.diff(v) >= 0)


def test_max_huber_halves_slope():
    a, b = huber(20.0, 5.0, 10.0), huber(21.0, 5.0, 10.0)
    assert b - a == pytest.approx(2.5)
    assert huber(10.0, 5.0, 10.0) == pytest.approx(37.5)


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(huber_delta=0)
    with pytest.raises(ValueError):
        LossConfig(max_huber=4.0)
    with pytest.raises(ValueError):
        LossConfig(lambda1=-1)
    with pytest.raises(ValueError):
        LossConfig(weight_source="oracle")


# --- projection ----------------------------------------------------------------

def test_torch_projection_matches_numpy():
    cams = ring_rig(3, k1=[0.02, -0.03, 0.0])
    X = np.random.default_rng(0).uniform(-0.5, 0.5, (4, 2, 3)) + [0, 0, 1]
    got = project(CameraTensors(cams), t64(X)).numpy()  # (4, 2, C, 2)
    for c, cam in enumerate(cams):
        np.testing.assert_allclose(got[..., c, :], np_project(cam, X), atol=1e-9)


# --- reprojection ------------------------------------------------------------------

def _problem(T=4, J=3, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    cams = ring_rig(3, k1=[0.01, -0.02, 0.0])
    X = rng.uniform(-0.4, 0.4, (T, J, 3)) + [0, 0, 1]
    y = np.stack([np_project(c, X) for c in cams], axis=1)  # (T, C, J, 2)
    y = y + noise * rng.normal(size=y.shape)
    w = rng.uniform(0.5, 1.0, y.shape[:3])
    return cams, X, y, w


def test_reprojection_zero_at_truth():
    cams, X, y, w = _problem()
    val = reprojection_loss(t64(X), t64(y), t64(w), CameraTensors(cams))
    assert float(val) < 1e-12


def test_reprojection_single_point_example():
    cams = ring_rig(1)
    X = np.array([[[0.1, 0.0, 1.0]]])
    y = np_project(cams[0], X)[:, None] + np.array([3.0, 0.0])
    val = reprojection_loss(t64(X), t64(y), t64(np.ones((1, 1, 1))), CameraTensors(cams))
    assert float(val) == pytest.approx(4.5, abs=1e-9)


def test_reprojection_zero_weights():
    cams, X, y, w = _problem(noise=5.0)
    assert float(reprojection_loss(t64(X), t64(y), t64(np.zeros_like(w)), CameraTensors(cams))) == 0.0


def test_reprojection_ignores_masked_points_behind_camera():
    cams, X, y, w = _problem()
    X[0, 0] = cams[0].center + 0.5 * (cams[0].center - [0, 0, 1])  # behind camera 0
    w[0, 0, 0] = 0.0
    Xt = t64(X).requires_grad_(True)
    val = reprojection_loss(Xt, t64(y), t64(w), CameraTensors(cams))
    val.backward()
    assert math.isfinite(float(val.detach())) and torch.isfinite(Xt.grad).all()


def test_reprojection_divisor_and_huber():
    cams, X, y, w = _problem(noise=6.0, seed=2)
    cfg = LossConfig(max_huber=10.0)
    val = float(reprojection_loss(t64(X), t64(y), t64(w), CameraTensors(cams), cfg))
    pred = np.stack([np_project(c, X) for c in cams], axis=1)
    r = np.linalg.norm(pred - y, axis=-1)
    T, C, J = w.shape
    assert val == pytest.approx(np.sum(w * huber(r, 5.0, 10.0)) / (T * J * C), rel=1e-12)


# --- smoothness / skeleton ------------------------------------------------------------

def test_smoothness_examples():
    X = np.zeros((3, 1, 3))
    X[:, 0, 2] = [0, 1, 2]
    assert float(smoothness_loss(t64(X))) == pytest.approx(math.sqrt(2 / 3), abs=1e-12)
    assert float(smoothness_loss(t64(np.ones((5, 2, 3))))) == 0.0
    with pytest.raises(UndefinedLossError):
        smoothness_loss(t64(np.zeros((1, 2, 3))))


def test_skeleton_examples():
    sk = Skeleton([(0, 1)])
    T = 6
    X = np.zeros((T, 2, 3))
    X[:, 1, 0] = [1.0, 1.2] * (T // 2)
    assert float(skeleton_loss(t64(X), sk)) == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(UndefinedLossError):
        skeleton_loss(t64(X), Skeleton([]))


def test_skeleton_validation():
    with pytest.raises(ValueError):
        Skeleton([(0, 1), (1, 0)])
    with pytest.raises(ValueError):
        Skeleton([(2, 2)])
    with pytest.raises(ValueError):
        Skeleton([(0, 5)]).validate(3)


def test_skeleton_reference_lengths():
    sk = Skeleton([(0, 1)], mean_lengths=[1.0])
    X = np.zeros((2, 2, 3))
    X[:, 1, 0] = [1.1, 1.3]
    assert float(skeleton_loss(t64(X), sk)) == pytest.approx(math.sqrt((0.01 + 0.09) / 2))


def test_rigid_body_motion_has_zero_skeleton_loss():
    rng = np.random.default_rng(1)
    body = rng.normal(size=(5, 3))
    X = np.stack([body @ random_rotation(rng).T + rng.normal(size=3) for _ in range(7)])
    sk = Skeleton([(0, 1), (1, 2), (3, 4), (0, 4)])
    assert float(skeleton_loss(t64(X), sk)) < 1e-12


@given(st.integers(0, 10_000))
def test_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(6, 4, 3))
    R, t = random_rotation(rng), rng.normal(size=3) * 3
    Y = X @ R.T + t
    sk = Skeleton([(0, 1), (2, 3), (1, 2)])
    assert abs(float(smoothness_loss(t64(X))) - float(smoothness_loss(t64(Y)))) < 1e-9
    assert abs(float(skeleton_loss(t64(X), sk)) - float(skeleton_loss(t64(Y), sk))) < 1e-9


def test_reprojection_not_rigid_invariant():
    cams, X, y, w = _problem()
    Y = X + [0.05, 0, 0]
    a = float(reprojection_loss(t64(X), t64(y), t64(w), CameraTensors(cams)))
    b = float(reprojection_loss(t64(Y), t64(y), t64(w), CameraTensors(cams)))
    assert b > a + 1.0


def test_validity_mask():
    X = np.zeros((4, 1, 3))
    X[:, 0, 0] = [0, 1, 50, 3]
    valid = torch.tensor([[True], [True], [False], [True]])
    # only the 0 -> 1 pair is consecutive and valid, divisor = 3 valid entries
    assert float(smoothness_loss(t64(X), valid)) == pytest.approx(math.sqrt(1 / 3))


# --- total --------------------------------------------------------------------------

def test_total_is_sum_of_terms():
    cams, X, y, w = _problem(noise=3.0, seed=4)
    sk = Skeleton([(0, 1), (1, 2)])
    cfg = LossConfig(lambda1=0.3, lambda2=0.7)
    terms = loss_terms(t64(X), t64(y), t64(w), CameraTensors(cams), sk, cfg)
    r = float(reprojection_loss(t64(X), t64(y), t64(w), CameraTensors(cams), cfg))
    s = float(smoothness_loss(t64(X)))
    k = float(skeleton_loss(t64(X), sk))
    assert float(terms["total"]) == pytest.approx(r + 0.3 * s + 0.7 * k, abs=1e-12)
    zero = LossConfig(lambda1=0, lambda2=0)
    assert float(total_loss(t64(X), t64(y), t64(w), CameraTensors(cams), sk, zero)) == pytest.approx(r, abs=1e-12)


def test_total_at_truth_is_smoothness_only():
    cams, X, y, w = _problem()
    body = X[0]
    X = np.stack([body + [0.01 * t, 0, 0] for t in range(4)])
    y = np.stack([np_project(c, X) for c in cams], axis=1)
    sk = Skeleton([(0, 1), (1, 2)])
    val = float(total_loss(t64(X), t64(y), t64(w), CameraTensors(cams), sk))
    assert val == pytest.approx(0.1 * float(smoothness_loss(t64(X))), abs=1e-12)


# --- gradients ------------------------------------------------------------------------

def test_gradient_of_quadratic_is_exact():
    x = np.random.default_rng(0).normal(size=(4, 3))
    g = gradient(lambda v: 0.5 * (v * v).sum(), x)
    np.testing.assert_array_equal(g, x)


def test_gradient_norm_at_zero_is_zero():
    from gaitrecon.optim.losses import safe_norm

    g = gradient(lambda v: safe_norm(v).sum(), np.zeros((2, 3)))
    np.testing.assert_array_equal(g, 0.0)


def test_gradient_rejects_non_finite():
    with pytest.raises(NonFiniteLossError):
        gradient(lambda v: (v / 0.0).sum(), np.ones(3))


def test_smoothness_gradient_fd():
    X = np.random.default_rng(0).normal(size=(10, 5, 3))
    g = gradient(smoothness_loss, X)
    assert fd_check(lambda: float(smoothness_loss(t64(X))), X, g) < 1e-4


def test_total_gradient_fd():
    cams, X, y, w = _problem(noise=8.0, seed=3)
    sk = Skeleton([(0, 1), (1, 2)])
    cams_t = CameraTensors(cams)
    cfg = LossConfig(max_huber=10.0)

    def f(v):
        return total_loss(v, t64(y), t64(w), cams_t, sk, cfg)

    g = gradient(f, X)
    assert fd_check(lambda: float(f(t64(X))), X, g, n_coords=36) < 1e-4
