import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaitrecon.camera import (Camera, dump_calibration, in_view, load_calibration, look_at, project,
                              projection_matrix, undistort)
from gaitrecon.errors import BehindCameraError, UndistortionError, ValidationError

from conftest import ring_rig


def axis_cam(k1=0.0, t=(0.0, 0.0, 0.0)):
    return Camera(fx=1000, fy=1000, cx=500, cy=500, k1=k1, rotation=np.eye(3), translation=np.array(t))


def rot(ax, ay, az):
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def test_optical_axis_hits_principal_point():
    np.testing.assert_allclose(project(axis_cam(), [0, 0, 2]), [500, 500])


def test_off_axis_point():
    # x/z = 0.1 -> 1000 * 0.1 + 500
    np.testing.assert_allclose(project(axis_cam(), [0.2, 0, 2]), [600, 500], atol=1e-12)


def test_k1_distortion_example():
    # r^2 = 0.01, factor 1 + 0.1 * 0.01 = 1.001 -> 500 + 1000 * 0.1001
    np.testing.assert_allclose(project(axis_cam(0.1), [0.2, 0, 2]), [600.1, 500], atol=1e-9)


def test_behind_camera_raises():
    with pytest.raises(BehindCameraError):
        project(axis_cam(), [0, 0, -1])
    with pytest.raises(BehindCameraError):
        project(axis_cam(), [[0, 0, 1], [0, 0, 0]])


def test_invalid_camera_rejected():
    with pytest.raises(ValueError):
        Camera(fx=0, fy=1, cx=0, cy=0, k1=0, rotation=np.eye(3), translation=np.zeros(3))
    with pytest.raises(ValueError):
        Camera(fx=1, fy=1, cx=0, cy=0, k1=0, rotation=np.diag([1, 1, 1.001]), translation=np.zeros(3))


def test_camera_is_immutable():
    cam = axis_cam()
    with pytest.raises(ValueError):
        cam.rotation[0, 0] = 2.0


def test_undistort_identity_without_distortion():
    p = np.array([[13.5, 987.25], [500, 500]])
    np.testing.assert_array_equal(undistort(axis_cam(), p), p)


@pytest.mark.parametrize("k1", [-0.2, 0.05, 0.3])
def test_principal_point_fixed(k1):
    np.testing.assert_allclose(undistort(axis_cam(k1), [500, 500]), [500, 500])


def test_undistort_round_trip_k005():
    cam = axis_cam(0.05)
    q = np.array([[700.0, 350.0], [120.0, 880.0], [500.0, 20.0]])
    xn = (q - 500) / 1000
    r2 = np.sum(xn**2, axis=1, keepdims=True)
    p = 500 + 1000 * xn * (1 + 0.05 * r2)
    np.testing.assert_allclose(undistort(cam, p), q, atol=1e-6)


def test_undistort_nonconvergence_carries_residual():
    cam = axis_cam(-5.0)
    with pytest.raises(UndistortionError) as exc:
        undistort(cam, [1500.0, 1500.0])
    assert np.isfinite(exc.value.residual) or exc.value.residual == np.inf


def test_undistort_rejects_nan():
    with pytest.raises(ValueError):
        undistort(axis_cam(0.1), [np.nan, 1.0])


@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(0.5, 10.0), st.floats(-0.08, 0.08),
       st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-np.pi, np.pi))
def test_round_trip_property(x, y, z, k1, ax, ay, az):
    R = rot(ax, ay, az)
    t = np.array([0.3, -0.2, 1.0])
    cam = Camera(fx=900, fy=950, cx=640, cy=480, k1=k1, rotation=R, translation=t)
    # world point whose camera-frame coordinates are (x*z, y*z, z)
    pc = np.array([x * z, y * z, z])
    pw = R.T @ (pc - t)
    distorted = project(cam, pw)
    ideal = project(cam.replace(k1=0.0), pw)
    np.testing.assert_allclose(undistort(cam, distorted), ideal, atol=1e-6)


def test_projection_matrix_identity():
    cam = Camera(fx=1, fy=1, cx=0, cy=0, k1=0, rotation=np.eye(3), translation=np.zeros(3))
    np.testing.assert_array_equal(projection_matrix(cam), np.hstack([np.eye(3), np.zeros((3, 1))]))


def test_translation_only_camera():
    cam = axis_cam(t=(0, 0, 1))
    np.testing.assert_allclose(project(cam, [0, 0, 1]), [500, 500])


def test_projection_matrix_matches_project():
    rng = np.random.default_rng(3)
    R = rot(*rng.uniform(-0.4, 0.4, 3))
    cam = Camera(fx=1100, fy=1050, cx=960, cy=600, k1=0.0, rotation=R, translation=np.array([0.1, 0.2, 3.0]))
    P = projection_matrix(cam)
    X = rng.uniform(-1, 1, (100, 3))
    h = np.hstack([X, np.ones((100, 1))]) @ P.T
    np.testing.assert_allclose(h[:, :2] / h[:, 2:], project(cam, X), atol=1e-9)
    # homogeneous scale invariance
    h2 = np.hstack([X, np.ones((100, 1))]) @ (3.7 * P).T
    np.testing.assert_allclose(h2[:, :2] / h2[:, 2:], h[:, :2] / h[:, 2:], atol=1e-9)
    np.testing.assert_allclose(P, cam.K @ np.hstack([R, cam.translation[:, None]]))


def test_look_at_faces_target():
    R, t = look_at([3.0, 1.0, 2.0], [0.0, 0.0, 1.0])
    cam = Camera(fx=1000, fy=1000, cx=500, cy=400, k1=0, rotation=R, translation=t)
    np.testing.assert_allclose(project(cam, [0, 0, 1]), [500, 400], atol=1e-9)
    np.testing.assert_allclose(cam.center, [3, 1, 2], atol=1e-12)


def test_in_view_rejects_fold_region():
    cam = Camera(fx=1000, fy=1000, cx=960, cy=600, k1=-0.02, rotation=np.eye(3), translation=np.zeros(3),
                 width=1920, height=1200)
    # normalized radius 7 folds back to ~0.14 under k1 = -0.02
    far = np.array([7.0, 0.0, 1.0])
    assert 0 < project(cam, far)[0] < 1920
    assert not in_view(cam, far[None])[0]
    assert in_view(cam, np.array([[0.1, 0.0, 1.0]]))[0]


def test_calibration_round_trip(tmp_path):
    cams = ring_rig(3, k1=0.01)
    path = tmp_path / "calib.json"
    dump_calibration(cams, path)
    back = load_calibration(path)
    assert [c.id for c in back] == [c.id for c in cams]
    for a, b in zip(cams, back):
        np.testing.assert_array_equal(a.rotation, b.rotation)
        np.testing.assert_array_equal(a.translation, b.translation)
        assert a.k1 == b.k1


def test_calibration_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("[\n{\"id\": 1,\n")
    with pytest.raises(ValidationError) as exc:
        load_calibration(p)
    assert str(p) in str(exc.value)
    d = axis_cam().to_dict()
    p.write_text(json.dumps([d, d]))
    with pytest.raises(ValidationError, match="duplicate"):
        load_calibration(p)
    d2 = dict(d, rotation=[1, 0, 0, 0, 1, 0, 0, 0, 2])
    p.write_text(json.dumps([d2]))
    with pytest.raises(ValidationError):
        load_calibration(p)
