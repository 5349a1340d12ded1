import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gaitrecon import io
from gaitrecon.config import PipelineConfig, load_config
from gaitrecon.errors import ValidationError
from gaitrecon.synthetic import SceneSpec, make_scene
from gaitrecon.triangulation import Trajectory3D


@pytest.fixture(scope="module")
def small_scene():
    return make_scene(SceneSpec(duration=0.5, noise_px=1.0, dropout_rate=0.1, seed=2))


def test_detections_round_trip(tmp_path, small_scene):
    det = small_scene.detections
    io.write_detections(tmp_path / "d.csv", det)
    T, C, J = det.shape
    back = io.read_detections(tmp_path / "d.csv", det.camera_ids, T, J, det.fps)
    np.testing.assert_array_equal(np.isnan(back.uv), np.isnan(det.uv))
    np.testing.assert_array_equal(np.nan_to_num(back.uv), np.nan_to_num(det.uv))
    np.testing.assert_array_equal(back.confidence, np.where(det.present, det.confidence, 0.0))


def _det_file(tmp_path, rows):
    p = tmp_path / "d.csv"
    p.write_text("frame,camera_id,joint,u,v,confidence\n" + "".join(r + "\n" for r in rows))
    return p


@pytest.mark.parametrize("row,msg", [
    ("0,cam00,0,1.0,2.0,1.5", "confidence"),
    ("0,cam00,0,inf,2.0,0.5", "finite"),
    ("0,camX,0,1.0,2.0,0.5", "unknown camera"),
    ("0,cam00,0,abc,2.0,0.5", "cannot parse"),
    ("-1,cam00,0,1.0,2.0,0.5", "non-negative"),
])
def test_detection_errors_carry_line(tmp_path, row, msg):
    p = _det_file(tmp_path, ["0,cam00,1,1.0,2.0,0.5", row])
    with pytest.raises(ValidationError, match=msg) as exc:
        io.read_detections(p, ["cam00"])
    assert exc.value.line == 3


def test_detection_duplicates_and_header(tmp_path):
    p = _det_file(tmp_path, ["0,cam00,0,1,2,0.5", "0,cam00,0,1,2,0.5"])
    with pytest.raises(ValidationError, match="duplicate"):
        io.read_detections(p, ["cam00"])
    bad = tmp_path / "b.csv"
    bad.write_text("frame,camera,joint\n")
    with pytest.raises(ValidationError, match="missing columns"):
        io.read_detections(bad)


def test_walkway_round_trip(tmp_path, small_scene):
    rec = make_scene(SceneSpec(seed=1)).truth.walkway
    io.write_walkway(tmp_path / "w.csv", rec)
    back = io.read_walkway(tmp_path / "w.csv")
    np.testing.assert_array_equal(back.heel_mm, rec.heel_mm)
    np.testing.assert_array_equal(back.contact_time, rec.contact_time)
    assert back.side == rec.side and back.direction == rec.direction


def test_walkway_errors(tmp_path):
    p = tmp_path / "w.csv"
    head = ",".join(io.WALKWAY_FIELDS) + "\n"
    p.write_text(head + "t,X,0.1,0.5,0,0,1,1,asc\n")
    with pytest.raises(ValidationError, match="side"):
        io.read_walkway(p)
    p.write_text(head + "t,L,0.5,0.1,0,0,1,1,asc\n")
    with pytest.raises(ValidationError, match="toe-off"):
        io.read_walkway(p)


def test_trajectory_round_trip_exact(tmp_path):
    X = np.random.default_rng(0).normal(size=(4, 3, 3))
    valid = np.ones((4, 3), bool)
    valid[1, 2] = False
    io.write_trajectory(tmp_path / "t.csv", Trajectory3D(X, valid), {"method": "x"})
    back = io.read_trajectory(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.valid, valid)
    np.testing.assert_array_equal(back.positions[valid], X[valid])
    assert json.loads((tmp_path / "t.json").read_text()) == {"method": "x"}


@given(arrays(float, 6, elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_fmt_round_trips(x):
    for v in x:
        assert float(io.fmt(v)) == v


def test_loss_curve_round_trip(tmp_path):
    curve = [{"step": 0, "L_reproj": 1.5, "L_smooth": 0.1, "L_skeleton": 0.2, "total": 1.53, "lr": 1e-6}]
    io.write_loss_curve(tmp_path / "l.csv", curve)
    assert io.read_loss_curve(tmp_path / "l.csv") == curve


def test_atomic_write_leaves_no_temp(tmp_path):
    io.atomic_write_text(tmp_path / "a.txt", "hello")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.txt"]


def test_digest_is_content_based(tmp_path):
    (tmp_path / "a").write_text("1")
    (tmp_path / "b").write_text("1")
    assert io.file_digest(tmp_path / "a") == io.file_digest(tmp_path / "b")


# --- config -------------------------------------------------------------------

def test_config_defaults():
    cfg = PipelineConfig()
    assert cfg.loss.lambda1 == 0.1 and cfg.loss.lambda2 == 0.1 and cfg.loss.huber_delta == 5.0
    assert cfg.triangulation.sigma == pytest.approx(0.15) and cfg.triangulation.gamma == 0.5
    assert cfg.schedule.total_steps == 5000 and cfg.mlp.widths == (128, 256, 512, 1024, 2048)


def test_toml_and_json(tmp_path):
    (tmp_path / "c.toml").write_text("[loss]\nlambda1 = 0.3\nmax_huber = 10.0\n[schedule]\ntotal_steps = 50\n"
                                     "[mlp]\nwidths = [8, 8]\nn_skip = 1\n[evaluation]\nsubset = [0, 11, 14]\n")
    cfg = load_config(tmp_path / "c.toml")
    assert cfg.evaluation.subset == (0, 11, 14)
    assert cfg.loss.lambda1 == 0.3 and cfg.loss.max_huber == 10.0 and cfg.schedule.total_steps == 50
    assert cfg.mlp.widths == (8, 8)
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert load_config(tmp_path / "c.json") == cfg


@pytest.mark.parametrize("text,msg", [
    ("[losss]\nx = 1\n", "unknown config section"),
    ("[loss]\nlambda3 = 1\n", "unknown keys"),
    ("[loss]\nlambda1 = -1\n", r"\[loss\]"),
    ("[loss\n", "c.toml"),
])
def test_config_errors(tmp_path, text, msg):
    (tmp_path / "c.toml").write_text(text)
    with pytest.raises(ValidationError, match=msg):
        load_config(tmp_path / "c.toml")


def test_missing_config(tmp_path):
    with pytest.raises(ValidationError):
        load_config(tmp_path / "none.toml")


def test_override():
    cfg = PipelineConfig().override("schedule", total_steps=10)
    assert cfg.schedule.total_steps == 10 and PipelineConfig().schedule.total_steps == 5000
