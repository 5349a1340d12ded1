"""File formats: detections, walkway records, trajectories, loss curves.

All writers go through a temp file plus rename so a crash never leaves a
half-written output behind.  Floats are written with ``repr`` so the text
round-trips exactly and identical arrays give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .gait import WalkwayRecord
from .triangulation import Detections2D, Trajectory3D

DETECTION_FIELDS = ("frame", "camera_id", "joint", "u", "v", "confidence")
WALKWAY_FIELDS = ("trial_id", "side", "contact_time_s", "toeoff_time_s",
                  "heel_x_mm", "heel_y_mm", "toe_x_mm", "toe_y_mm", "direction")
TRAJECTORY_FIELDS = ("frame", "joint", "x", "y", "z", "valid")


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write_text(path, _csv_text(header, rows))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(exc.msg, path, exc.lineno) from exc


def _read_rows(path, fields):
    """Yield (line number, row dict) after checking the header."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError("file is empty", path, 1)
        missing = [f for f in fields if f not in reader.fieldnames]
        if missing:
            raise ValidationError(f"missing columns {missing}", path, 1)
        for row in reader:
            yield reader.line_num, row


def _num(row, key, path, line, kind=float):
    try:
        v = kind(row[key])
    except (TypeError, ValueError):
        raise ValidationError(f"column {key!r}: cannot parse {row[key]!r}", path, line) from None
    return v


# --- detections ----------------------------------------------------------------

def write_detections(path, det: Detections2D) -> None:
    rows = []
    T, C, J = det.shape
    present = det.present
    for t, c, j in zip(*np.nonzero(present)):
        rows.append((int(t), det.camera_ids[c], int(j), fmt(det.uv[t, c, j, 0]),
                     fmt(det.uv[t, c, j, 1]), fmt(det.confidence[t, c, j])))
    write_csv(path, DETECTION_FIELDS, rows)


def read_detections(path, camera_ids=None, n_frames=None, n_joints=None, fps: float = 30.0) -> Detections2D:
    """Read long-format detections; absent (frame, camera, joint) entries become NaN."""
    records = []
    for line, row in _read_rows(path, DETECTION_FIELDS):
        t = _num(row, "frame", path, line, int)
        j = _num(row, "joint", path, line, int)
        u, v, conf = (_num(row, k, path, line) for k in ("u", "v", "confidence"))
        if t < 0 or j < 0:
            raise ValidationError("frame and joint must be non-negative", path, line)
        if not 0.0 <= conf <= 1.0:
            raise ValidationError(f"confidence {conf} outside [0, 1]", path, line)
        if not (math.isfinite(u) and math.isfinite(v)):
            raise ValidationError("pixel coordinates must be finite", path, line)
        records.append((line, t, row["camera_id"], j, u, v, conf))
    if not records:
        raise ValidationError("no detections", path, 1)
    if camera_ids is None:
        camera_ids = sorted({r[2] for r in records})
    cam_index = {c: i for i, c in enumerate(camera_ids)}
    T = n_frames if n_frames is not None else max(r[1] for r in records) + 1
    J = n_joints if n_joints is not None else max(r[3] for r in records) + 1
    uv = np.full((T, len(camera_ids), J, 2), np.nan)
    conf = np.zeros((T, len(camera_ids), J))
    seen = set()
    for line, t, cid, j, u, v, c in records:
        if cid not in cam_index:
            raise ValidationError(f"unknown camera id {cid!r}", path, line)
        if t >= T or j >= J:
            raise ValidationError("frame or joint index out of range", path, line)
        key = (t, cid, j)
        if key in seen:
            raise ValidationError(f"duplicate detection {key}", path, line)
        seen.add(key)
        uv[t, cam_index[cid], j] = (u, v)
        conf[t, cam_index[cid], j] = c
    return Detections2D(uv, conf, list(camera_ids), fps)


# --- walkway -------------------------------------------------------------------

def write_walkway(path, rec: WalkwayRecord) -> None:
    rows = [(rec.trial_id[i], rec.side[i], fmt(rec.contact_time[i]), fmt(rec.toeoff_time[i]),
             fmt(rec.heel_mm[i, 0]), fmt(rec.heel_mm[i, 1]), fmt(rec.toe_mm[i, 0]), fmt(rec.toe_mm[i, 1]),
             rec.direction[i]) for i in range(len(rec))]
    write_csv(path, WALKWAY_FIELDS, rows)


def read_walkway(path) -> WalkwayRecord:
    cols = {k: [] for k in WALKWAY_FIELDS}
    for line, row in _read_rows(path, WALKWAY_FIELDS):
        for k in ("trial_id", "side", "direction"):
            cols[k].append(row[k].strip())
        if cols["side"][-1] not in ("L", "R"):
            raise ValidationError(f"side must be L or R, got {row['side']!r}", path, line)
        if cols["direction"][-1] not in ("asc", "desc"):
            raise ValidationError(f"direction must be asc or desc, got {row['direction']!r}", path, line)
        for k in WALKWAY_FIELDS[2:8]:
            v = _num(row, k, path, line)
            if not math.isfinite(v):
                raise ValidationError(f"column {k!r} must be finite", path, line)
            cols[k].append(v)
        if cols["toeoff_time_s"][-1] <= cols["contact_time_s"][-1]:
            raise ValidationError("toe-off must follow contact", path, line)
    if not cols["side"]:
        raise ValidationError("no footfalls", path, 1)
    try:
        return WalkwayRecord(
            trial_id=cols["trial_id"], side=cols["side"],
            contact_time=cols["contact_time_s"], toeoff_time=cols["toeoff_time_s"],
            heel_mm=np.column_stack([cols["heel_x_mm"], cols["heel_y_mm"]]),
            toe_mm=np.column_stack([cols["toe_x_mm"], cols["toe_y_mm"]]),
            direction=cols["direction"])
    except ValueError as exc:
        raise ValidationError(str(exc), path) from exc


# --- trajectories --------------------------------------------------------------

def write_trajectory(path, traj: Trajectory3D, sidecar: dict | None = None) -> None:
    X = traj.positions
    T, J, _ = X.shape
    rows = [(t, j, fmt(X[t, j, 0]), fmt(X[t, j, 1]), fmt(X[t, j, 2]), int(traj.valid[t, j]))
            for t in range(T) for j in range(J)]
    write_csv(path, TRAJECTORY_FIELDS, rows)
    if sidecar is not None:
        write_json(Path(path).with_suffix(".json"), sidecar)


def read_trajectory(path) -> Trajectory3D:
    entries = []
    for line, row in _read_rows(path, TRAJECTORY_FIELDS):
        t = _num(row, "frame", path, line, int)
        j = _num(row, "joint", path, line, int)
        xyz = [_num(row, k, path, line) for k in "xyz"]
        valid = _num(row, "valid", path, line, int)
        if valid not in (0, 1):
            raise ValidationError("valid must be 0 or 1", path, line)
        entries.append((t, j, xyz, valid))
    if not entries:
        raise ValidationError("empty trajectory", path, 1)
    T = max(e[0] for e in entries) + 1
    J = max(e[1] for e in entries) + 1
    X = np.full((T, J, 3), np.nan)
    valid = np.zeros((T, J), bool)
    for t, j, xyz, v in entries:
        X[t, j] = xyz
        valid[t, j] = bool(v)
    return Trajectory3D(X, valid)


def write_loss_curve(path, curve: list[dict]) -> None:
    from .optim.fit import CURVE_FIELDS

    write_csv(path, CURVE_FIELDS, [(int(r["step"]), *(fmt(r[k]) for k in CURVE_FIELDS[1:])) for r in curve])


def read_loss_curve(path) -> list[dict]:
    from .optim.fit import CURVE_FIELDS

    out = []
    for line, row in _read_rows(path, CURVE_FIELDS):
        d = {k: _num(row, k, path, line) for k in CURVE_FIELDS}
        d["step"] = int(d["step"])
        out.append(d)
    return out


def file_digest(*paths) -> str:
    """SHA-256 over the bytes of the given files, in order."""
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()[:16]


def file_digest_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]
