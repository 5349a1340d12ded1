"""Pinhole camera with a single radial distortion coefficient.

Coordinates follow the OpenCV convention: the camera looks down +Z, image
u grows to the right and v grows downward. World units are meters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, UndistortionError, ValidationError

MIN_DEPTH = 1e-9
UNDISTORT_MAX_ITER = 20
UNDISTORT_TOL = 1e-10


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float
    rotation: np.ndarray
    translation: np.ndarray
    id: str = "cam"
    width: int | None = field(default=None, compare=False)
    height: int | None = field(default=None, compare=False)

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"camera {self.id}: focal lengths must be positive")
        if np.linalg.norm(R.T @ R - np.eye(3)) >= 1e-9:
            raise ValueError(f"camera {self.id}: rotation is not orthonormal")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def replace(self, **changes) -> "Camera":
        kw = dict(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy, k1=self.k1,
                  rotation=self.rotation, translation=self.translation, id=self.id,
                  width=self.width, height=self.height)
        kw.update(changes)
        return Camera(**kw)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "k1": float(self.k1),
            "rotation": [float(v) for v in self.rotation.ravel()],
            "translation": [float(v) for v in self.translation],
            **({"width": self.width, "height": self.height} if self.width else {}),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            k1=float(d.get("k1", 0.0)),
            rotation=np.asarray(d["rotation"], dtype=float).reshape(3, 3),
            translation=np.asarray(d["translation"], dtype=float).reshape(3),
            id=str(d["id"]),
            width=d.get("width"),
            height=d.get("height"),
        )


def to_camera_frame(cam: Camera, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return points @ cam.rotation.T + cam.translation


def distort_normalized(cam: Camera, xy: np.ndarray) -> np.ndarray:
    r2 = np.sum(xy * xy, axis=-1, keepdims=True)
    return xy * (1.0 + cam.k1 * r2)


def project(cam: Camera, points) -> np.ndarray:
    """Project world points (..., 3) to distorted pixel coordinates (..., 2).

    Raises BehindCameraError if any point has camera-frame depth <= 1e-9.
    """
    pc = to_camera_frame(cam, points)
    z = pc[..., 2:3]
    if np.any(~(z > MIN_DEPTH)):
        raise BehindCameraError(f"point at or behind camera {cam.id}")
    xy = distort_normalized(cam, pc[..., :2] / z)
    return np.stack([cam.fx * xy[..., 0] + cam.cx, cam.fy * xy[..., 1] + cam.cy], axis=-1)


def undistort(cam: Camera, pixels) -> np.ndarray:
    """Remove radial distortion from pixel coordinates (..., 2).

    The result stays in pixel units with the same intrinsics, so projecting
    with ``k1=0`` lands on it.
    """
    pixels = np.asarray(pixels, dtype=float)
    if not np.all(np.isfinite(pixels)):
        raise ValueError("undistort requires finite pixel coordinates")
    xd = np.stack([(pixels[..., 0] - cam.cx) / cam.fx, (pixels[..., 1] - cam.cy) / cam.fy], axis=-1)
    if cam.k1 == 0.0:
        return pixels.copy()
    x = xd.copy()
    residual = np.inf
    for _ in range(UNDISTORT_MAX_ITER):
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        x_new = xd / (1.0 + cam.k1 * r2)
        residual = float(np.max(np.abs(x_new - x), initial=0.0))
        x = x_new
        if residual < UNDISTORT_TOL:
            break
    else:
        raise UndistortionError(f"undistortion did not converge for camera {cam.id}", residual)
    return np.stack([cam.fx * x[..., 0] + cam.cx, cam.fy * x[..., 1] + cam.cy], axis=-1)


def projection_matrix(cam: Camera) -> np.ndarray:
    """3x4 matrix K [R | t]; distortion is not part of it."""
    return cam.K @ np.hstack([cam.rotation, cam.translation[:, None]])


def in_view(cam: Camera, points, margin: float = 0.0) -> np.ndarray:
    """Boolean mask of points in front of the camera and inside the image.

    With k1 < 0 the radial map folds back beyond r^2 = 1 / (3 |k1|); points
    past the fold would land inside the image from outside the field of
    view, so they count as not visible.
    """
    pc = to_camera_frame(cam, points)
    ok = pc[..., 2] > MIN_DEPTH
    z = np.where(ok, pc[..., 2], 1.0)
    xn = pc[..., :2] / z[..., None]
    if cam.k1 < 0:
        ok &= np.sum(xn * xn, axis=-1) < 1.0 / (3.0 * -cam.k1)
    if cam.width is None or cam.height is None:
        return ok
    xy = distort_normalized(cam, xn)
    u = cam.fx * xy[..., 0] + cam.cx
    v = cam.fy * xy[..., 1] + cam.cy
    return ok & (u >= margin) & (u <= cam.width - margin) & (v >= margin) & (v <= cam.height - margin)


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World->camera rotation and translation for a camera at ``center`` facing ``target``."""
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return R, -R @ center


def load_calibration(path) -> list[Camera]:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(exc.msg, path, exc.lineno) from exc
    if not isinstance(data, list):
        raise ValidationError("calibration must be a JSON array of cameras", path)
    cams = []
    for i, entry in enumerate(data):
        try:
            cams.append(Camera.from_dict(entry))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValidationError(f"camera entry {i}: {exc}", path) from exc
    ids = [c.id for c in cams]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate camera ids", path)
    return cams


def dump_calibration(cameras, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps([c.to_dict() for c in cameras], indent=2) + "\n")
