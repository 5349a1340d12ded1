"""Reconstruction quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .camera import Camera, distort_normalized, to_camera_frame, MIN_DEPTH
from .errors import InsufficientDataError
from .optim.losses import Skeleton, skeleton_loss, smoothness_loss
from .triangulation import Detections2D, Trajectory3D

SIGMA_IQR_SCALE = 0.7413
GC_THRESHOLDS = (5.0, 10.0, 20.0)


def reprojection_deltas(trajectory: Trajectory3D, detections: Detections2D, cameras: list[Camera]) -> np.ndarray:
    """Pixel distance between each reprojected point and its detection, (T, C, J).

    NaN where the detection is missing, the trajectory entry is invalid, or
    the point is behind the camera.
    """
    detections = detections.aligned_to(cameras)
    T, C, J = detections.shape
    out = np.full((T, C, J), np.nan)
    X = trajectory.positions
    for c, cam in enumerate(cameras):
        pc = to_camera_frame(cam, np.nan_to_num(X))
        z = pc[..., 2]
        front = z > MIN_DEPTH
        xy = distort_normalized(cam, pc[..., :2] / np.where(front, z, 1.0)[..., None])
        uv = np.stack([cam.fx * xy[..., 0] + cam.cx, cam.fy * xy[..., 1] + cam.cy], axis=-1)
        d = np.linalg.norm(uv - detections.uv[:, c], axis=-1)
        ok = front & trajectory.valid & detections.present[:, c]
        out[:, c] = np.where(ok, d, np.nan)
    return out


def geometric_consistency(deltas, confidences, d: float = 5.0, lam: float = 0.5, subset=None) -> float:
    """Fraction of confident detections that reproject within ``d`` pixels.

    Entries with NaN delta are left out of both counts.  ``subset`` is an
    optional joint-index list or boolean mask over the last axis.  Returns
    NaN when no entry passes the confidence gate.
    """
    if not d > 0:
        raise ValueError("threshold d must be positive")
    deltas = np.asarray(deltas, dtype=float)
    conf = np.asarray(confidences, dtype=float)
    keep = (conf > lam) & np.isfinite(deltas)
    if subset is not None:
        keep &= _joint_mask(subset, deltas.shape[-1])
    n = int(keep.sum())
    if n == 0:
        return math.nan
    return float(np.sum(keep & (deltas < d)) / n)


def _joint_mask(subset, n_joints):
    subset = np.asarray(subset)
    if subset.dtype == bool:
        if subset.shape != (n_joints,):
            raise ValueError("boolean subset must have one entry per joint")
        return subset
    mask = np.zeros(n_joints, dtype=bool)
    mask[subset.astype(int)] = True
    return mask


@dataclass
class ConsistencyReport:
    thresholds: np.ndarray
    fractions: np.ndarray
    lam: float = 0.5
    subset: list[int] | None = None

    def at(self, d: float) -> float:
        i = int(np.argmin(np.abs(self.thresholds - d)))
        if not math.isclose(self.thresholds[i], d):
            raise KeyError(d)
        return float(self.fractions[i])


def consistency_curve(deltas, confidences, thresholds=None, lam: float = 0.5, subset=None) -> ConsistencyReport:
    if thresholds is None:
        thresholds = np.arange(1.0, 31.0)
    thresholds = np.asarray(sorted(set(np.atleast_1d(thresholds).astype(float)) | set(GC_THRESHOLDS)))
    fr = np.array([geometric_consistency(deltas, confidences, d, lam, subset) for d in thresholds])
    return ConsistencyReport(thresholds, fr, lam, None if subset is None else list(np.asarray(subset).tolist()))


def sigma_iqr(residuals) -> float:
    """0.7413 * (Q3 - Q1) with linearly interpolated quantiles; NaNs ignored."""
    x = np.asarray(residuals, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size < 4:
        raise InsufficientDataError(f"sigma_iqr needs at least 4 samples, got {x.size}")
    q1, q3 = np.percentile(x, [25.0, 75.0])
    return SIGMA_IQR_SCALE * float(q3 - q1)


def trajectory_quality(trajectory: Trajectory3D, skeleton: Skeleton) -> tuple[float, float]:
    """(L_smooth, L_skeleton) in millimeters, skipping invalid entries."""
    X = torch.as_tensor(np.nan_to_num(trajectory.positions), dtype=torch.float64)
    valid = torch.as_tensor(trajectory.valid)
    with torch.no_grad():
        smooth = float(smoothness_loss(X, valid)) * 1000.0
        skel = float(skeleton_loss(X, skeleton, valid)) * 1000.0
    return smooth, skel


def reprojection_metric(trajectory: Trajectory3D, detections: Detections2D, cameras: list[Camera],
                        weights: np.ndarray, loss_config=None) -> float:
    """L_Pi for a finished trajectory; invalid entries contribute nothing."""
    from .optim.losses import CameraTensors, LossConfig, reprojection_loss

    loss_config = loss_config or LossConfig()
    detections = detections.aligned_to(cameras)
    valid = trajectory.valid
    X = torch.as_tensor(np.nan_to_num(trajectory.positions), dtype=torch.float64)
    y = torch.as_tensor(np.where(detections.present[..., None], detections.uv, 0.0))
    w = torch.as_tensor(np.where(detections.present & valid[:, None, :], weights, 0.0))
    with torch.no_grad():
        return float(reprojection_loss(X, y, w, CameraTensors(cameras), loss_config))
