"""Reprojection, smoothness and skeleton losses (torch, differentiable)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..camera import Camera
from ..errors import UndefinedLossError

WEIGHT_SOURCES = ("robust_triangulation", "keypoint_confidence")


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 0.1
    lambda2: float = 0.1
    huber_delta: float = 5.0
    max_huber: float | None = None
    weight_source: str = "robust_triangulation"

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.huber_delta > 0:
            raise ValueError("huber_delta must be positive")
        if self.max_huber is not None and not self.max_huber > self.huber_delta:
            raise ValueError("max_huber must exceed huber_delta")
        if self.weight_source not in WEIGHT_SOURCES:
            raise ValueError(f"weight_source must be one of {WEIGHT_SOURCES}")


@dataclass
class Skeleton:
    """Limb segments as joint-index pairs, optionally with reference lengths."""

    pairs: list[tuple[int, int]]
    mean_lengths: list[float] | None = None
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.pairs = [(int(a), int(b)) for a, b in self.pairs]
        seen = set()
        for a, b in self.pairs:
            if a == b:
                raise ValueError(f"degenerate skeleton pair ({a}, {b})")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate skeleton pair {key}")
            seen.add(key)

    def validate(self, n_joints: int) -> None:
        for a, b in self.pairs:
            if not (0 <= a < n_joints and 0 <= b < n_joints):
                raise ValueError(f"skeleton pair ({a}, {b}) outside {n_joints} joints")

    @property
    def index(self) -> tuple[np.ndarray, np.ndarray]:
        p = np.asarray(self.pairs, dtype=int).reshape(-1, 2)
        return p[:, 0], p[:, 1]


class CameraTensors:
    """Stacked camera parameters for batched projection."""

    def __init__(self, cameras: list[Camera], dtype=torch.float64):
        self.ids = [c.id for c in cameras]
        self.R = torch.tensor(np.stack([c.rotation for c in cameras]), dtype=dtype)
        self.t = torch.tensor(np.stack([c.translation for c in cameras]), dtype=dtype)
        self.f = torch.tensor([[c.fx, c.fy] for c in cameras], dtype=dtype)
        self.c = torch.tensor([[c.cx, c.cy] for c in cameras], dtype=dtype)
        self.k1 = torch.tensor([c.k1 for c in cameras], dtype=dtype)

    def __len__(self):
        return len(self.ids)


MAX_R2 = 10.0


def safe_sqrt(s: torch.Tensor) -> torch.Tensor:
    """sqrt with gradient 0 at 0 instead of inf."""
    pos = s > 0
    return torch.where(pos, torch.sqrt(torch.where(pos, s, torch.ones_like(s))), torch.zeros_like(s))


def safe_norm(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    return safe_sqrt((x * x).sum(dim))


def project(cams: CameraTensors, X: torch.Tensor, min_depth: float = 1e-6) -> torch.Tensor:
    """Distorted pixel projection of points X (..., 3) into every camera -> (..., C, 2).

    Depth is clamped at ``min_depth`` and r^2 at ``MAX_R2`` (far outside any
    image) so the loss stays finite for points that wander behind or beside
    a camera during optimization.
    """
    pc = torch.einsum("cij,...j->...ci", cams.R, X) + cams.t
    z = pc[..., 2:3].clamp(min=min_depth)
    xy = pc[..., :2] / z
    r2 = (xy * xy).sum(-1, keepdim=True).clamp(max=MAX_R2)
    xy = xy * (1.0 + cams.k1[:, None] * r2)
    return xy * cams.f + cams.c


def huber(r, delta: float = 5.0, max_huber: float | None = None):
    """Huber penalty of a non-negative residual norm.

    Quadratic up to ``delta`` and linear with slope ``delta`` after.  With
    ``max_huber`` set, the slope drops to ``delta / 2`` beyond it; the value
    stays continuous.
    """
    is_tensor = torch.is_tensor(r)
    if not is_tensor:
        r = torch.as_tensor(r, dtype=torch.float64)
    quad = 0.5 * r * r
    lin = delta * (r - 0.5 * delta)
    out = torch.where(r <= delta, quad, lin)
    if max_huber is not None:
        at_m = delta * (max_huber - 0.5 * delta)
        out = torch.where(r <= max_huber, out, at_m + 0.5 * delta * (r - max_huber))
    if not is_tensor:
        return out.item() if out.ndim == 0 else out.numpy()
    return out


def reprojection_loss(X, y, w, cams: CameraTensors, config: LossConfig = LossConfig()):
    """Weighted mean Huber reprojection error.

    X (T, J, 3); y (T, C, J, 2) distorted detections with zeros where
    missing; w (T, C, J) weights, zero where missing.  The sum is divided by
    T * J * C regardless of how many weights are non-zero.
    """
    T, J, _ = X.shape
    C = len(cams)
    proj = project(cams, X).permute(0, 2, 1, 3)  # (T, C, J, 2)
    # zero-weight entries may project anywhere; keep them out of the arithmetic
    diff = torch.where((w > 0)[..., None], proj - y, torch.zeros_like(proj))
    r = safe_norm(diff)
    return (w * huber(r, config.huber_delta, config.max_huber)).sum() / (T * J * C)


def smoothness_loss(X, valid=None):
    """sqrt(sum_{t<T-1} |x_t - x_{t+1}|^2 / (T * J)).

    With a validity mask only consecutive valid pairs are summed and the
    divisor becomes the number of valid entries.
    """
    T = X.shape[0]
    if T < 2:
        raise UndefinedLossError("smoothness needs at least 2 frames")
    d2 = ((X[1:] - X[:-1]) ** 2).sum(-1)
    if valid is None:
        return safe_sqrt(d2.sum() / (X.shape[0] * X.shape[1]))
    ok = valid[1:] & valid[:-1]
    d2 = torch.where(ok, d2, torch.zeros_like(d2))
    return safe_sqrt(d2.sum() / valid.sum().clamp(min=1))


def limb_lengths(X, skeleton: Skeleton):
    a, b = skeleton.index
    return safe_norm(X[:, a] - X[:, b])


def skeleton_loss(X, skeleton: Skeleton, valid=None):
    """RMS over frames and limb pairs of each length's deviation from its mean.

    The mean length is the per-trajectory average unless the skeleton
    carries fixed reference lengths.
    """
    if not skeleton.pairs:
        raise UndefinedLossError("skeleton has no pairs")
    lengths = limb_lengths(X, skeleton)  # (T, S)
    if valid is None:
        ok = torch.ones_like(lengths, dtype=torch.bool)
    else:
        a, b = skeleton.index
        ok = valid[:, a] & valid[:, b]
    lengths = torch.where(ok, lengths, torch.zeros_like(lengths))
    n = ok.sum(0)
    if skeleton.mean_lengths is not None:
        lbar = torch.as_tensor(skeleton.mean_lengths, dtype=X.dtype)
    else:
        lbar = lengths.sum(0) / n.clamp(min=1)
    dev = torch.where(ok, lengths - lbar, torch.zeros_like(lengths))
    return safe_sqrt((dev * dev).sum() / ok.sum().clamp(min=1))


def loss_terms(X, y, w, cams, skeleton, config: LossConfig = LossConfig(), valid=None) -> dict:
    if valid is not None:
        X = torch.where(valid[..., None], X, torch.zeros_like(X))
        w = w * valid[:, None, :]
    reproj = reprojection_loss(X, y, w, cams, config)
    smooth = smoothness_loss(X, valid)
    skel = skeleton_loss(X, skeleton, valid)
    total = reproj + config.lambda1 * smooth + config.lambda2 * skel
    return {"reprojection": reproj, "smoothness": smooth, "skeleton": skel, "total": total}


def total_loss(X, y, w, cams, skeleton, config: LossConfig = LossConfig(), valid=None):
    return loss_terms(X, y, w, cams, skeleton, config, valid)["total"]
