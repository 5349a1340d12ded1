"""Gradient-based refinement of trajectories.

Two representations share one loss: an explicit (T, J, 3) tensor, and an
MLP evaluated at each frame time.  Both use Adam under the warmup /
exponential-decay schedule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from ..camera import Camera
from ..errors import DivergenceError
from ..triangulation import Detections2D, Trajectory3D, WeightedTrajectory3D
from .losses import CameraTensors, LossConfig, Skeleton, loss_terms
from .mlp import MlpConfig, TrajectoryMLP, frame_times
from .schedule import ScheduleConfig, lr_schedule

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
CURVE_FIELDS = ("step", "L_reproj", "L_smooth", "L_skeleton", "total", "lr")


@dataclass(frozen=True)
class FitConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    gamma: float = 0.5
    log_every: int = 100
    explicit_dtype: str = "float64"


@dataclass
class FitData:
    """Observations in the form the losses consume."""

    y: np.ndarray  # (T, C, J, 2) distorted pixels, 0 where missing
    w: np.ndarray  # (T, C, J)
    cameras: list[Camera]
    skeleton: Skeleton

    @property
    def shape(self):
        return self.w.shape

    def tensors(self, dtype):
        return (torch.as_tensor(self.y, dtype=dtype), torch.as_tensor(self.w, dtype=dtype),
                CameraTensors(self.cameras, dtype))


def observation_weights(detections: Detections2D, init: WeightedTrajectory3D | None,
                        source: str, gamma: float) -> np.ndarray:
    """Per-observation loss weights (T, C, J).

    ``robust_triangulation`` reuses the triangulation weights;
    ``keypoint_confidence`` uses the detector score, zeroed below ``gamma``.
    """
    present = detections.present
    if source == "robust_triangulation":
        if init is None or init.weights is None:
            raise ValueError("robust_triangulation weights need a weighted triangulation")
        w = init.weights
    elif source == "keypoint_confidence":
        conf = detections.confidence
        w = np.where(conf >= gamma, conf, 0.0)
    else:
        raise ValueError(f"unknown weight source {source!r}")
    return np.where(present, w, 0.0)


def make_fit_data(detections: Detections2D, cameras: list[Camera], skeleton: Skeleton,
                  init: WeightedTrajectory3D | None, config: FitConfig = FitConfig()) -> FitData:
    detections = detections.aligned_to(cameras)
    skeleton.validate(detections.shape[2])
    w = observation_weights(detections, init, config.loss.weight_source, config.gamma)
    y = np.where(detections.present[..., None], detections.uv, 0.0)
    return FitData(y=y, w=w, cameras=list(cameras), skeleton=skeleton)


def fill_invalid(traj: Trajectory3D) -> np.ndarray:
    """Linear temporal interpolation of invalid entries (edges held constant).

    Joints never observed fall back to the centroid of all valid positions.
    """
    X = traj.positions.copy()
    valid = traj.valid
    if not valid.any():
        raise ValueError("trajectory has no valid entries")
    T = X.shape[0]
    frames = np.arange(T)
    centroid = np.nanmean(X[valid], axis=0)
    for j in range(X.shape[1]):
        ok = valid[:, j]
        if ok.all():
            continue
        if not ok.any():
            X[:, j] = centroid
            continue
        for k in range(3):
            X[:, j, k] = np.interp(frames, frames[ok], X[ok, j, k])
    return X


@dataclass
class FitResult:
    trajectory: Trajectory3D
    loss_curve: list[dict]
    model: TrajectoryMLP | None = None

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1]["total"]


def _run(params, forward, data: FitData, config: FitConfig, dtype):
    y, w, cams = data.tensors(dtype)
    # fused CPU kernel: same update rule, several times faster on the 3M-parameter MLP
    opt = torch.optim.Adam(params, lr=config.schedule.init_lr, betas=ADAM_BETAS, eps=ADAM_EPS, fused=True)
    curve = []
    total_steps = config.schedule.total_steps

    def record(step, terms, lr):
        curve.append({"step": step,
                      "L_reproj": float(terms["reprojection"]),
                      "L_smooth": float(terms["smoothness"]),
                      "L_skeleton": float(terms["skeleton"]),
                      "total": float(terms["total"]),
                      "lr": lr})

    best_value, best_state, best_terms = math.inf, None, None
    for step in range(total_steps + 1):
        lr = lr_schedule(step, config.schedule)
        terms = loss_terms(forward(), y, w, cams, data.skeleton, config.loss)
        value = float(terms["total"].detach())
        if not math.isfinite(value):
            raise DivergenceError(step, value)
        if value < best_value:
            best_value = value
            best_terms = {k: v.detach() for k, v in terms.items()}
            best_state = [p.detach().clone() for p in params]
        if step == total_steps:
            break
        if step % config.log_every == 0:
            record(step, {k: v.detach() for k, v in terms.items()}, lr)
        for group in opt.param_groups:
            group["lr"] = lr
        opt.zero_grad(set_to_none=True)
        terms["total"].backward()
        opt.step()
    # hand back the best iterate seen; the last curve row describes it
    with torch.no_grad():
        for p, b in zip(params, best_state):
            p.copy_(b)
    record(total_steps, best_terms, lr)
    return curve


def optimize_explicit(init: WeightedTrajectory3D, data: FitData, config: FitConfig = FitConfig()) -> FitResult:
    """Directly optimize the (T, J, 3) positions, starting from ``init``."""
    dtype = torch.float64 if config.explicit_dtype == "float64" else torch.float32
    X = torch.tensor(fill_invalid(init), dtype=dtype, requires_grad=True)
    curve = _run([X], lambda: X, data, config, dtype)
    out = X.detach().double().numpy()
    return FitResult(Trajectory3D(out, np.ones(out.shape[:2], bool)), curve)


def optimize_implicit(init: Trajectory3D, data: FitData, config: FitConfig = FitConfig(),
                      seed: int = 0) -> FitResult:
    """Fit an MLP f(t) -> pose; returns the model and the trajectory at frame times.

    ``init`` only supplies the mean pose used to initialize the output bias.
    """
    T, C, J = data.shape
    if T < 2:
        raise ValueError("implicit fit needs at least 2 frames")
    dtype = config.mlp.torch_dtype
    model = TrajectoryMLP(J, config.mlp)
    mean_pose = fill_invalid(init).mean(axis=0)
    model.reset_parameters(seed, mean_pose)
    t = torch.as_tensor(frame_times(T), dtype=dtype)
    curve = _run(list(model.parameters()), lambda: model(t), data, config, dtype)
    with torch.no_grad():
        out = model(t).double().numpy()
    return FitResult(Trajectory3D(out, np.ones(out.shape[:2], bool)), curve, model)
