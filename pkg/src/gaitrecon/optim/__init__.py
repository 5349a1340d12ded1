from .autodiff import gradient
from .fit import (CURVE_FIELDS, FitConfig, FitData, FitResult, fill_invalid, make_fit_data,
                  observation_weights, optimize_explicit, optimize_implicit)
from .losses import (CameraTensors, LossConfig, Skeleton, huber, loss_terms, project,
                     reprojection_loss, skeleton_loss, smoothness_loss, total_loss)
from .mlp import MlpConfig, TrajectoryMLP, frame_times, mlp_forward, positional_encoding
from .schedule import ScheduleConfig, lr_schedule

__all__ = [
    "CURVE_FIELDS", "CameraTensors", "FitConfig", "FitData", "FitResult", "LossConfig",
    "MlpConfig", "ScheduleConfig", "Skeleton", "TrajectoryMLP", "fill_invalid", "frame_times",
    "gradient", "huber", "loss_terms", "lr_schedule", "make_fit_data", "mlp_forward",
    "observation_weights", "optimize_explicit", "optimize_implicit", "positional_encoding",
    "project", "reprojection_loss", "skeleton_loss", "smoothness_loss", "total_loss",
]
