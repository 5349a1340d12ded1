"""Implicit trajectory: an MLP mapping normalized time to a full pose."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

DEFAULT_WIDTHS = (128, 256, 512, 1024, 2048)


@dataclass(frozen=True)
class MlpConfig:
    widths: tuple[int, ...] = DEFAULT_WIDTHS
    n_frequencies: int = 16
    n_skip: int = 4
    layer_norm_eps: float = 1e-5
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.n_frequencies < 1:
            raise ValueError("n_frequencies must be >= 1")
        if not 0 <= self.n_skip <= len(self.widths):
            raise ValueError("n_skip must not exceed the number of hidden layers")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def torch_dtype(self):
        return torch.float32 if self.dtype == "float32" else torch.float64


def positional_encoding(t, n_frequencies: int):
    """[sin(t), cos(t), sin(2t), cos(2t), ..., sin(2^(F-1) t), cos(2^(F-1) t)].

    Accepts a scalar, numpy array or torch tensor of times in [0, pi];
    returns (..., 2F).
    """
    if torch.is_tensor(t):
        freqs = 2.0 ** torch.arange(n_frequencies, dtype=t.dtype)
        ang = t[..., None] * freqs
        return torch.stack([torch.sin(ang), torch.cos(ang)], dim=-1).flatten(-2)
    t = np.asarray(t, dtype=float)
    ang = t[..., None] * 2.0 ** np.arange(n_frequencies)
    return np.stack([np.sin(ang), np.cos(ang)], axis=-1).reshape(*t.shape, 2 * n_frequencies)


def frame_times(n_frames: int) -> np.ndarray:
    """Frame times scaled linearly from 0 to pi."""
    if n_frames < 2:
        return np.zeros(n_frames)
    return np.linspace(0.0, math.pi, n_frames)


class TrajectoryMLP(nn.Module):
    """Dense -> layer norm -> relu blocks with the time encoding concatenated
    onto the first ``n_skip`` block outputs, then a dense head to J*3."""

    def __init__(self, n_joints: int, config: MlpConfig = MlpConfig()):
        super().__init__()
        self.n_joints = n_joints
        self.config = config
        enc_dim = 2 * config.n_frequencies
        dims_in = []
        layers, norms = [], []
        d = enc_dim
        for k, width in enumerate(config.widths):
            dims_in.append(d)
            layers.append(nn.Linear(d, width))
            norms.append(nn.LayerNorm(width, eps=config.layer_norm_eps))
            d = width + (enc_dim if k < config.n_skip else 0)
        self.layers = nn.ModuleList(layers)
        self.norms = nn.ModuleList(norms)
        self.head = nn.Linear(d, n_joints * 3)
        self.to(config.torch_dtype)

    def reset_parameters(self, seed: int, mean_pose=None) -> "TrajectoryMLP":
        """Fan-in scaled uniform init from ``seed``; zero head weights with
        the bias set to ``mean_pose`` (J, 3) so the output starts there."""
        gen = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for layer in self.layers:
                bound = 1.0 / math.sqrt(layer.in_features)
                layer.weight.copy_(torch.rand(layer.weight.shape, generator=gen, dtype=torch.float64) * 2 * bound - bound)
                layer.bias.copy_(torch.rand(layer.bias.shape, generator=gen, dtype=torch.float64) * 2 * bound - bound)
            for norm in self.norms:
                norm.weight.fill_(1.0)
                norm.bias.zero_()
            self.head.weight.zero_()
            if mean_pose is None:
                self.head.bias.zero_()
            else:
                self.head.bias.copy_(torch.as_tensor(np.asarray(mean_pose, dtype=float).reshape(-1)))
        return self

    def load_params(self, state: dict) -> "TrajectoryMLP":
        own = self.state_dict()
        for key, value in state.items():
            if key not in own:
                raise ValueError(f"unexpected parameter {key!r}")
            if tuple(own[key].shape) != tuple(np.shape(value)):
                raise ValueError(f"parameter {key!r} has shape {tuple(np.shape(value))}, expected {tuple(own[key].shape)}")
        missing = set(own) - set(state)
        if missing:
            raise ValueError(f"missing parameters {sorted(missing)}")
        self.load_state_dict({k: torch.as_tensor(np.asarray(v), dtype=own[k].dtype) for k, v in state.items()})
        return self

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        enc = positional_encoding(t, self.config.n_frequencies)
        h = enc
        for k, (layer, norm) in enumerate(zip(self.layers, self.norms)):
            h = torch.relu(norm(layer(h)))
            if k < self.config.n_skip:
                h = torch.cat([h, enc], dim=-1)
        return self.head(h).reshape(*t.shape, self.n_joints, 3)


def mlp_forward(model: TrajectoryMLP, t) -> np.ndarray:
    """Evaluate the pose at time(s) ``t`` in [0, pi]; returns (..., J, 3) numpy."""
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        tt = torch.as_tensor(np.asarray(t, dtype=float)).to(dtype)
        return model(tt).double().numpy()
