"""Reverse-mode gradients of scalar losses via torch.autograd."""

from __future__ import annotations

import math

import numpy as np
import torch

from ..errors import NonFiniteLossError


def gradient(fn, x):
    """Gradient of scalar ``fn(x)`` with respect to ``x``.

    ``x`` may be a numpy array, a tensor, or an ``nn.Module`` (in which case
    a dict of parameter-name -> gradient array is returned).  Arrays come
    back as float64 numpy arrays of the same shape.
    """
    if isinstance(x, torch.nn.Module):
        params = dict(x.named_parameters())
        for p in params.values():
            p.grad = None
        value = fn(x)
        _check_finite(value)
        grads = torch.autograd.grad(value, list(params.values()), allow_unused=True)
        return {k: (np.zeros(tuple(p.shape)) if g is None else g.detach().double().numpy())
                for (k, p), g in zip(params.items(), grads)}
    xt = torch.tensor(np.asarray(x, dtype=float)) if not torch.is_tensor(x) else x.detach().clone()
    xt.requires_grad_(True)
    value = fn(xt)
    _check_finite(value)
    (g,) = torch.autograd.grad(value, xt, allow_unused=True)
    if g is None:
        return np.zeros(tuple(xt.shape))
    return g.detach().double().numpy()


def _check_finite(value):
    v = float(value.detach()) if torch.is_tensor(value) else float(value)
    if not math.isfinite(v):
        raise NonFiniteLossError(f"loss is not finite: {v}")
