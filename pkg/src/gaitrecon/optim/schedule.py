from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ScheduleConfig:
    """Linear warmup to ``peak_lr`` then exponential decay to ``final_lr``.

    ``warmup_steps=None`` means 5% of ``total_steps``.
    """

    total_steps: int = 5000
    init_lr: float = 1e-6
    peak_lr: float = 1e-4
    final_lr: float = 1e-6
    warmup_steps: int | None = None

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        if not (0 < self.init_lr <= self.peak_lr and 0 < self.final_lr <= self.peak_lr):
            raise ValueError("learning rates must satisfy 0 < init, final <= peak")
        if self.warmup_steps is not None and not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError("warmup_steps must lie in [0, total_steps)")

    @property
    def warmup(self) -> int:
        if self.warmup_steps is None:
            return int(round(0.05 * self.total_steps))
        return self.warmup_steps


def lr_schedule(step: int, config: ScheduleConfig = ScheduleConfig()) -> float:
    if not 0 <= step <= config.total_steps:
        raise ValueError(f"step {step} outside [0, {config.total_steps}]")
    w = config.warmup
    if step < w:
        return config.init_lr + (config.peak_lr - config.init_lr) * step / w
    frac = (step - w) / (config.total_steps - w)
    return config.peak_lr * math.exp(frac * math.log(config.final_lr / config.peak_lr))
