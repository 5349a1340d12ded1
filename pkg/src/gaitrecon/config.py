"""Pipeline configuration loaded from TOML or JSON.

Every section is optional and maps onto one settings dataclass; unknown
sections or keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ValidationError
from .optim import FitConfig, LossConfig, MlpConfig, ScheduleConfig
from .synthetic import SceneSpec
from .triangulation import TriangulationConfig


@dataclass(frozen=True)
class AlignmentConfig:
    fit_scale: bool = True
    max_rounds: int = 20
    search_range: tuple[float, float] = (-10.0, 10.0)
    max_starts: int = 10

    def __post_init__(self):
        object.__setattr__(self, "search_range", tuple(float(x) for x in self.search_range))
        if self.search_range[0] >= self.search_range[1]:
            raise ValueError("search_range must be increasing")
        if self.max_rounds < 1 or self.max_starts < 1:
            raise ValueError("max_rounds and max_starts must be positive")


@dataclass(frozen=True)
class EvaluationConfig:
    lam: float = 0.5
    thresholds: tuple[float, ...] = tuple(float(d) for d in range(1, 31))
    subset: tuple[int, ...] | None = None  # joint indices scored by GC; None scores all

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(x) for x in self.thresholds))
        if self.subset is not None:
            object.__setattr__(self, "subset", tuple(int(j) for j in self.subset))
            if any(j < 0 for j in self.subset):
                raise ValueError("subset holds non-negative joint indices")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if any(d <= 0 for d in self.thresholds):
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class FitSettings:
    log_every: int = 100
    explicit_dtype: str = "float64"

    def __post_init__(self):
        if self.log_every < 1:
            raise ValueError("log_every must be positive")
        if self.explicit_dtype not in ("float32", "float64"):
            raise ValueError("explicit_dtype must be float32 or float64")


@dataclass(frozen=True)
class PipelineConfig:
    triangulation: TriangulationConfig = field(default_factory=TriangulationConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    fit: FitSettings = field(default_factory=FitSettings)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    scene: SceneSpec = field(default_factory=SceneSpec)

    def fit_config(self) -> FitConfig:
        return FitConfig(loss=self.loss, schedule=self.schedule, mlp=self.mlp,
                         gamma=self.triangulation.gamma, log_every=self.fit.log_every,
                         explicit_dtype=self.fit.explicit_dtype)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict, path=None) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ValidationError("config must be a table/object", path)
        kw = {}
        types = {f.name: f.default_factory for f in dataclasses.fields(cls)}
        for section, values in data.items():
            if section not in types:
                raise ValidationError(f"unknown config section [{section}]", path)
            if not isinstance(values, dict):
                raise ValidationError(f"section [{section}] must be a table", path)
            kind = types[section]
            known = {f.name for f in dataclasses.fields(kind)}
            extra = set(values) - known
            if extra:
                raise ValidationError(f"unknown keys in [{section}]: {sorted(extra)}", path)
            values = dict(values)
            try:
                if kind is SceneSpec:
                    kw[section] = SceneSpec.from_dict(values)
                else:
                    if section == "mlp" and "widths" in values:
                        values["widths"] = tuple(values["widths"])
                    kw[section] = kind(**values)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"[{section}]: {exc}", path) from exc
        return cls(**kw)

    def override(self, section: str, **values) -> "PipelineConfig":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **values)})


def load_config(path) -> PipelineConfig:
    """Read a .toml or .json config file."""
    path = Path(path)
    if not path.exists():
        raise ValidationError("config file not found", path)
    if path.suffix == ".json":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(exc.msg, path, exc.lineno) from exc
    else:
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                line = getattr(exc, "lineno", None)
                raise ValidationError(str(exc), path, line) from exc
    return PipelineConfig.from_dict(data, path)
