"""Pipeline configuration and its JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Literal

from .blocks import CovarianceModel
from .errors import ConfigError

WeightMode = Literal["equal", "idw2"]
WEIGHT_MODES = ("equal", "idw2")


@dataclass(frozen=True)
class PipelineConfig:
    """Estimation parameters.

    ``r_xy_neighbor`` bounds the blocks a bucket may draw from, measured from
    the recorded dig position; ``r_xy_sampling`` bounds the simulated dig
    locations. ``window_seconds=None`` puts the whole replay in one dump window.
    """

    r_xy_neighbor: float = 12.0
    r_xy_sampling: float = 12.0
    grid_interval: float = 2.0
    bucket_volume: float = 30.0
    weight_mode: WeightMode = "equal"
    kernel: CovarianceModel = field(default_factory=CovarianceModel)
    window_seconds: float | None = None
    plot_buckets: tuple[int, ...] = ()
    plot_points: int = 512
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        for name in ("r_xy_neighbor", "r_xy_sampling", "grid_interval", "bucket_volume"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}, got {self.weight_mode!r}")
        if self.window_seconds is not None and not self.window_seconds > 0:
            raise ConfigError("window_seconds must be positive or null")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("workers must be an integer >= 1")
        if self.plot_points < 2:
            raise ConfigError("plot_points must be >= 2")
        object.__setattr__(self, "plot_buckets", tuple(int(b) for b in self.plot_buckets))

    def with_overrides(self, **changes: Any) -> PipelineConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes) if changes else self

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["kernel"]["length_scales"] = list(self.kernel.length_scales)
        d["plot_buckets"] = list(self.plot_buckets)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PipelineConfig:
        data = dict(data)
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kernel = data.pop("kernel", None)
        try:
            if kernel is not None:
                if not isinstance(kernel, dict):
                    raise ConfigError("kernel must be an object")
                data["kernel"] = CovarianceModel(**kernel)
            if "plot_buckets" in data:
                data["plot_buckets"] = tuple(data["plot_buckets"])
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return PipelineConfig.from_dict(data)


def save_config(config: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")
