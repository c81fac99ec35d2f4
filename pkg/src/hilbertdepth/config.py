"""Pipeline configuration as a flat ``key = value`` text document."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    # clustering
    tau: float = 0.3
    d0: float = 20.0
    epsilon: float = 1e-3
    # occupancy samples
    free_spacing: float = 1.0
    near_margin: float = 1.0
    far_margin: float = 0.5
    # training
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 256
    l1_weight: float = 1e-4
    l2_weight: float = 1e-4
    seed: int = 0
    kernel_cutoff_radii: float = 3.0
    # ray marching
    step: float = 0.1
    t_min: float = 1.0
    t_max: float = 80.0
    threshold: float = 0.6
    refine_iters: int = 8
    # camera and output
    max_range: float = 80.0
    camera_index: int = 2
    image_width: int = 1242
    image_height: int = 375
    out_width: int = 0
    out_height: int = 0

    def __post_init__(self):
        positive = ("tau", "d0", "free_spacing", "learning_rate", "kernel_cutoff_radii",
                    "step", "max_range", "image_width", "image_height")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("epsilon", "near_margin", "far_margin", "l1_weight", "l2_weight",
                     "out_width", "out_height", "refine_iters", "camera_index"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be at least 1")
        if not 0 < self.t_min < self.t_max:
            raise ConfigError("need 0 < t_min < t_max")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")

    @property
    def output_size(self) -> tuple[int, int]:
        return (self.out_width or self.image_width, self.out_height or self.image_height)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def training(self):
        from .hilbert_map import TrainingConfig

        return TrainingConfig(self.learning_rate, self.epochs, self.batch_size,
                              self.l1_weight, self.l2_weight, self.seed)

    def march(self):
        from .densify import MarchParams

        return MarchParams(self.step, self.t_min, self.t_max, self.threshold, self.refine_iters)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            conv = int if types[key] in (int, "int") else float
            try:
                values[key] = conv(value.strip())
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key!r}") from exc
        return cls(**values)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text())
