"""Run configuration: one JSON object covering architecture, loss, optimizer,
and probe settings. Unknown keys are rejected at every level so a typo fails
fast instead of silently training with defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .losses import LossConfig
from .metrics import ProbeConfig
from .model import ModelConfig


@dataclass(frozen=True)
class OptimConfig:
    """Adam hyperparameters and the encoder training schedule."""

    lr: float = 0.0005
    lr_decay: float = 0.9
    epochs: int = 30
    batch_size: int = 512
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ConfigError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2 (pair losses), got {self.batch_size}")
        if self.eps <= 0.0:
            raise ConfigError(f"eps must be positive, got {self.eps}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "OptimConfig":
        return _strict_build(cls, data, "optimizer")


def _strict_build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"'{where}' section must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}' in '{where}' section")
    return cls(**data)


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run depends on besides the data files."""

    arch: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    rng_seed: int = 0

    def to_dict(self) -> dict:
        return {
            "architecture": self.arch.to_dict(),
            "loss": self.loss.to_dict(),
            "optimizer": self.optim.to_dict(),
            "probe": self.probe.to_dict(),
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("run config must be a JSON object")
        sections = {"architecture", "loss", "optimizer", "probe", "rng_seed"}
        unknown = sorted(set(data) - sections)
        if unknown:
            raise ConfigError(f"unknown run config section '{unknown[0]}'")
        rng_seed = data.get("rng_seed", 0)
        if not isinstance(rng_seed, int) or rng_seed < 0:
            raise ConfigError(f"rng_seed must be a non-negative integer, got {rng_seed!r}")
        return cls(
            arch=ModelConfig.from_dict(data.get("architecture", {})),
            loss=LossConfig.from_dict(data.get("loss", {})),
            optim=OptimConfig.from_dict(data.get("optimizer", {})),
            probe=ProbeConfig.from_dict(data.get("probe", {})),
            rng_seed=rng_seed,
        )

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)
