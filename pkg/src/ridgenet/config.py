"""Flat key=value training configuration files.

Lines look like `learning_rate = 0.001`; `#` starts a comment. Unknown
keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    manifest: str = ""
    variant: str = "block84_multitask"
    policy: str = "proposed"
    alpha: int = 24
    channels: int = 16
    epochs: int = 2
    batch_size: int = 4
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    phase1_steps: int = 0
    max_steps: int = 0  # cap on phase-2 optimizer steps; 0 = epochs decide
    checkpoint_every: int = 0  # extra periodic checkpoints; 0 = phase ends only
    w_mse: float = 0.1
    w_lap: float = 0.2
    w_ssim: float = 0.7
    w_binary_task: float = 0.3
    w_main_task: float = 0.7

    def __post_init__(self):
        if self.phase1_steps < 0:
            raise ConfigError("phase1_steps must be >= 0")
        if self.phase1_steps > 0 and self.variant != "block84_multitask":
            raise ConfigError("phase1_steps applies only to the multitask variant")
        if self.optimizer != "adam":
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.policy not in ("proposed", "all_positive"):
            raise ConfigError(f"unknown policy {self.policy!r}")


_FIELDS = {f.name: f.type for f in fields(TrainConfig)}
_TYPES = {"str": str, "int": int, "float": float}


def parse_config_text(text: str) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        caster = _TYPES[_FIELDS[key]]
        try:
            values[key] = caster(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc
    return values


def load_config(path: str | Path, **overrides) -> TrainConfig:
    values = parse_config_text(Path(path).read_text())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values)


def render_config(cfg: TrainConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(TrainConfig)]
    return "\n".join(lines) + "\n"
