"""Flat ``key = value`` run configuration with command-line overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .dataset import scale_levels
from .model import ModelDims
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    ratings: str = ""
    trust: str = ""
    out_dir: str = "run"
    r_min: float = 1.0
    r_max: float = 5.0
    test_fraction: float = 0.1
    # training
    task: str = "rating"
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    dropout_k: int = 30
    threshold: float = 4.0
    delta: float = 1.0
    seed: int = 0
    patience: int = 10
    val_fraction: float = 0.1
    threads: int = 1
    hide_target: bool = False
    # model
    dim: int = 64
    attn_hidden: int = 64
    mlp_hidden: int = 0

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def model_dims(self) -> ModelDims:
        return ModelDims(dim=self.dim, levels=scale_levels(self.r_min, self.r_max),
                         attn_hidden=self.attn_hidden, mlp_hidden=self.mlp_hidden)

    def validate(self, need_data: bool = True) -> "RunConfig":
        if need_data and not self.ratings:
            raise ConfigError("no ratings file given (key 'ratings')")
        if not self.r_min < self.r_max:
            raise ConfigError(f"rating scale [{self.r_min}, {self.r_max}] is empty")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in [0, 1)")
        try:
            self.train_config().validate(self.r_min, self.r_max)
            self.model_dims()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def updated(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Copy with ``overrides`` applied; string values are parsed by field type."""
        known = set(self.keys())
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        types = {f.name: type(f.default) for f in fields(self)}
        parsed = {k: _parse(k, v, types[k]) if isinstance(v, str) else v for k, v in overrides.items()}
        return dataclasses.replace(self, **parsed)

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in dataclasses.asdict(self).items())

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        values: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            key = key.strip()
            if key in values:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            values[key] = value.strip()
        return cls().updated(values)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, str(path))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _format(value: Any) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _parse(key: str, text: str, kind: type) -> Any:
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None
