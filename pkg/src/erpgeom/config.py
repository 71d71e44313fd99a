"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key maps to a dataclass
field and can be overridden by a command-line flag of the same name.
"""
from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigError

SEED_ENV = "ERPGEOM_SEED"


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None


@dataclass(frozen=True)
class RunConfig:
    low_hz: float = 1.0
    high_hz: float = 20.0
    filter_order: int = 5
    target_hz: float = 128.0
    window_s: float = 1.0
    shrinkage: str = "auto"  # "auto" or a number in [0, 1]
    mean_tol: float = 1e-9
    mean_max_iter: int = 50
    schedule: str = "linear"  # linear | fixed
    n_full: int = 120
    alpha: float = 0.0
    n_blocks: int = 4
    train_fraction: float = 0.5
    learning_sizes: str = "1,2,5,10,20"
    sweep_max_ms: float = 55.0
    sweep_step_ms: float = 11.0
    jitter_draws: int = 5
    trials_per_repetition: int = 12
    seed: int = dataclasses.field(default_factory=default_seed)

    def validate(self) -> None:
        if not 0 < self.low_hz < self.high_hz:
            raise ConfigError("need 0 < low_hz < high_hz")
        if self.filter_order < 1 or self.target_hz <= 0 or self.window_s <= 0:
            raise ConfigError("filter_order, target_hz and window_s must be positive")
        self.shrinkage_value(1, 1)
        if self.mean_tol <= 0 or self.mean_max_iter < 1:
            raise ConfigError("mean_tol must be positive and mean_max_iter at least 1")
        if self.schedule not in ("linear", "fixed"):
            raise ConfigError(f"schedule must be 'linear' or 'fixed', got {self.schedule!r}")
        if self.n_full < 1 or not 0 <= self.alpha <= 1 or self.n_blocks < 1:
            raise ConfigError("n_full and n_blocks must be positive, alpha in [0, 1]")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.sweep_step_ms <= 0 or self.sweep_max_ms < 0 or self.jitter_draws < 1:
            raise ConfigError("sweep_step_ms and jitter_draws must be positive")
        if self.trials_per_repetition < 1:
            raise ConfigError("trials_per_repetition must be positive")
        self.sizes()

    def shrinkage_value(self, n_channels: int, n_samples: int) -> float:
        if self.shrinkage == "auto":
            return 0.1 if 2 * n_channels >= n_samples else 0.0
        try:
            value = float(self.shrinkage)
        except ValueError:
            raise ConfigError(f"shrinkage must be 'auto' or a number, got {self.shrinkage!r}") from None
        if not 0 <= value <= 1:
            raise ConfigError(f"shrinkage must lie in [0, 1], got {value}")
        return value

    def sizes(self) -> list[int]:
        try:
            sizes = [int(s) for s in self.learning_sizes.split(",") if s.strip()]
        except ValueError:
            raise ConfigError("learning_sizes must be comma-separated integers") from None
        if not sizes or any(s < 1 for s in sizes):
            raise ConfigError("learning_sizes must be positive repetition counts")
        return sorted(set(sizes))

    def sweep_grid(self) -> list[float]:
        k = int(round(self.sweep_max_ms / self.sweep_step_ms))
        return [i * self.sweep_step_ms for i in range(-k, k + 1)]


def _convert(name, tp, raw):
    try:
        return tp(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for key {name!r}") from None


def settable_fields(cls) -> dict[str, type]:
    hints = typing.get_type_hints(cls)
    out = {}
    for f in dataclasses.fields(cls):
        tp = hints[f.name]
        if tp in (int, float, str):
            out[f.name] = tp
    return out


def parse_text(text: str, source: str = "config") -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key] = value
    return values


def build(cls, path=None, overrides: dict | None = None):
    """Instantiate ``cls`` from an optional config file plus overrides."""
    fields = settable_fields(cls)
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        raw.update(parse_text(text, str(path)))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "seed" in fields and "seed" not in raw:
        raw["seed"] = str(default_seed())
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = {k: _convert(k, fields[k], v) for k, v in raw.items()}
    return cls(**kwargs)
