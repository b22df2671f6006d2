"""Run configuration: defaults, flat key=value files, and validation."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(Exception):
    """Raised for unusable configuration: bad keys, values, or combinations."""


# Config-file/CLI key for the self-contrast weight; ``lambda`` is a Python
# keyword, so the dataclass field is named ``contrast_weight``.
_KEY_ALIASES = {"lambda": "contrast_weight"}


@dataclass
class RunConfig:
    """Everything a run needs, with desk-scale defaults."""

    mode: str = "train"
    data_root: str = ""
    checkpoint: str = ""
    out_dir: str = "runs/latest"
    epochs: int = 200
    group_size: int = 8
    image_size: int = 64
    alpha: float = 3.0
    contrast_weight: float = 0.1
    seed: int = 0
    synthetic: bool = True
    lr_extractor: float = 1e-5
    lr_other: float = 1e-4
    weight_decay: float = 1e-4

    def validate(self) -> "RunConfig":
        if self.mode not in ("train", "infer", "eval", "selftest"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.alpha <= 4.0:
            raise ConfigError(f"alpha must be in (0, 4], got {self.alpha}")
        if self.contrast_weight < 0.0:
            raise ConfigError(f"lambda must be >= 0, got {self.contrast_weight}")
        if self.group_size < 2:
            raise ConfigError(f"group_size must be >= 2, got {self.group_size}")
        if self.image_size < 16 or self.image_size % 16 != 0:
            raise ConfigError(
                f"image_size must be a positive multiple of 16, got {self.image_size}"
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr_extractor <= 0.0 or self.lr_other <= 0.0:
            raise ConfigError("learning rates must be > 0")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(field_name: str, raw: str):
    kind = _FIELD_TYPES[field_name]
    raw = raw.strip()
    if kind == "bool":
        lowered = raw.lower()
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
        raise ConfigError(f"{field_name}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{field_name}: {exc}") from None
    return raw


def read_config_file(path: str | Path) -> dict[str, object]:
    """Parse a flat ``key = value`` file into typed field values.

    Blank lines and ``#`` comments are skipped.  Unknown keys are an
    error — a typo must not silently fall back to a default.  An empty
    file is valid and yields no overrides.
    """
    values: dict[str, object] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        field_name = _KEY_ALIASES.get(key, key)
        if field_name not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if field_name in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[field_name] = _parse_value(field_name, raw)
    return values


def build_config(
    file_values: dict[str, object] | None = None,
    overrides: dict[str, object] | None = None,
) -> RunConfig:
    """Layer defaults < config file < explicit overrides, then validate."""
    merged: dict[str, object] = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config field {key!r}")
            merged[key] = value
    return RunConfig(**merged).validate()


def echo_config(cfg: RunConfig, path: str | Path) -> None:
    """Write the resolved configuration so a run is reproducible from disk."""
    inverse = {v: k for k, v in _KEY_ALIASES.items()}
    lines = []
    for f in fields(RunConfig):
        key = inverse.get(f.name, f.name)
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")
