"""Run configuration: one flat ``section.key = value`` file, overridable from the command line.

Precedence is command-line flag > config file > built-in default. Unknown
sections or keys are rejected before any subcommand runs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dsp import DspConfig
from .evaluation import DEFAULT_NOISE_SEED, DEFAULT_RATIOS, AugmentConfig
from .model import TrainConfig
from .synth import NOISE_KINDS
from .trigger import TriggerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSection:
    n_per_class: int = 50
    seed: int = 7


@dataclass(frozen=True)
class EvalSection:
    test_fraction: float = 0.25
    split_seed: int = 7
    noise_seed: int = DEFAULT_NOISE_SEED
    ratios: tuple = DEFAULT_RATIOS
    noise_kinds: tuple = NOISE_KINDS


@dataclass(frozen=True)
class SimSection:
    seed: int = 1
    duration_s: float = 60.0
    events: str = ""
    background: str = "babble"
    noise_ratio: float = 0.5
    device_id: int = 1
    window_hop_s: float = 0.1


@dataclass(frozen=True)
class ModelSection:
    time_pool: bool = True


SECTIONS = {
    "model": ModelSection,
    "dsp": DspConfig,
    "trigger": TriggerConfig,
    "train": TrainConfig,
    "augment": AugmentConfig,
    "synth": SynthSection,
    "eval": EvalSection,
    "sim": SimSection,
}


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    dsp: DspConfig = field(default_factory=DspConfig)
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    synth: SynthSection = field(default_factory=SynthSection)
    eval: EvalSection = field(default_factory=EvalSection)
    sim: SimSection = field(default_factory=SimSection)


def _coerce(section: str, key: str, value, default):
    if isinstance(default, tuple) and isinstance(value, (list, tuple)):
        return tuple(value)
    if isinstance(default, tuple) and isinstance(value, str):
        parts = [p.strip() for p in value.split(",") if p.strip()]
        return tuple(float(p) for p in parts) if default and isinstance(default[0], float) else tuple(parts)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key} must be true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    return value


def parse_value(text: str):
    """Interpret a command-line value with TOML scalar syntax, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def resolve(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, nested file values ({section: {key: value}}) and flat overrides ({"section.key": value})."""
    merged: dict[str, dict] = {name: {} for name in SECTIONS}
    for section, values in (file_values or {}).items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"{section} must be a table of key = value pairs")
        merged[section].update(values)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or not key:
            raise ConfigError(f"unknown config key {dotted!r}")
        merged[section][key] = value
    built = {}
    for section, cls in SECTIONS.items():
        defaults = {f.name: getattr(cls(), f.name) for f in dataclasses.fields(cls)}
        unknown = set(merged[section]) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config key(s) in [{section}]: {', '.join(sorted(unknown))}")
        kwargs = {k: _coerce(section, k, v, defaults[k]) for k, v in merged[section].items()}
        try:
            built[section] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}]: {exc}") from exc
    return RunConfig(**built)


def load_config_file(path) -> dict:
    try:
        return tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
