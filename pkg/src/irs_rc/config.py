"""Experiment configuration files.

The format is INI (read with :mod:`configparser`): flat typed key-value
text grouped by section headers::

    # comment
    [sweep]
    n_atoms = 16, 64
    trials = 50

Each section maps onto one dataclass; values are coerced to the field's
annotated type.  Unknown sections and keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .channels import ScenarioConfig
from .errors import ConfigError
from .metrics import PowerModel

__all__ = [
    "SurfaceSection",
    "FrameSection",
    "TrainSection",
    "SweepSection",
    "SoundingSection",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "config_hash",
]


@dataclass(frozen=True)
class SurfaceSection:
    """Device profile plus optional overrides; ``None`` keeps the profile value."""

    profile: str = "rescap-default"
    resistance_state: str = "hrs"
    memory_coeff: Optional[float] = None
    memory_coeff2: Optional[float] = None
    saturation: Optional[float] = None
    amplitude: Optional[float] = None
    input_gain: Optional[float] = None
    rho_max: float = 0.95
    bits: int = 2
    distortion_power: float = 0.0
    phase_error: float = math.inf


@dataclass(frozen=True)
class FrameSection:
    n_symbols: int = 280
    dmrs_every: int = 4
    csrs_every: int = 0
    modulation: str = "QPSK"


@dataclass(frozen=True)
class TrainSection:
    max_outer_iters: int = 30
    inner_steps: int = 4
    step_size: float = 0.5
    ridge: float = 1e-3
    tol: float = 1e-6
    washout: int = 10
    gradient: str = "auto"
    fd_step: float = 1e-3
    quantize_per_iter: bool = False
    refine_quantized: bool = True


@dataclass(frozen=True)
class SweepSection:
    n_atoms: tuple = (16, 64)
    snr_db: tuple = (10.0,)
    hardware: tuple = ("impaired",)
    csi_error: tuple = (0.5,)
    trials: int = 50
    methods: tuple = ("rc", "model_based")


@dataclass(frozen=True)
class SoundingSection:
    pilot_length: int = 16
    subset_size: int = 4
    snr_db: tuple = (10.0, 20.0, 30.0)
    trials: int = 20
    sweeps: int = 3
    smoothing: float = 1.0
    si_to_noise: float = 0.0


_SECTIONS = {
    "scenario": ScenarioConfig,
    "surface": SurfaceSection,
    "frame": FrameSection,
    "train": TrainSection,
    "power": PowerModel,
    "sweep": SweepSection,
    "sounding": SoundingSection,
}

_TUPLE_TYPES = {
    ("sweep", "n_atoms"): int,
    ("sweep", "snr_db"): float,
    ("sweep", "hardware"): str,
    ("sweep", "csi_error"): float,
    ("sweep", "methods"): str,
    ("sounding", "snr_db"): float,
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 1
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    surface: SurfaceSection = field(default_factory=SurfaceSection)
    frame: FrameSection = field(default_factory=FrameSection)
    train: TrainSection = field(default_factory=TrainSection)
    power: PowerModel = field(default_factory=PowerModel)
    sweep: SweepSection = field(default_factory=SweepSection)
    sounding: SoundingSection = field(default_factory=SoundingSection)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _coerce_scalar(text: str, kind, where: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is str:
            return text
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {kind.__name__}") from None
    raise ConfigError(f"{where}: unsupported field type {kind}")


def _coerce(section: str, key: str, text: str, hint, where: str):
    if (section, key) in _TUPLE_TYPES:
        kind = _TUPLE_TYPES[(section, key)]
        items = [p for p in text.split(",") if p.strip()]
        if not items:
            raise ConfigError(f"{where}: {key} needs at least one value")
        return tuple(_coerce_scalar(p, kind, where) for p in items)
    args = typing.get_args(hint)
    if type(None) in args:
        if text.strip().lower() == "none":
            return None
        hint = next(a for a in args if a is not type(None))
    return _coerce_scalar(text, hint, where)


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    """Line number of ``key`` inside ``[section]`` (of the header when ``key`` is None)."""
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return lineno
        elif key is not None and current == section and line.partition("=")[0].strip() == key:
            return lineno
    return 0


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",), delimiters=("=",), strict=True
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: key outside of any section") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}") from None
    kwargs: dict = {}
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SECTIONS and section != "experiment":
            where = f"{source}:{_line_of(text, section)}"
            raise ConfigError(f"{where}: unknown section [{section}]")
        hints = {"seed": int} if section == "experiment" else typing.get_type_hints(_SECTIONS[section])
        for key, val in parser.items(section):
            where = f"{source}:{_line_of(text, section, key)}"
            if key not in hints:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]; valid keys: {sorted(hints)}")
            if section == "experiment":
                kwargs[key] = _coerce_scalar(val, int, where)
            else:
                values.setdefault(section, {})[key] = _coerce(section, key, val, hints[key], where)
    for name, cls in _SECTIONS.items():
        try:
            kwargs[name] = cls(**values.get(name, {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: invalid [{name}] section: {exc}") from exc
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
