"""
⚙️ MIXING LAB CONFIGURATION
===========================
Run configuration, logging and provenance hashing for the mixing laboratory.

Run files are plain ``key = value`` text (the same syntax as a ``.env`` file)
and are read with python-dotenv. Environment variables prefixed ``MIXLAB_``
override file values.
"""

import hashlib
import logging
import os
from dataclasses import dataclass, fields
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

from dotenv import dotenv_values


class LogLevel(Enum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class ConfigError(ValueError):
    """Missing or out-of-range run configuration."""


REQUIRED_KEYS = (
    "speed_c", "M", "margin_delta", "window", "s_initial", "s_min",
    "passes_max", "k0", "k_cap", "gain_fraction",
)

ENV_PREFIX = "MIXLAB_"


@dataclass
class LabConfig:
    """Complete run configuration"""
    # Subsolution
    speed_c: float = 1.0
    T_end: float = 1.0
    interface: str = "flat"

    # Hull
    M: float = 5.0
    margin_delta: float = 0.05

    # Scheme: (x1_lo, x1_hi, x2_lo, x2_hi, t_lo, t_hi)
    window: Tuple[float, ...] = (-1.0, 1.0, -1.0, 1.0, 0.5, 1.0)
    s_initial: float = 0.125
    s_min: float = 0.03125
    passes_max: int = 3
    k0: int = 8
    k_cap: int = 1024
    gain_fraction: float = 0.5
    backoff: float = 0.7
    max_backoffs: int = 4
    stall_tolerance: float = 1e-3
    J_target_factor: float = 0.0
    corner_check: bool = True

    # Quadrature
    quadrature: int = 256
    time_slices: int = 32

    # Biot-Savart box for sampled interfaces
    bs_period: float = 8.0
    bs_resolution: int = 128

    # Logging
    log_level: LogLevel = LogLevel.INFO
    log_dir: Optional[str] = None

    def __post_init__(self):
        self.window = tuple(float(w) for w in self.window)
        if isinstance(self.log_level, str):
            self.log_level = LogLevel(self.log_level.upper())

        if not 0.0 < self.speed_c < 2.0:
            raise ConfigError(
                f"speed_c={self.speed_c} outside the admissible range (0,2)")
        if self.M <= 1.0:
            raise ConfigError(f"M={self.M} must exceed 1")
        if not 0.0 <= self.margin_delta < 1.0:
            raise ConfigError(f"margin_delta={self.margin_delta} must lie in [0,1)")
        if len(self.window) != 6:
            raise ConfigError(f"window needs 6 numbers, got {len(self.window)}")
        x1_lo, x1_hi, x2_lo, x2_hi, t_lo, t_hi = self.window
        if not (x1_lo < x1_hi and x2_lo < x2_hi and 0.0 < t_lo < t_hi):
            raise ConfigError(f"window {self.window} is not an ordered box with t_lo > 0")
        if not 0.0 < self.s_min <= self.s_initial:
            raise ConfigError("need 0 < s_min <= s_initial")
        if self.passes_max < 0:
            raise ConfigError("passes_max must be >= 0")
        if not 1 <= self.k0 <= self.k_cap:
            raise ConfigError("need 1 <= k0 <= k_cap")
        if not 0.0 < self.gain_fraction <= 1.0:
            raise ConfigError("gain_fraction must lie in (0,1]")
        if self.J_target_factor < 0.0:
            raise ConfigError("J_target_factor must be >= 0 (0 turns the target off)")
        if not 0.0 < self.backoff < 1.0:
            raise ConfigError("backoff must lie in (0,1)")
        if self.T_end <= 0.0:
            raise ConfigError("T_end must be positive")
        if self.quadrature < 16:
            raise ConfigError("quadrature needs at least 16 points per side")
        if self.time_slices < 2:
            raise ConfigError("time_slices must be >= 2")

    def canonical(self) -> str:
        """Stable ``key=value`` rendering used for hashing."""
        lines = []
        for f in fields(self):
            if f.name in ("log_level", "log_dir"):
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines)

    def config_hash(self) -> bytes:
        return hashlib.sha256(self.canonical().encode()).digest()

    def config_hash_hex(self) -> str:
        return self.config_hash().hex()


def _coerce(name: str, raw: str, annotation) -> object:
    raw = raw.strip()
    try:
        if name == "window":
            return tuple(float(p) for p in raw.replace(",", " ").split())
        if name == "log_level":
            return LogLevel(raw.upper())
        if name == "log_dir":
            return raw or None
        if annotation is bool or annotation == "bool":
            return raw.lower() in ("1", "true", "yes", "on")
        if annotation is int or annotation == "int":
            return int(raw)
        if annotation is float or annotation == "float":
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"cannot parse {name}={raw!r}: {e}") from e


def config_from_mapping(values: Dict[str, Optional[str]], require: bool = True) -> LabConfig:
    known = {f.name: f.type for f in fields(LabConfig)}
    if require:
        missing = [k for k in REQUIRED_KEYS if not values.get(k)]
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")

    unknown = sorted(k for k in values if k not in known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    kwargs = {k: _coerce(k, v, known[k]) for k, v in values.items() if v is not None}
    return LabConfig(**kwargs)


def load_config(path: Union[str, Path], environ: Optional[Dict[str, str]] = None) -> LabConfig:
    """Read a key=value run file; MIXLAB_* environment entries win."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")

    values = dict(dotenv_values(path))
    env = os.environ if environ is None else environ
    for key, value in env.items():
        if key.startswith(ENV_PREFIX):
            values[key[len(ENV_PREFIX):]] = value
    return config_from_mapping(values)


def write_config(config: LabConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = " ".join(repr(float(v)) for v in value)
        elif isinstance(value, LogLevel):
            value = value.value
        lines.append(f"{f.name} = {value}")
    path.write_text("\n".join(lines) + "\n")
    return path


def _render(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, tuple):
        return "(" + ",".join(_render(v) for v in value) + ")"
    return str(value)


class LabLogger:
    """Logger that carries run context into every line.

    Lines read ``[pass=2 cube=(3,1,0,1) k=16] message | key=value | ...``.
    ``bind`` returns a child sharing the same stdlib logger with extra
    context; the context also travels on the record as ``mixlab_context``
    so file handlers and tests can filter on it.
    """

    def __init__(self, name: str, context: Optional[Dict[str, object]] = None):
        self.logger = logging.getLogger(f"mixlab.{name}")
        self.context: Dict[str, object] = dict(context or {})

    def bind(self, **context) -> "LabLogger":
        child = LabLogger.__new__(LabLogger)
        child.logger = self.logger
        child.context = {**self.context, **context}
        return child

    def format(self, message: str, fields: Dict[str, object]) -> str:
        text = message
        if self.context:
            text = "[" + " ".join(f"{k}={_render(v)}" for k, v in self.context.items()) + "] " + text
        if fields:
            text += " | " + " | ".join(f"{k}={_render(v)}" for k, v in fields.items())
        return text

    def log(self, level: LogLevel, message: str, **fields):
        levelno = getattr(logging, level.value)
        if not self.logger.isEnabledFor(levelno):
            return
        self.logger.log(levelno, self.format(message, fields),
                        extra={"mixlab_context": dict(self.context)})

    def debug(self, message: str, **kwargs):
        self.log(LogLevel.DEBUG, message, **kwargs)

    def info(self, message: str, **kwargs):
        self.log(LogLevel.INFO, message, **kwargs)

    def warning(self, message: str, **kwargs):
        self.log(LogLevel.WARNING, message, **kwargs)

    def error(self, message: str, **kwargs):
        self.log(LogLevel.ERROR, message, **kwargs)


def get_logger(name: str) -> LabLogger:
    return LabLogger(name.rsplit(".", 1)[-1])


def setup_logging(config: LabConfig):
    """Configure the ``mixlab`` logger tree once per process."""
    handlers = [logging.StreamHandler()]
    if config.log_dir:
        log_dir = Path(config.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(
            logging.FileHandler(log_dir / f"mixlab_{datetime.now().strftime('%Y%m%d')}.log"))

    root = logging.getLogger("mixlab")
    root.setLevel(getattr(logging, config.log_level.value))
    for handler in list(root.handlers):
        root.removeHandler(handler)
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.propagate = False
