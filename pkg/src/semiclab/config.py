"""
Experiment configuration.

A run is described by one TOML file with the tables [experiment], [model],
[grid], [orders], [window], [transport] and [run]. Command-line flags are
applied on top of the file values.
"""

import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Final, List, Mapping, Optional, Tuple, Union

from .errors import ConfigError
from .models import get_model
from .stratweyl import GROUPS, MAX_SPIN
from .utils import is_power_of_two

if sys.version_info >= (3, 11):
  import tomllib
else:
  import tomli as tomllib

logger: logging.Logger = logging.getLogger("semiclab")

KINDS: Final[Tuple[str, ...]] = (
    "projections",
    "egorov",
    "sw-egorov",
    "szego",
    "s2",
    "ergodic-average",
    "identities",
    "sw-axioms",
    "appendix-b",
    "moyal",
    "transport",
    "spectral-id",
)

MAX_MOYAL_ORDER: Final[int] = 4
MAX_PROJECTION_ORDER: Final[int] = 2
MIN_GRID: Final[int] = 16
OUTPUT_ENV: Final[str] = "SEMICLAB_OUTPUT"
DEFAULT_OUTPUT: Final[str] = "semiclab-runs"

# TOML table → config fields it may set
TABLES: Final[Dict[str, Tuple[str, ...]]] = {
    "experiment": ("kind", ),
    "model": ("model", "params"),
    "grid": ("grid_sizes", "hbars"),
    "orders": ("moyal_order", "projection_order"),
    "window": ("energy", "omega", "delta", "branch"),
    "transport": ("time", "times", "dt", "n_starts", "group", "spin"),
    "run": ("seed", "deterministic", "workers", "output_dir", "png", "observables"),
}


@dataclass
class ExperimentConfig:
  """Everything a run needs; None means the model's recommended value."""

  kind: str = "identities"
  model: str = "pauli"
  params: Dict[str, float] = field(default_factory=dict)
  grid_sizes: List[int] = field(default_factory=list)
  hbars: List[float] = field(default_factory=list)
  moyal_order: int = 2
  projection_order: Optional[int] = None
  energy: Optional[float] = None
  omega: Optional[float] = None
  delta: Optional[float] = None
  branch: int = 1
  time: Optional[float] = None
  times: List[float] = field(default_factory=list)
  dt: float = 0.01
  n_starts: int = 64
  group: str = "su2"
  spin: float = 0.5
  observables: List[str] = field(default_factory=list)
  seed: int = 0
  deterministic: bool = True
  workers: int = 1
  output_dir: Optional[str] = None
  png: bool = False

  # Construction -----------------------------------------------------------

  @classmethod
  def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
    """Build from nested TOML-style tables."""
    values: Dict[str, Any] = {}
    for table, entries in data.items():
      if table not in TABLES:
        raise ConfigError(f"Unknown table [{table}]. Known: {', '.join(TABLES)}")
      if not isinstance(entries, Mapping):
        raise ConfigError(f"[{table}] must be a table")
      for key, value in entries.items():
        name: str = key.replace("-", "_")
        if name not in TABLES[table]:
          raise ConfigError(f"Unknown key '{key}' in [{table}]. Known: {', '.join(TABLES[table])}")
        values[name] = value
    return cls().updated(values)

  @classmethod
  def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
    config_path: Path = Path(path)
    if not config_path.is_file():
      raise ConfigError(f"Config file not found: {config_path}")
    try:
      with open(config_path, "rb") as f:
        data: Dict[str, Any] = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
      raise ConfigError(f"Config file {config_path} is not valid TOML: {e}") from e
    logger.debug(f"Loaded config from {config_path}")
    return cls.from_mapping(data)

  def updated(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
    """A copy with non-None overrides applied and coerced to field types."""
    known: Dict[str, Any] = {f.name: f for f in fields(self)}
    data: Dict[str, Any] = asdict(self)
    for name, value in overrides.items():
      if value is None:
        continue
      if name not in known:
        raise ConfigError(f"Unknown config field '{name}'")
      data[name] = _coerce(name, value, data[name])
    return ExperimentConfig(**data)

  # Validation -------------------------------------------------------------

  def validate(self) -> "ExperimentConfig":
    """Raise ConfigError naming the first offending field."""
    if self.kind not in KINDS:
      raise ConfigError(f"kind: unknown experiment '{self.kind}'. Known: {', '.join(KINDS)}")
    spec = get_model(self.model)
    spec.resolve(self.params)
    if not 0 <= self.moyal_order <= MAX_MOYAL_ORDER:
      raise ConfigError(f"moyal_order: {self.moyal_order} outside [0, {MAX_MOYAL_ORDER}]")
    if self.projection_order is not None and not 0 <= self.projection_order <= MAX_PROJECTION_ORDER:
      raise ConfigError(f"projection_order: {self.projection_order} outside [0, {MAX_PROJECTION_ORDER}]")
    for N in self.grid_sizes:
      if N < MIN_GRID or not is_power_of_two(N):
        raise ConfigError(f"grid_sizes: {N} must be a power of two ≥ {MIN_GRID}")
    for h in self.hbars:
      if h <= 0:
        raise ConfigError(f"hbars: {h} must be positive")
    if self.time is not None and self.time < 0:
      raise ConfigError(f"time: {self.time} must be non-negative")
    if self.dt <= 0:
      raise ConfigError(f"dt: {self.dt} must be positive")
    if any(t < 0 for t in self.times):
      raise ConfigError(f"times: {self.times} contains a negative time")
    if self.omega is not None and self.omega <= 0:
      raise ConfigError(f"omega: {self.omega} must be positive")
    if self.delta is not None and not 0 < self.delta < 1:
      raise ConfigError(f"delta: {self.delta} must lie in (0, 1)")
    if not 0 <= self.branch < len(spec.multiplicities):
      raise ConfigError(f"branch: {self.branch} out of range for model '{self.model}'")
    if self.group not in GROUPS:
      raise ConfigError(f"group: unknown group '{self.group}'. Known: {', '.join(GROUPS)}")
    if self.spin <= 0 or self.spin > MAX_SPIN or not float(2 * self.spin).is_integer():
      raise ConfigError(f"spin: {self.spin} must be a positive half-integer ≤ {MAX_SPIN}")
    if self.n_starts < 1:
      raise ConfigError(f"n_starts: {self.n_starts} must be positive")
    if self.workers < 1:
      raise ConfigError(f"workers: {self.workers} must be positive")
    return self

  def check_delta(self, delta_nu: float) -> float:
    """δ for the current branch; must lie in (0, δ_ν)."""
    delta: float = self.delta if self.delta is not None else delta_nu / 2
    if not 0 < delta < delta_nu:
      raise ConfigError(f"delta: {delta} must lie in (0, delta_nu={delta_nu:.4g})")
    return delta

  # Resolution -------------------------------------------------------------

  def resolved_sizes(self) -> List[int]:
    """Grid sizes of the sweep; explicit ħ values map to the nearest quantum grid."""
    if self.grid_sizes:
      return list(self.grid_sizes)
    if not self.hbars:
      return []
    base = get_model(self.model).sweep[0]
    sizes: List[int] = []
    for h in self.hbars:
      exact: float = base.L_x * base.L_xi / (2 * math.pi * h)
      N: int = max(MIN_GRID, 2**int(round(math.log2(exact))))
      if abs(N - exact) / exact > 0.01:
        logger.warning(f"hbar={h} maps to N={N} (hbar={base.L_x * base.L_xi / (2 * math.pi * N):.4g})")
      sizes.append(N)
    return sizes

  def output_root(self) -> Path:
    """--output, then $SEMICLAB_OUTPUT, then ./semiclab-runs."""
    return Path(self.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)

  def to_dict(self) -> Dict[str, Any]:
    return asdict(self)

  def digest(self) -> str:
    """SHA-256 of the canonical JSON form."""
    canonical: str = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _coerce(name: str, value: Any, current: Any) -> Any:
  try:
    if name == "params":
      if not isinstance(value, Mapping):
        raise ConfigError("params: expected a table of numbers")
      return {str(k): float(v) for k, v in value.items()}
    if name in ("grid_sizes", ):
      return [int(v) for v in _as_list(value)]
    if name in ("hbars", "times"):
      return [float(v) for v in _as_list(value)]
    if name == "observables":
      return [str(v) for v in _as_list(value)]
    if name in ("energy", "omega", "delta", "time", "dt", "spin"):
      return float(value)
    if name in ("moyal_order", "projection_order", "branch", "n_starts", "seed", "workers"):
      if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
      return int(value)
    if name in ("deterministic", "png"):
      if not isinstance(value, bool):
        raise ConfigError(f"{name}: expected true or false, got {value!r}")
      return value
    if name in ("kind", "model", "group", "output_dir"):
      return str(value)
  except (TypeError, ValueError) as e:
    if isinstance(e, ConfigError):
      raise
    raise ConfigError(f"{name}: cannot interpret {value!r}") from e
  return value if current is None else type(current)(value)


def _as_list(value: Any) -> List[Any]:
  if isinstance(value, str):
    return [v.strip() for v in value.split(",") if v.strip()]
  if isinstance(value, (list, tuple)):
    return list(value)
  return [value]
