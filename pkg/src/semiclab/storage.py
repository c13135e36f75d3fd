"""
Run directories, result files and the run manifest.
"""

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Final, List, Optional, Sequence, Union

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import ConfigError
from .formatter import format_hbar

logger: logging.Logger = logging.getLogger("semiclab")

MANIFEST: Final[str] = "manifest.json"
SUMMARY: Final[str] = "summary.json"


def to_jsonable(value: Any) -> Any:
  """Plain JSON types; NaN and infinities become None."""
  if isinstance(value, dict):
    return {str(k): to_jsonable(v) for k, v in value.items()}
  if isinstance(value, (list, tuple)):
    return [to_jsonable(v) for v in value]
  if isinstance(value, np.ndarray):
    return to_jsonable(value.tolist())
  if isinstance(value, (np.bool_, bool)):
    return bool(value)
  if isinstance(value, (np.integer, int)):
    return int(value)
  if isinstance(value, (np.floating, float)):
    number: float = float(value)
    return number if math.isfinite(number) else None
  if isinstance(value, (np.complexfloating, complex)):
    return {"re": to_jsonable(value.real), "im": to_jsonable(value.imag)}
  if isinstance(value, Path):
    return str(value)
  return value


def csv_name(model: str, quantity: str, hbar: Optional[float] = None) -> str:
  """{model}_{quantity}_{hbar}.csv, or {model}_{quantity}.csv for sweep-wide tables."""
  if hbar is None:
    return f"{model}_{quantity}.csv"
  return f"{model}_{quantity}_{format_hbar(hbar)}.csv"


@dataclass
class Criterion:
  """One pass/fail verdict with the measured value and its threshold."""

  name: str
  passed: bool
  value: Optional[float] = None
  threshold: Optional[float] = None
  detail: str = ""

  def to_dict(self) -> Dict[str, Any]:
    return to_jsonable(self.__dict__)


@dataclass
class RunDirectory:
  """A fresh output directory and the artifacts written to it."""

  path: Path
  config: ExperimentConfig
  started: float = field(default_factory=time.perf_counter)
  artifacts: List[str] = field(default_factory=list)

  @classmethod
  def create(cls, config: ExperimentConfig) -> "RunDirectory":
    stamp: str = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    root: Path = config.output_root()
    base: str = f"{config.kind}_{config.model}_{stamp}"
    path: Path = root / base
    suffix: int = 1
    while path.exists():
      path = root / f"{base}_{suffix}"
      suffix += 1
    path.mkdir(parents=True)
    logger.debug(f"Run directory: {path}")
    return cls(path, config)

  def file(self, name: str) -> Path:
    self.artifacts.append(name)
    return self.path / name

  def write_json(self, name: str, data: Any) -> Path:
    target: Path = self.file(name)
    with open(target, "w", encoding="utf-8") as f:
      json.dump(to_jsonable(data), f, indent=2)
    return target

  def write_csv(self, name: str, headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    target: Path = self.file(name)
    with open(target, "w", newline="", encoding="utf-8") as f:
      writer = csv.writer(f)
      writer.writerow(headers)
      for row in rows:
        writer.writerow([_cell(v) for v in row])
    return target

  def adopt(self, path: Union[str, Path]) -> None:
    """Register a file some other writer placed in the directory."""
    self.artifacts.append(Path(path).name)

  def finish(self, summary: Dict[str, Any], criteria: Sequence[Criterion]) -> Path:
    """Write summary.json and manifest.json; returns the manifest path."""
    self.write_json(SUMMARY, summary)
    manifest: Dict[str, Any] = {
        "version": __version__,
        "kind": self.config.kind,
        "model": self.config.model,
        "config": self.config.to_dict(),
        "config_sha256": self.config.digest(),
        "seed": self.config.seed,
        "wall_time": time.perf_counter() - self.started,
        "created": datetime.now(timezone.utc).isoformat(),
        "criteria": [c.to_dict() for c in criteria],
        "passed": all(c.passed for c in criteria),
        "artifacts": sorted(set(self.artifacts)),
    }
    target: Path = self.path / MANIFEST
    with open(target, "w", encoding="utf-8") as f:
      json.dump(to_jsonable(manifest), f, indent=2)
    return target


def _cell(value: Any) -> Any:
  if isinstance(value, (float, np.floating)):
    return repr(float(value))
  if isinstance(value, (complex, np.complexfloating)):
    return f"{value.real!r}{value.imag:+.17g}j"
  return value


def read_manifest(directory: Union[str, Path]) -> Dict[str, Any]:
  """Load and sanity-check a run manifest."""
  path: Path = Path(directory)
  if not path.is_dir():
    raise ConfigError(f"Run directory not found: {path}")
  manifest_path: Path = path / MANIFEST
  if not manifest_path.is_file():
    raise ConfigError(f"No {MANIFEST} in {path}")
  try:
    with open(manifest_path, encoding="utf-8") as f:
      manifest: Dict[str, Any] = json.load(f)
  except json.JSONDecodeError as e:
    raise ConfigError(f"Corrupt manifest {manifest_path}: {e}") from e
  for key in ("kind", "model", "criteria", "config_sha256"):
    if key not in manifest:
      raise ConfigError(f"Manifest {manifest_path} lacks '{key}'")
  summary_path: Path = path / SUMMARY
  manifest["summary"] = {}
  if summary_path.is_file():
    with open(summary_path, encoding="utf-8") as f:
      manifest["summary"] = json.load(f)
  manifest["directory"] = str(path)
  return manifest
