"""
Exception hierarchy for semiclab.

Configuration problems derive from ``ValueError`` and map to exit code 2,
numerical failures derive from ``ArithmeticError`` and map to exit code 3.
"""

from typing import Final, Optional, Sequence

EXIT_OK: Final[int] = 0
EXIT_CRITERION: Final[int] = 1
EXIT_CONFIG: Final[int] = 2
EXIT_NUMERICAL: Final[int] = 3
EXIT_INTERRUPTED: Final[int] = 130


class SemiclabError(Exception):
  """Base class for every error raised by semiclab."""

  exit_code: int = EXIT_NUMERICAL


class ConfigError(SemiclabError, ValueError):
  """Invalid parameters, configurations or model overrides."""

  exit_code = EXIT_CONFIG


class GridError(ConfigError):
  """Invalid or non-quantizable phase-space grid."""


class PreconditionError(ConfigError):
  """An operation was called outside its contract."""


class NumericalError(SemiclabError, ArithmeticError):
  """A numerical procedure failed or left its tolerance."""

  exit_code = EXIT_NUMERICAL


class GapError(NumericalError):
  """Eigenvalue branches of the principal symbol are not separated."""


class GaugeObstructionError(NumericalError):
  """No smooth isometry field exists over the grid."""


class ContourError(NumericalError):
  """A resolvent contour comes too close to the spectrum."""


class ClusterError(NumericalError):
  """An operator spectrum does not cluster near {0, 1}."""


class UnitarityError(NumericalError):
  """A transport matrix drifted away from the unitary group."""


class TrajectoryEscapeError(NumericalError):
  """A trajectory left the trusted region of the box."""


class SubgroupError(NumericalError):
  """A group element is not in the declared subgroup."""


class QuadratureError(NumericalError):
  """An orbit quadrature or Gram system is defective."""


def describe_node(coords: Sequence[float], index: Optional[Sequence[int]] = None) -> str:
  """Format a phase-space node for error messages."""
  point: str = ", ".join(f"{c:.4g}" for c in coords)
  if index is None:
    return f"({point})"
  return f"({point}) at index {tuple(int(i) for i in index)}"
