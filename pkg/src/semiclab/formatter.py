"""
Terminal formatting utilities for semiclab.
"""

import math
from typing import Optional, Union

Number = Union[int, float, None]


def format_quantity(value: Number, digits: int = 3) -> str:
  """Format a small or large positive quantity in scientific or fixed notation."""
  if value is None:
    return "N/A"
  number: float = float(value)
  if math.isnan(number):
    return "nan"
  if number == 0.0:
    return "0"
  if 1e-3 <= abs(number) < 1e4:
    return f"{number:.{digits}f}"
  return f"{number:.{digits}e}"


def format_slope(slope: Number, stderr: Optional[float] = None) -> str:
  """Format a fitted log-log slope with its standard error."""
  if slope is None:
    return "N/A"
  if stderr is None or math.isnan(stderr):
    return f"{slope:+.2f}"
  return f"{slope:+.2f} ± {stderr:.2f}"


def format_hbar(hbar: float) -> str:
  """Format hbar for file names: 0.05 -> '0p05'."""
  return f"{hbar:.4g}".replace(".", "p").replace("-", "m")
