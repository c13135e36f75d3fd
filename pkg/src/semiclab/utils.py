"""
Numerical helpers shared by the semiclab modules.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Final, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
from scipy import stats

from .errors import ConfigError

# Pauli matrices
SIGMA_X: Final[np.ndarray] = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y: Final[np.ndarray] = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z: Final[np.ndarray] = np.array([[1, 0], [0, -1]], dtype=complex)

# Logger
logger: logging.Logger = logging.getLogger("semiclab")

T = TypeVar("T")
R = TypeVar("R")


def is_power_of_two(value: int) -> bool:
  """Check whether an integer is a positive power of two."""
  return value > 0 and (value & (value - 1)) == 0


def parse_number_list(text: Union[str, Sequence[float]], kind: type = float) -> List:
  """Parse '64,128,256' (or a sequence) into a list of numbers."""
  if not isinstance(text, str):
    return [kind(v) for v in text]
  if not text.strip():
    raise ConfigError("Number list cannot be empty")
  try:
    return [kind(item) for item in text.replace(" ", "").split(",") if item]
  except ValueError:
    raise ConfigError(f"Invalid number list: {text!r}")


def rng_from_seed(seed: Optional[int]) -> np.random.Generator:
  """Deterministic generator for a seed (None means 0)."""
  return np.random.default_rng(0 if seed is None else seed)


def hermitian_part(matrix: np.ndarray) -> np.ndarray:
  """(A + A*)/2 on the last two axes."""
  return 0.5 * (matrix + np.conj(np.swapaxes(matrix, -1, -2)))


def dagger(matrix: np.ndarray) -> np.ndarray:
  """Conjugate transpose on the last two axes."""
  return np.conj(np.swapaxes(matrix, -1, -2))


def polar_unitary(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
  """Unitary polar factor (batched) and the singular values it discards."""
  u, s, vh = np.linalg.svd(matrix, full_matrices=False)
  return u @ vh, s


def unitarity_defect(matrix: np.ndarray) -> float:
  """max ‖U*U − Id‖ over a batch of square matrices."""
  eye: np.ndarray = np.eye(matrix.shape[-1])
  return float(np.max(np.abs(dagger(matrix) @ matrix - eye))) if matrix.size else 0.0


def operator_norm(
    matrix: np.ndarray, tol: float = 1e-6, max_iter: int = 1000, seed: int = 0
) -> float:
  """Largest singular value by power iteration on A*A."""
  a: np.ndarray = np.asarray(matrix)
  if a.size == 0:
    return 0.0
  if min(a.shape) <= 32:
    return float(np.linalg.norm(a, 2))

  gen: np.random.Generator = np.random.default_rng(seed)
  v: np.ndarray = gen.standard_normal(a.shape[1]) + 1j * gen.standard_normal(a.shape[1])
  v /= np.linalg.norm(v)
  estimate: float = 0.0
  for _ in range(max_iter):
    w: np.ndarray = a @ v
    sigma: float = float(np.linalg.norm(w))
    if sigma == 0.0:
      return 0.0
    u: np.ndarray = a.conj().T @ w
    v = u / np.linalg.norm(u)
    if abs(sigma - estimate) <= tol * sigma:
      return sigma
    estimate = sigma
  logger.warning(f"Power iteration did not reach rel. tol {tol} in {max_iter} steps")
  return estimate


def loglog_slope(hbars: Sequence[float], errors: Sequence[float]) -> Tuple[float, float]:
  """Least-squares slope of log(error) against log(hbar) and its standard error."""
  h: np.ndarray = np.asarray(hbars, dtype=float)
  e: np.ndarray = np.asarray(errors, dtype=float)
  mask: np.ndarray = (h > 0) & (e > 0) & np.isfinite(e)
  if mask.sum() < 3:
    logger.warning(f"Slope fit on {int(mask.sum())} points; at least 3 are expected")
  if mask.sum() < 2:
    return math.nan, math.nan
  fit = stats.linregress(np.log(h[mask]), np.log(e[mask]))
  stderr: float = float(fit.stderr) if mask.sum() > 2 else math.nan
  logger.debug(f"Fitted slope {fit.slope:.3f} (stderr {stderr:.3g}) over {int(mask.sum())} points")
  return float(fit.slope), stderr


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
  """Map over independent jobs; results come back in input order."""
  jobs: List[T] = list(items)
  if workers <= 1 or len(jobs) <= 1:
    return [fn(job) for job in jobs]
  with ThreadPoolExecutor(max_workers=workers) as pool:
    return list(pool.map(fn, jobs))
