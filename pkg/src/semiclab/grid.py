"""
Periodic phase-space grids and matrix-valued grid functions.

Nodes sit at x_i = -L_x/2 + i Δx and ξ_j = -L_ξ/2 + j Δξ on every axis. Field
arrays carry the axes (x_1..x_d, ξ_1..ξ_d, row, column).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Final, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import sympy
from scipy import fft

from .errors import ConfigError, GridError
from .jets import Jet, poisson
from .symbolic import SymbolicMatrix, phase_space_symbols
from .utils import SIGMA_X, SIGMA_Y, SIGMA_Z, is_power_of_two

logger: logging.Logger = logging.getLogger("semiclab")

MIN_POINTS: Final[int] = 16
HERMITIAN_TOL: Final[float] = 1e-12


class SymbolSource(Protocol):
  """Anything that can sample a symbol off the grid (optionally also a `jet` method)."""

  def evaluate(self, coords: Sequence[np.ndarray]) -> np.ndarray:
    ...


class SeriesSource:
  """Linear combination Σ w_i S_i of symbol sources."""

  def __init__(self, terms: Sequence[Tuple[complex, Any]]):
    self.terms: List[Tuple[complex, Any]] = list(terms)

  def evaluate(self, coords: Sequence[np.ndarray]) -> np.ndarray:
    out: Optional[np.ndarray] = None
    for weight, source in self.terms:
      part: np.ndarray = weight * source.evaluate(coords)
      out = part if out is None else out + part
    return out  # type: ignore[return-value]

  def jet(self, coords: Sequence[np.ndarray], order: int) -> Jet:
    out: Optional[Jet] = None
    for weight, source in self.terms:
      part: Jet = source.jet(coords, order).scale(weight)
      out = part if out is None else out + part
    return out  # type: ignore[return-value]


class JetSource:
  """Source defined by a callable (coords, order) → Jet."""

  def __init__(self, build: Callable[[Sequence[np.ndarray], int], Jet]):
    self.build: Callable[[Sequence[np.ndarray], int], Jet] = build

  def jet(self, coords: Sequence[np.ndarray], order: int) -> Jet:
    return self.build(coords, order)

  def evaluate(self, coords: Sequence[np.ndarray]) -> np.ndarray:
    return self.build(coords, 0).value


@dataclass(frozen=True)
class PhaseGrid:
  """Uniform periodic lattice on the box [-L_x/2, L_x/2)^d × [-L_ξ/2, L_ξ/2)^d."""

  d: int
  L_x: float
  L_xi: float
  N: int
  hbar: float
  hbar_max: float = 1.0

  @property
  def dx(self) -> float:
    return self.L_x / self.N

  @property
  def dxi(self) -> float:
    return self.L_xi / self.N

  @property
  def shape(self) -> Tuple[int, ...]:
    return (self.N, ) * (2 * self.d)

  @property
  def cell_volume(self) -> float:
    return (self.dx * self.dxi)**self.d

  @property
  def dimension(self) -> int:
    """Hilbert-space dimension per spin component."""
    return self.N**self.d

  @property
  def is_quantum(self) -> bool:
    """True when the Fourier momentum lattice coincides with the ξ-grid."""
    return math.isclose(self.hbar, self.L_x * self.L_xi / (2 * math.pi * self.N), rel_tol=1e-12)

  def x_axis(self) -> np.ndarray:
    return -self.L_x / 2 + self.dx * np.arange(self.N)

  def xi_axis(self) -> np.ndarray:
    return -self.L_xi / 2 + self.dxi * np.arange(self.N)

  def axis(self, variable: int) -> np.ndarray:
    return self.x_axis() if variable < self.d else self.xi_axis()

  def length(self, variable: int) -> float:
    return self.L_x if variable < self.d else self.L_xi

  def mesh(self) -> Tuple[np.ndarray, ...]:
    """Sparse broadcastable coordinate arrays of all nodes."""
    return tuple(np.meshgrid(*[self.axis(v) for v in range(2 * self.d)], indexing="ij", sparse=True))

  def node(self, index: Sequence[int]) -> Tuple[float, ...]:
    return tuple(float(self.axis(v)[i]) for v, i in enumerate(index))

  def wavenumbers(self, variable: int) -> np.ndarray:
    """Angular wavenumbers of the DFT along one variable, Nyquist last."""
    return 2 * math.pi * fft.fftfreq(self.N, d=self.L_x / self.N if variable < self.d else self.dxi)

  def metadata(self) -> dict:
    return {
        "d": self.d,
        "L_x": self.L_x,
        "L_xi": self.L_xi,
        "N": self.N,
        "hbar": self.hbar,
        "hbar_max": self.hbar_max,
    }


def build_grid(
    d: int, L_x: float, L_xi: float, N: int, hbar: float, hbar_max: float = 1.0
) -> PhaseGrid:
  """Validate parameters and build a PhaseGrid."""
  if d not in (1, 2):
    raise GridError(f"Phase-space dimension d must be 1 or 2, got {d}")
  if not isinstance(N, (int, np.integer)) or not is_power_of_two(int(N)):
    raise GridError(f"Points per axis N must be a power of two, got {N}")
  if N < MIN_POINTS:
    raise GridError(f"Points per axis N must be at least {MIN_POINTS}, got {N}")
  if L_x <= 0 or L_xi <= 0:
    raise GridError(f"Box lengths must be positive, got L_x={L_x}, L_xi={L_xi}")
  if hbar <= 0:
    raise GridError(f"hbar must be positive, got {hbar}")
  if hbar > hbar_max:
    raise GridError(f"hbar={hbar} exceeds hbar_max={hbar_max}")
  grid: PhaseGrid = PhaseGrid(d, float(L_x), float(L_xi), int(N), float(hbar), float(hbar_max))
  logger.debug(f"Built grid d={d} N={N} dx={grid.dx:.4g} dxi={grid.dxi:.4g} hbar={hbar:.4g}")
  return grid


def quantum_grid(d: int, N: int, L_x: float, L_xi: float, hbar_max: float = 1.0) -> PhaseGrid:
  """Grid with hbar = L_x L_ξ / (2πN), so that ħ sweeps are sweeps over N."""
  return build_grid(d, L_x, L_xi, N, L_x * L_xi / (2 * math.pi * N), hbar_max)


def half_grid_mesh(grid: PhaseGrid) -> Tuple[np.ndarray, ...]:
  """Coordinates with x on the 2N-point half grid and ξ on the nodes."""
  half: np.ndarray = -grid.L_x / 2 + 0.5 * grid.dx * np.arange(2 * grid.N)
  axes: List[np.ndarray] = [half] * grid.d + [grid.xi_axis()] * grid.d
  return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))


@dataclass
class GridFunction:
  """A complex r × c matrix per grid node."""

  grid: PhaseGrid
  values: np.ndarray
  hermitian: bool = False
  source: Optional[Any] = field(default=None, repr=False)
  jet: Optional[Jet] = field(default=None, repr=False)

  def __post_init__(self) -> None:
    self.values = np.asarray(self.values, dtype=complex)
    if self.values.ndim == 2 * self.grid.d:
      self.values = self.values[..., None, None]
    if self.values.shape[:-2] != self.grid.shape or self.values.ndim != 2 * self.grid.d + 2:
      raise GridError(
          f"Values of shape {self.values.shape} do not match grid shape {self.grid.shape}"
      )
    if self.hermitian:
      deviation: float = float(
          np.max(np.abs(self.values - np.conj(np.swapaxes(self.values, -1, -2))))
      )
      scale: float = max(1.0, float(np.max(np.abs(self.values))))
      if deviation > HERMITIAN_TOL * scale:
        raise ConfigError(f"Field flagged hermitian deviates by {deviation:.3e}")

  @classmethod
  def from_symbolic(cls, grid: PhaseGrid, symbol: SymbolicMatrix,
                    hermitian: Optional[bool] = None) -> "GridFunction":
    """Sample a closed-form symbol at the nodes; derivatives stay exact."""
    if symbol.d != grid.d:
      raise GridError(f"Symbol of dimension {symbol.d} on a grid of dimension {grid.d}")
    flag: bool = symbol.is_hermitian if hermitian is None else hermitian
    return cls(grid, symbol.evaluate(grid.mesh()), hermitian=flag, source=symbol)

  @classmethod
  def constant(cls, grid: PhaseGrid, matrix: Union[np.ndarray, complex]) -> "GridFunction":
    m: np.ndarray = np.atleast_2d(np.asarray(matrix, dtype=complex))
    flag: bool = m.shape[0] == m.shape[1] and bool(np.allclose(m, m.conj().T, atol=0))
    symbol: SymbolicMatrix = SymbolicMatrix(sympy.Matrix(m.tolist()), grid.d)
    return cls(grid, np.broadcast_to(m, grid.shape + m.shape).copy(), hermitian=flag, source=symbol)

  @property
  def shape(self) -> Tuple[int, int]:
    return (self.values.shape[-2], self.values.shape[-1])

  @property
  def n(self) -> int:
    return self.values.shape[-2]

  def jet_of(self, order: int) -> Jet:
    """Taylor jet at every node: stored, closed-form, or spectral."""
    if self.jet is not None and self.jet.order >= order:
      return self.jet.truncate(order)
    if self.source is not None and hasattr(self.source, "jet"):
      return self.source.jet(self.grid.mesh(), order)
    return spectral_jet(self, order)

  def evaluate_at(self, coords: Sequence[np.ndarray]) -> np.ndarray:
    """Values off the grid, from the closed form or by Fourier interpolation."""
    if self.source is not None:
      return self.source.evaluate(coords)
    return fourier_interpolate(self, coords)

  def jet_at(self, coords: Sequence[np.ndarray], order: int) -> Jet:
    """Jet at arbitrary points, from the closed form or interpolated spectral derivatives."""
    if self.source is not None and hasattr(self.source, "jet"):
      return self.source.jet(coords, order)
    nodal: Jet = spectral_jet(self, order)
    return Jet.from_derivatives(
        lambda alpha: fourier_interpolate(GridFunction(self.grid, nodal.partial(alpha)), coords),
        2 * self.grid.d,
        order,
    )

  def _combine_source(self, other: "GridFunction", op: str) -> Optional[Any]:
    if isinstance(self.source, SymbolicMatrix) and isinstance(other.source, SymbolicMatrix):
      return getattr(self.source, op)(other.source)
    if op != "__matmul__" and self.source is not None and other.source is not None:
      return SeriesSource([(1.0, self.source), (1.0 if op == "__add__" else -1.0, other.source)])
    return None

  def _check(self, other: "GridFunction") -> None:
    if other.grid != self.grid:
      raise GridError("Grid functions live on different grids")

  def __add__(self, other: "GridFunction") -> "GridFunction":
    self._check(other)
    return GridFunction(self.grid, self.values + other.values,
                        source=self._combine_source(other, "__add__"))

  def __sub__(self, other: "GridFunction") -> "GridFunction":
    self._check(other)
    return GridFunction(self.grid, self.values - other.values,
                        source=self._combine_source(other, "__sub__"))

  def __matmul__(self, other: "GridFunction") -> "GridFunction":
    self._check(other)
    return GridFunction(self.grid, self.values @ other.values,
                        source=self._combine_source(other, "__matmul__"))

  def scale(self, factor: complex) -> "GridFunction":
    source: Optional[Any] = None
    if isinstance(self.source, SymbolicMatrix):
      source = self.source.scale(factor)
    elif self.source is not None:
      source = SeriesSource([(factor, self.source)])
    return GridFunction(self.grid, self.values * factor, source=source)

  def dagger(self) -> "GridFunction":
    source: Optional[SymbolicMatrix] = (
        self.source.dagger() if isinstance(self.source, SymbolicMatrix) else None
    )
    return GridFunction(self.grid, np.conj(np.swapaxes(self.values, -1, -2)),
                        hermitian=self.hermitian, source=source)

  def max_norm(self) -> float:
    return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def _check_variable(grid: PhaseGrid, variable: int) -> None:
  if not 0 <= variable < 2 * grid.d:
    raise GridError(f"Axis index {variable} out of range for d={grid.d} (0..{2 * grid.d - 1})")


def _spectral_multiplier(grid: PhaseGrid, variable: int, power: int) -> np.ndarray:
  k: np.ndarray = grid.wavenumbers(variable)
  mult: np.ndarray = (1j * k)**power
  if power:
    mult[grid.N // 2] = 0.0
  shape: List[int] = [1] * (2 * grid.d + 2)
  shape[variable] = grid.N
  return mult.reshape(shape)


def spectral_derivative(f: GridFunction, variable: int, order: int = 1) -> GridFunction:
  """Fourier-spectral partial derivative along x_l (l < d) or ξ_l (d + l)."""
  _check_variable(f.grid, variable)
  spectrum: np.ndarray = fft.fft(f.values, axis=variable)
  values: np.ndarray = fft.ifft(spectrum * _spectral_multiplier(f.grid, variable, order), axis=variable)
  return GridFunction(f.grid, values, hermitian=f.hermitian)


def spectral_jet(f: GridFunction, order: int) -> Jet:
  """Jet from spectral derivatives of the sampled values."""
  grid: PhaseGrid = f.grid
  axes: Tuple[int, ...] = tuple(range(2 * grid.d))
  spectrum: np.ndarray = fft.fftn(f.values, axes=axes)

  def derivative(alpha: Tuple[int, ...]) -> np.ndarray:
    if not any(alpha):
      return f.values
    product: np.ndarray = spectrum
    for variable, power in enumerate(alpha):
      if power:
        product = product * _spectral_multiplier(grid, variable, power)
    return fft.ifftn(product, axes=axes)

  return Jet.from_derivatives(derivative, 2 * grid.d, order)


def poisson_bracket(a: GridFunction, b: GridFunction) -> GridFunction:
  """{A,B} = ∂_ξA ∂_xB − ∂_xA ∂_ξB with matrix products in the written order."""
  if a.grid != b.grid:
    raise GridError("Poisson bracket of fields on different grids")
  if a.shape[1] != b.shape[0] and 1 not in (a.shape[0] * a.shape[1], b.shape[0] * b.shape[1]):
    raise GridError(f"Incompatible matrix shapes {a.shape} and {b.shape}")
  bracket: Jet = poisson(a.jet_of(1), b.jet_of(1))
  return GridFunction(a.grid, bracket.value)


def grid_integral(f: GridFunction) -> np.ndarray:
  """Riemann sum Σ f(node) Δx^d Δξ^d."""
  axes: Tuple[int, ...] = tuple(range(2 * f.grid.d))
  return f.values.sum(axis=axes) * f.grid.cell_volume


def fourier_shift(values: np.ndarray, variable: int, delta: float, length: float) -> np.ndarray:
  """Trigonometric interpolant of periodic samples shifted: f(x + delta)."""
  n: int = values.shape[variable]
  k: np.ndarray = 2 * math.pi * fft.fftfreq(n, d=length / n)
  phase: np.ndarray = np.exp(1j * k * delta)
  phase[n // 2] = 0.0
  shape: List[int] = [1] * values.ndim
  shape[variable] = n
  return fft.ifft(fft.fft(values, axis=variable) * phase.reshape(shape), axis=variable)


def fourier_interpolate(f: GridFunction, coords: Sequence[np.ndarray]) -> np.ndarray:
  """Trigonometric interpolation of a grid field at arbitrary points."""
  grid: PhaseGrid = f.grid
  points: List[np.ndarray] = [np.asarray(c, dtype=float) for c in coords]
  batch: Tuple[int, ...] = np.broadcast_shapes(*(p.shape for p in points))
  flat: List[np.ndarray] = [np.broadcast_to(p, batch).ravel() for p in points]
  axes: Tuple[int, ...] = tuple(range(2 * grid.d))
  coef: np.ndarray = fft.fftn(f.values, axes=axes) / grid.N**(2 * grid.d)
  nyquist: List[slice] = [slice(None)] * coef.ndim
  for v in axes:
    nyquist[v] = slice(grid.N // 2, grid.N // 2 + 1)
    coef[tuple(nyquist)] = 0.0
    nyquist[v] = slice(None)

  # Contract the first axis, then the remaining ones diagonally in the batch
  result: Optional[np.ndarray] = None
  for v in axes:
    origin: float = -grid.length(v) / 2
    phase: np.ndarray = np.exp(1j * np.outer(flat[v] - origin, grid.wavenumbers(v)))
    if result is None:
      result = np.tensordot(phase, coef, axes=([1], [0]))
    else:
      result = np.einsum("bk...,bk->b...", result, phase)
  return result.reshape(batch + f.shape)  # type: ignore[union-attr]


# --------------------------------------------------------------------------
# Random smooth test fields
# --------------------------------------------------------------------------


def random_trig_symbol(
    d: int,
    n: int,
    rng: np.random.Generator,
    degree: int = 1,
    L_x: float = 2 * math.pi,
    L_xi: float = 2 * math.pi,
    hermitian: bool = True,
    terms: int = 4,
) -> SymbolicMatrix:
  """Random band-limited matrix trigonometric polynomial as a closed form."""
  variables: Tuple[sympy.Symbol, ...] = phase_space_symbols(d)
  lengths: List[float] = [L_x] * d + [L_xi] * d
  entries: List[List[sympy.Expr]] = [[sympy.Integer(0)] * n for _ in range(n)]
  for _ in range(terms):
    freq: np.ndarray = rng.integers(-degree, degree + 1, size=2 * d)
    phase_arg: sympy.Expr = sum(
        sympy.Rational(int(k)) * 2 * sympy.pi * var / sympy.Float(length)
        for k, var, length in zip(freq, variables, lengths)
    )
    wave: sympy.Expr = sympy.exp(sympy.I * phase_arg)
    amp: np.ndarray = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / (2 * n)
    for r in range(n):
      for c in range(n):
        entries[r][c] += complex(amp[r, c]) * wave
  matrix: sympy.Matrix = sympy.Matrix(entries)
  if hermitian:
    matrix = (matrix + matrix.H) / 2
  return SymbolicMatrix(matrix, d)


def random_projector_symbol(
    d: int,
    rng: np.random.Generator,
    amplitude: float = 0.5,
    offset: float = 1.5,
    L_x: float = 2 * math.pi,
    L_xi: float = 2 * math.pi,
) -> SymbolicMatrix:
  """P = (Id + n·σ)/2 for a smooth unit-vector field n = v/|v|."""
  variables: Tuple[sympy.Symbol, ...] = phase_space_symbols(d)
  lengths: List[float] = [L_x] * d + [L_xi] * d
  components: List[sympy.Expr] = []
  for axis in range(3):
    weights: np.ndarray = rng.uniform(-1, 1, size=2 * d)
    shifts: np.ndarray = rng.uniform(0, 2 * math.pi, size=2 * d)
    comp: sympy.Expr = sum(
        amplitude / (2 * d) * float(w) * sympy.cos(2 * sympy.pi * var / float(length) + float(s))
        for w, var, length, s in zip(weights, variables, lengths, shifts)
    )
    if axis == 2:
      comp += offset
    components.append(comp)
  norm: sympy.Expr = sympy.sqrt(sum(c**2 for c in components))
  sigma: List[sympy.Matrix] = [sympy.Matrix(s.tolist()) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)]
  matrix: sympy.Matrix = sympy.eye(2) / 2
  for comp, s in zip(components, sigma):
    matrix += s * comp / (2 * norm)
  return SymbolicMatrix(matrix, d)
