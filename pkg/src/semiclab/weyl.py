"""
Weyl quantization of matrix-valued symbols on the quantum torus.

The kernel of op(B) is M_ab = N^{-d} Σ_j e^{iξ_j(x_a−x_b)/ħ} B(m_ab, ξ_j) with
m_ab the short-arc midpoint of x_a and x_b. On a quantum grid the phase factor
reduces to (−1)^{a−b} times an inverse DFT in ξ, so quantization costs one FFT
of the symbol sampled on the half grid.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Final, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft

from .errors import ConfigError, GridError
from .grid import GridFunction, PhaseGrid, SeriesSource, fourier_shift, half_grid_mesh
from .jets import Jet, moyal_series
from .utils import operator_norm

logger: logging.Logger = logging.getLogger("semiclab")

MAX_MOYAL_ORDER: Final[int] = 4
HERMITIAN_OPERATOR_TOL: Final[float] = 1e-10


@dataclass
class MatrixSymbol:
  """ħ-expansion B ~ Σ_j ħ^j B_j of an n × n symbol."""

  coefficients: List[GridFunction]

  def __post_init__(self) -> None:
    if not self.coefficients:
      raise ConfigError("A matrix symbol needs at least one coefficient")
    first: GridFunction = self.coefficients[0]
    for j, coef in enumerate(self.coefficients[1:], start=1):
      if coef.grid != first.grid:
        raise GridError(f"Coefficient {j} lives on a different grid")
      if coef.shape != first.shape:
        raise ConfigError(f"Coefficient {j} has shape {coef.shape}, expected {first.shape}")

  @classmethod
  def of(cls, *coefficients: GridFunction) -> "MatrixSymbol":
    return cls(list(coefficients))

  @property
  def grid(self) -> PhaseGrid:
    return self.coefficients[0].grid

  @property
  def shape(self) -> Tuple[int, int]:
    return self.coefficients[0].shape

  @property
  def n(self) -> int:
    return self.shape[0]

  @property
  def truncation_order(self) -> int:
    return len(self.coefficients) - 1

  @property
  def principal(self) -> GridFunction:
    return self.coefficients[0]

  def coefficient(self, j: int) -> GridFunction:
    """B_j, or zero beyond the truncation order."""
    if j < len(self.coefficients):
      return self.coefficients[j]
    zero: np.ndarray = np.zeros_like(self.coefficients[0].values)
    return GridFunction(self.grid, zero, source=_ZeroSource(self.shape))

  def truncate(self, order: int) -> "MatrixSymbol":
    return MatrixSymbol([self.coefficient(j) for j in range(order + 1)])

  def evaluate(self, hbar: Optional[float] = None) -> GridFunction:
    """Σ_j ħ^j B_j at the grid's ħ (or the one given)."""
    h: float = self.grid.hbar if hbar is None else hbar
    values: np.ndarray = sum(h**j * c.values for j, c in enumerate(self.coefficients))
    source: Optional[Any] = None
    if all(c.source is not None for c in self.coefficients):
      source = SeriesSource([(h**j, c.source) for j, c in enumerate(self.coefficients)])
    hermitian: bool = all(c.hermitian for c in self.coefficients)
    return GridFunction(self.grid, values, hermitian=hermitian, source=source)

  def jets(self, order: int) -> List[Jet]:
    """Jets at every node; coefficient j gets order − j (at least 0)."""
    return [c.jet_of(max(order - j, 0)) for j, c in enumerate(self.coefficients)]

  def __add__(self, other: "MatrixSymbol") -> "MatrixSymbol":
    size: int = max(len(self.coefficients), len(other.coefficients))
    return MatrixSymbol([self.coefficient(j) + other.coefficient(j) for j in range(size)])

  def __sub__(self, other: "MatrixSymbol") -> "MatrixSymbol":
    size: int = max(len(self.coefficients), len(other.coefficients))
    return MatrixSymbol([self.coefficient(j) - other.coefficient(j) for j in range(size)])

  def scale(self, factor: complex) -> "MatrixSymbol":
    return MatrixSymbol([c.scale(factor) for c in self.coefficients])

  def dagger(self) -> "MatrixSymbol":
    return MatrixSymbol([c.dagger() for c in self.coefficients])


class _ZeroSource:

  def __init__(self, shape: Tuple[int, int]):
    self.shape: Tuple[int, int] = shape

  def evaluate(self, coords: Sequence[np.ndarray]) -> np.ndarray:
    batch: Tuple[int, ...] = np.broadcast_shapes(*(np.shape(c) for c in coords))
    return np.zeros(batch + self.shape, dtype=complex)

  def jet(self, coords: Sequence[np.ndarray], order: int) -> Jet:
    return Jet.constant(self.evaluate(coords), len(coords), order)


class MoyalSource:
  """Coefficient k of (Σ ħ^a A_a) # (Σ ħ^b B_b), evaluated anywhere through jets."""

  def __init__(self, left: Sequence[Any], right: Sequence[Any], k: int):
    self.left: List[Any] = list(left)
    self.right: List[Any] = list(right)
    self.k: int = k

  def jet(self, coords: Sequence[np.ndarray], order: int) -> Jet:
    k: int = self.k
    left: List[Jet] = [s.jet(coords, order + k - a) for a, s in enumerate(self.left[:k + 1])]
    right: List[Jet] = [s.jet(coords, order + k - b) for b, s in enumerate(self.right[:k + 1])]
    term: Optional[Jet] = moyal_series(left, right, k)[k]
    if term is None:
      raise ConfigError(f"Moyal coefficient {k} has no contributing terms")
    return term.truncate(order)

  def evaluate(self, coords: Sequence[np.ndarray]) -> np.ndarray:
    return self.jet(coords, 0).value


@dataclass
class DiscretizedOperator:
  """Finite matrix in the position-major, spin-minor basis."""

  matrix: np.ndarray
  grid: PhaseGrid
  n: int = 1
  hermitian: bool = False
  meta: Dict[str, Any] = field(default_factory=dict)

  def __post_init__(self) -> None:
    self.matrix = np.asarray(self.matrix, dtype=complex)
    expected: int = self.grid.dimension * self.n
    if self.matrix.shape != (expected, expected):
      raise ConfigError(
          f"Operator of shape {self.matrix.shape} does not match grid dimension "
          f"{self.grid.dimension} with {self.n} components"
      )
    if self.hermitian:
      deviation: float = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
      scale: float = max(1.0, float(np.max(np.abs(self.matrix))))
      if deviation > HERMITIAN_OPERATOR_TOL * scale:
        raise ConfigError(f"Operator flagged hermitian deviates by {deviation:.3e}")

  @property
  def dim(self) -> int:
    return self.matrix.shape[0]

  def _wrap(self, matrix: np.ndarray, hermitian: bool = False) -> "DiscretizedOperator":
    return DiscretizedOperator(matrix, self.grid, self.n, hermitian)

  def __matmul__(self, other: "DiscretizedOperator") -> "DiscretizedOperator":
    return self._wrap(self.matrix @ other.matrix)

  def __add__(self, other: "DiscretizedOperator") -> "DiscretizedOperator":
    return self._wrap(self.matrix + other.matrix, self.hermitian and other.hermitian)

  def __sub__(self, other: "DiscretizedOperator") -> "DiscretizedOperator":
    return self._wrap(self.matrix - other.matrix, self.hermitian and other.hermitian)

  def scale(self, factor: complex) -> "DiscretizedOperator":
    return self._wrap(self.matrix * factor, self.hermitian and complex(factor).imag == 0)

  def dagger(self) -> "DiscretizedOperator":
    return self._wrap(self.matrix.conj().T, self.hermitian)

  def hermitian_defect(self) -> float:
    return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) if self.matrix.size else 0.0

  def norm(self, tol: float = 1e-6) -> float:
    return operator_norm(self.matrix, tol=tol)

  def expectation(self, psi: np.ndarray) -> complex:
    return complex(np.vdot(psi, self.matrix @ psi))


def _require_quantum(grid: PhaseGrid) -> None:
  if not grid.is_quantum:
    raise GridError(
        f"Weyl quantization needs hbar = L_x L_xi/(2 pi N) = "
        f"{grid.L_x * grid.L_xi / (2 * math.pi * grid.N):.6g}, grid has hbar={grid.hbar:.6g}"
    )


def half_grid_values(f: GridFunction) -> np.ndarray:
  """f sampled with x on the 2N-point half grid, shape (2N,)*d + (N,)*d + (r, c)."""
  grid: PhaseGrid = f.grid
  if f.source is not None:
    return np.asarray(f.source.evaluate(half_grid_mesh(grid)), dtype=complex)

  out: np.ndarray = np.empty((2 * grid.N, ) * grid.d + (grid.N, ) * grid.d + f.shape, dtype=complex)
  for parity in itertools.product((0, 1), repeat=grid.d):
    shifted: np.ndarray = f.values
    for axis, p in enumerate(parity):
      if p:
        shifted = fourier_shift(shifted, axis, grid.dx / 2, grid.L_x)
    out[tuple(slice(p, None, 2) for p in parity)] = shifted
  return out


def _axis_indices(N: int) -> Dict[str, np.ndarray]:
  """Per-axis (a, b) index tables of the midpoint kernel."""
  a: np.ndarray = np.arange(N)[:, None]
  b: np.ndarray = np.arange(N)[None, :]
  mc: np.ndarray = ((b - a + N // 2) % N) - N // 2
  s: np.ndarray = (2 * a + mc) % (2 * N)
  tie: np.ndarray = mc == -(N // 2)
  return {
      "s": s,
      "s_alt": (s + N) % (2 * N),
      "w": np.where(tie, 0.5, 1.0),
      "w_alt": np.where(tie, 0.5, 0.0),
      "m": (a - b) % N,
  }


def _expand(table: np.ndarray, axis: int, d: int) -> np.ndarray:
  """Place an (a_l, b_l) table on the axes l and d + l of a 2d-dim array."""
  shape: List[int] = [1] * (2 * d)
  shape[axis] = table.shape[0]
  shape[d + axis] = table.shape[1]
  return table.reshape(shape)


def _to_matrix(blocks: np.ndarray, d: int) -> np.ndarray:
  """(a..., b..., r, c) → ((a, r), (b, c)) position-major, spin-minor."""
  perm: List[int] = list(range(d)) + [2 * d] + list(range(d, 2 * d)) + [2 * d + 1]
  arranged: np.ndarray = np.transpose(blocks, perm)
  rows: int = int(np.prod(blocks.shape[:d])) * blocks.shape[-2]
  cols: int = int(np.prod(blocks.shape[d:2 * d])) * blocks.shape[-1]
  return arranged.reshape(rows, cols)


def _from_matrix(matrix: np.ndarray, grid: PhaseGrid, n: int) -> np.ndarray:
  """Inverse of _to_matrix."""
  d: int = grid.d
  blocks: np.ndarray = matrix.reshape((grid.N, ) * d + (n, ) + (grid.N, ) * d + (n, ))
  perm: List[int] = list(range(d)) + list(range(d + 1, 2 * d + 1)) + [d, 2 * d + 1]
  return np.transpose(blocks, perm)


def quantize(symbol: Union[MatrixSymbol, GridFunction]) -> DiscretizedOperator:
  """op^W[B] for B = Σ ħ^j B_j at the grid's ħ."""
  field_: GridFunction = symbol.evaluate() if isinstance(symbol, MatrixSymbol) else symbol
  grid: PhaseGrid = field_.grid
  _require_quantum(grid)
  d: int = grid.d

  samples: np.ndarray = half_grid_values(field_)
  spectrum: np.ndarray = fft.ifft(samples, axis=d) if d == 1 else fft.ifftn(
      samples, axes=tuple(range(d, 2 * d))
  )

  tables: Dict[str, np.ndarray] = _axis_indices(grid.N)
  m_idx: List[np.ndarray] = [_expand(tables["m"], l, d) for l in range(d)]
  options: List[List[Tuple[np.ndarray, np.ndarray]]] = [[
      (_expand(tables["s"], l, d), _expand(tables["w"], l, d)),
      (_expand(tables["s_alt"], l, d), _expand(tables["w_alt"], l, d)),
  ] for l in range(d)]

  blocks: Optional[np.ndarray] = None
  for choice in itertools.product(*options):
    weight: np.ndarray = np.ones((1, ) * (2 * d))
    for _, w in choice:
      weight = weight * w
    if not np.any(weight):
      continue
    gathered: np.ndarray = spectrum[tuple(s for s, _ in choice) + tuple(m_idx)]
    term: np.ndarray = weight[..., None, None] * gathered
    blocks = term if blocks is None else blocks + term

  sign: np.ndarray = np.ones((1, ) * (2 * d))
  for l in range(d):
    sign = sign * _expand(np.where(tables["m"] % 2 == 0, 1.0, -1.0), l, d)
  blocks = blocks * sign[..., None, None]  # type: ignore[operator]

  hermitian: bool = field_.hermitian
  op: DiscretizedOperator = DiscretizedOperator(_to_matrix(blocks, d), grid, field_.n)
  if hermitian:
    op.matrix = 0.5 * (op.matrix + op.matrix.conj().T)
    op.hermitian = True
  logger.debug(f"Quantized {field_.n}x{field_.n} symbol on N={grid.N}, d={d} (dim {op.dim})")
  return op


def dequantize(op: DiscretizedOperator) -> MatrixSymbol:
  """Weyl symbol of a discretized operator; exact for band-limited symbols."""
  grid: PhaseGrid = op.grid
  _require_quantum(grid)
  d: int = grid.d
  N: int = grid.N
  blocks: np.ndarray = _from_matrix(op.matrix, grid, op.n)

  # K[a, m] = (−1)^m M[a, a − m]
  arange: np.ndarray = np.arange(N)
  node_idx: List[np.ndarray] = []
  col_idx: List[np.ndarray] = []
  for l in range(d):
    i: np.ndarray = arange[:, None]
    m: np.ndarray = arange[None, :]
    mc: np.ndarray = ((-m + N // 2) % N) - N // 2
    p: np.ndarray = m % 2
    a: np.ndarray = (i - (mc - p) // 2) % N
    node_idx.append(_expand(a, l, d))
    col_idx.append(_expand((a - m) % N, l, d))
  sampled: np.ndarray = blocks[tuple(node_idx) + tuple(col_idx)]

  sign: np.ndarray = np.ones((1, ) * (2 * d))
  for l in range(d):
    sign = sign * _expand(np.where(arange[None, :] % 2 == 0, 1.0, -1.0) * np.ones((N, 1)), l, d)
  sampled = sampled * sign[..., None, None]

  # Odd-m slices sit at x + Δx/2; shift them back onto the nodes
  for l in range(d):
    k: np.ndarray = grid.wavenumbers(l)
    phase: np.ndarray = np.exp(-0.5j * k * grid.dx)
    phase[N // 2] = 0.0
    odd: np.ndarray = (arange % 2 == 1)
    table: np.ndarray = np.where(odd[None, :], phase[:, None], 1.0)
    spectrum: np.ndarray = fft.fft(sampled, axis=l)
    sampled = fft.ifft(spectrum * _expand(table, l, d)[..., None, None], axis=l)

  values: np.ndarray = fft.fftn(sampled, axes=tuple(range(d, 2 * d)))
  return MatrixSymbol([GridFunction(grid, values)])


def moyal_product(a: MatrixSymbol, b: MatrixSymbol, order: int) -> MatrixSymbol:
  """A #_K B: the ħ^k coefficients, k ≤ K, of the expanded symbol product."""
  if not 0 <= order <= MAX_MOYAL_ORDER:
    raise ConfigError(f"Moyal order must be between 0 and {MAX_MOYAL_ORDER}, got {order}")
  if a.grid != b.grid:
    raise GridError("Moyal product of symbols on different grids")
  left: List[Jet] = [a.coefficient(j).jet_of(order - j) for j in range(order + 1)]
  right: List[Jet] = [b.coefficient(j).jet_of(order - j) for j in range(order + 1)]
  terms: List[Optional[Jet]] = moyal_series(left, right, order)

  sourced: bool = all(
      hasattr(c.source, "jet") for c in a.coefficients + b.coefficients if c is not None
  )
  out: List[GridFunction] = []
  for k, term in enumerate(terms):
    source: Optional[MoyalSource] = None
    if sourced:
      source = MoyalSource([a.coefficient(j).source for j in range(k + 1)],
                           [b.coefficient(j).source for j in range(k + 1)], k)
    out.append(GridFunction(a.grid, term.value, source=source))  # type: ignore[union-attr]
  return MatrixSymbol(out)


def commutator_sharp(a: MatrixSymbol, b: MatrixSymbol, order: int) -> MatrixSymbol:
  """[A, B]_# = A # B − B # A."""
  return moyal_product(a, b, order) - moyal_product(b, a, order)


def wigner_matrix(psi: np.ndarray, grid: PhaseGrid, n: int = 1) -> GridFunction:
  """
  Matrix-valued Wigner transform W[ψ], normalized so that
  ⟨ψ, op(B)ψ⟩ = (2πħ)^{-d} tr ∫ W[ψ] B.
  """
  vector: np.ndarray = np.asarray(psi, dtype=complex).ravel()
  if vector.size != grid.dimension * n:
    raise ConfigError(f"State of length {vector.size} does not match dimension {grid.dimension * n}")
  rank_one: DiscretizedOperator = DiscretizedOperator(np.outer(vector, vector.conj()), grid, n)
  return GridFunction(grid, dequantize(rank_one).principal.values)


def gaussian_packet(
    grid: PhaseGrid,
    center: Sequence[float],
    spinor: Optional[Sequence[complex]] = None,
) -> np.ndarray:
  """Normalized Gaussian coherent state of width √ħ at (x₀, ξ₀) on the periodic box."""
  d: int = grid.d
  x0: np.ndarray = np.asarray(center[:d], dtype=float)
  xi0: np.ndarray = np.asarray(center[d:], dtype=float)
  axes: Tuple[np.ndarray, ...] = tuple(np.meshgrid(*[grid.x_axis()] * d, indexing="ij"))
  phase: np.ndarray = np.zeros(axes[0].shape)
  envelope: np.ndarray = np.zeros(axes[0].shape)
  for l in range(d):
    shift: np.ndarray = (axes[l] - x0[l] + grid.L_x / 2) % grid.L_x - grid.L_x / 2
    envelope = envelope - shift**2 / (2 * grid.hbar)
    phase = phase + xi0[l] * shift / grid.hbar
  scalar: np.ndarray = np.exp(envelope + 1j * phase).ravel()
  spin: np.ndarray = np.array([1.0], dtype=complex) if spinor is None else np.asarray(
      spinor, dtype=complex
  )
  state: np.ndarray = np.kron(scalar, spin / np.linalg.norm(spin))
  return state / np.linalg.norm(state)
