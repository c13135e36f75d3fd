"""
Built-in desk-scale Hamiltonians.

Every model has the form H₀ = s(z)·Id + K(z) with K² = ε(z)²·Id, so its
branches λ_± = s ± ε and projectors P_± = (Id ± K/ε)/2 are known in closed
form. The closed forms serve as oracles in tests and give exact off-diagonal
observables.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Final, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from .errors import ConfigError
from .grid import GridFunction, PhaseGrid, quantum_grid
from .projections import EigenBundle, eigendecompose
from .symbolic import SymbolicMatrix, phase_space_symbols
from .utils import SIGMA_X, SIGMA_Y, SIGMA_Z
from .weyl import DiscretizedOperator, MatrixSymbol, quantize

logger: logging.Logger = logging.getLogger("semiclab")

Params = Dict[str, float]
Builder = Callable[[Tuple[sympy.Symbol, ...], Params], sympy.Matrix]

SIGMAS: Final[Tuple[sympy.Matrix, ...]] = tuple(
    sympy.Matrix(s.tolist()) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)
)


def _dirac_matrices() -> Tuple[List[sympy.Matrix], sympy.Matrix]:
  """Standard 4×4 α_i = [[0, σ_i], [σ_i, 0]] and β = diag(Id, −Id)."""
  zero: sympy.Matrix = sympy.zeros(2)
  eye: sympy.Matrix = sympy.eye(2)
  alphas: List[sympy.Matrix] = [
      sympy.Matrix(sympy.BlockMatrix([[zero, s], [s, zero]])) for s in SIGMAS
  ]
  beta: sympy.Matrix = sympy.Matrix(sympy.BlockMatrix([[eye, zero], [zero, -eye]]))
  return alphas, beta


@dataclass(frozen=True)
class GridChoice:
  """One point of an ħ sweep: points per axis and box lengths."""

  N: int
  L_x: float
  L_xi: float

  @property
  def hbar(self) -> float:
    return self.L_x * self.L_xi / (2 * math.pi * self.N)


@dataclass(frozen=True)
class ModelSpec:
  """A model: closed-form symbol pieces plus recommended windows and sweeps."""

  id: str
  title: str
  d: int
  n: int
  multiplicities: Tuple[int, ...]
  defaults: Params
  scalar: Callable[[Tuple[sympy.Symbol, ...], Params], sympy.Expr]
  matrix: Optional[Builder]
  gap: Optional[Callable[[Tuple[sympy.Symbol, ...], Params], sympy.Expr]]
  sweep: Tuple[GridChoice, ...]
  window: Tuple[float, float]
  trust_energy: float
  margin: float
  period: float
  group: str = "u1"
  correction: Optional[Builder] = None
  quadratic: bool = False
  start: Tuple[float, ...] = ()
  observables: Tuple[str, ...] = ("identity", "x_squared", "position")

  def resolve(self, overrides: Optional[Params] = None) -> Params:
    params: Params = dict(self.defaults)
    for key, value in (overrides or {}).items():
      if key not in params:
        raise ConfigError(
            f"Model '{self.id}' has no parameter '{key}'. Known: {', '.join(sorted(params))}"
        )
      params[key] = float(value)
    return params

  @property
  def hbars(self) -> Tuple[float, ...]:
    return tuple(c.hbar for c in self.sweep)

  def choice_for(self, N: int) -> GridChoice:
    """The sweep box at a given grid size (the first box when N is not in the sweep)."""
    for choice in self.sweep:
      if choice.N == N:
        return choice
    base: GridChoice = self.sweep[0]
    return GridChoice(N, base.L_x, base.L_xi)

  def instance(self, choice: Optional[GridChoice] = None,
               params: Optional[Params] = None) -> "ModelInstance":
    return ModelInstance(self, choice or self.sweep[0], self.resolve(params))


@dataclass
class ModelInstance:
  """A model on one grid, with lazily built bundle, operator and spectrum."""

  spec: ModelSpec
  choice: GridChoice
  params: Params
  meta: Dict[str, float] = field(default_factory=dict)

  @cached_property
  def grid(self) -> PhaseGrid:
    return quantum_grid(self.spec.d, self.choice.N, self.choice.L_x, self.choice.L_xi)

  @property
  def hbar(self) -> float:
    return self.grid.hbar

  @cached_property
  def variables(self) -> Tuple[sympy.Symbol, ...]:
    return phase_space_symbols(self.spec.d)

  def _scalar_expr(self) -> sympy.Expr:
    return self.spec.scalar(self.variables, self.params)

  def _matrix_expr(self) -> sympy.Matrix:
    if self.spec.matrix is None:
      return sympy.zeros(self.spec.n)
    return self.spec.matrix(self.variables, self.params)

  @cached_property
  def h0_symbolic(self) -> SymbolicMatrix:
    expr: sympy.Matrix = self._scalar_expr() * sympy.eye(self.spec.n) + self._matrix_expr()
    return SymbolicMatrix(expr, self.spec.d)

  @cached_property
  def h1_symbolic(self) -> SymbolicMatrix:
    if self.spec.correction is None:
      return SymbolicMatrix(sympy.zeros(self.spec.n), self.spec.d)
    return SymbolicMatrix(self.spec.correction(self.variables, self.params), self.spec.d)

  @cached_property
  def h0(self) -> GridFunction:
    return GridFunction.from_symbolic(self.grid, self.h0_symbolic, hermitian=True)

  @cached_property
  def h1(self) -> GridFunction:
    return GridFunction.from_symbolic(self.grid, self.h1_symbolic, hermitian=True)

  @cached_property
  def symbol(self) -> MatrixSymbol:
    return MatrixSymbol([self.h0, self.h1])

  @cached_property
  def bundle(self) -> EigenBundle:
    return eigendecompose(self.h0, self.spec.multiplicities)

  @cached_property
  def operator(self) -> DiscretizedOperator:
    return quantize(self.symbol)

  @cached_property
  def spectrum(self) -> Tuple[np.ndarray, np.ndarray]:
    """Full eigen-decomposition of the quantized Hamiltonian."""
    logger.debug(f"Diagonalizing {self.spec.id} at dimension {self.operator.dim}")
    return np.linalg.eigh(self.operator.matrix)

  @cached_property
  def trusted_basis(self) -> np.ndarray:
    """Eigenvectors of op(H) with energy ≤ the model's trust energy."""
    energies, vectors = self.spectrum
    return vectors[:, energies <= self.spec.trust_energy]

  def trusted_norm(self, matrix: np.ndarray) -> float:
    """‖Π A Π‖ with Π the spectral projector below the trust energy."""
    basis: np.ndarray = self.trusted_basis
    if basis.shape[1] == 0:
      return 0.0
    return float(np.linalg.norm(basis.conj().T @ matrix @ basis, 2))

  # Closed-form branch data ------------------------------------------------

  def branch_energy(self, nu: int) -> SymbolicMatrix:
    """λ_ν as a 1×1 closed form (branches ascending)."""
    s: sympy.Expr = self._scalar_expr()
    if self.spec.gap is None:
      return SymbolicMatrix.scalar(s, self.spec.d)
    eps: sympy.Expr = self.spec.gap(self.variables, self.params)
    return SymbolicMatrix.scalar(s + (-eps if nu == 0 else eps), self.spec.d)

  def branch_projector(self, nu: int) -> SymbolicMatrix:
    """P_ν = (Id ∓ K/ε)/2 in closed form."""
    n: int = self.spec.n
    if self.spec.gap is None:
      return SymbolicMatrix(sympy.eye(n), self.spec.d)
    eps: sympy.Expr = self.spec.gap(self.variables, self.params)
    sign: int = -1 if nu == 0 else 1
    return SymbolicMatrix((sympy.eye(n) + sign * self._matrix_expr() / eps) / 2, self.spec.d)

  def observable(self, name: str) -> SymbolicMatrix:
    """A named test observable B₀ as a closed form."""
    v: Tuple[sympy.Symbol, ...] = self.variables
    d: int = self.spec.d
    n: int = self.spec.n
    eye: sympy.Matrix = sympy.eye(n)
    if name == "identity":
      return SymbolicMatrix(eye, d)
    if name == "position":
      return SymbolicMatrix(v[0] * eye, d)
    if name == "x_squared":
      return SymbolicMatrix(v[0]**2 * eye, d)
    if name == "momentum_squared":
      return SymbolicMatrix(v[d]**2 * eye, d)
    if name == "cos_x":
      return SymbolicMatrix(sympy.cos(v[0]) * eye, d)
    if name == "coupling":
      return SymbolicMatrix(v[0]**2 * v[1]**2 * eye if d == 2 else v[0]**4 * eye, d)
    if name in ("off_diagonal", "spin"):
      if self.spec.gap is None:
        raise ConfigError(f"Model '{self.spec.id}' has a single branch; '{name}' is undefined")
      mixer: sympy.Matrix = _mixing_matrix(n)
      projs: List[sympy.Matrix] = [self.branch_projector(nu).expr for nu in range(2)]
      if name == "off_diagonal":
        expr: sympy.Matrix = projs[0] * mixer * projs[1] + projs[1] * mixer * projs[0]
      else:
        expr = projs[0] * mixer * projs[0] + projs[1] * mixer * projs[1]
      return SymbolicMatrix(expr, d)
    raise ConfigError(f"Unknown observable '{name}'")

  def observable_field(self, name: str) -> GridFunction:
    return GridFunction.from_symbolic(self.grid, self.observable(name), hermitian=True)


def _mixing_matrix(n: int) -> sympy.Matrix:
  """A fixed hermitian matrix with no special relation to the models."""
  if n == 2:
    return SIGMAS[2] + SIGMAS[0] / 2
  if n == 4:
    zero: sympy.Matrix = sympy.zeros(2)
    return sympy.Matrix(sympy.BlockMatrix([[SIGMAS[2], zero], [zero, SIGMAS[0]]]))
  return sympy.eye(n)


# --------------------------------------------------------------------------
# Catalog
# --------------------------------------------------------------------------


def _harmonic_scalar(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Expr:
  return (v[1]**2 + p["omega"]**2 * v[0]**2) / 2


def _pauli_scalar(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Expr:
  return (v[0]**2 + v[1]**2) / 2


def _pauli_matrix(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Matrix:
  return p["c"] * v[0] * SIGMAS[0] + p["c"] * v[1] * SIGMAS[1] + p["delta"] * SIGMAS[2]


def _pauli_gap(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Expr:
  return sympy.sqrt(p["c"]**2 * (v[0]**2 + v[1]**2) + p["delta"]**2)


def _pauli_correction(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Matrix:
  return p["kappa"] * SIGMAS[2]


def _saturated(xi: sympy.Symbol, length: float) -> sympy.Expr:
  """ξ → (L/2π) sin(2πξ/L): periodic, equal to ξ up to O(ξ³)."""
  return length / (2 * sympy.pi) * sympy.sin(2 * sympy.pi * xi / length)


def _dirac_scalar(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Expr:
  return p["v0"] * (1 - sympy.cos(2 * sympy.pi * v[0] / _DIRAC_LENGTH))


def _dirac_matrix(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Matrix:
  alphas, beta = _dirac_matrices()
  phase: sympy.Expr = 2 * sympy.pi * v[0] / _DIRAC_LENGTH
  return (alphas[0] * _saturated(v[1], _DIRAC_LENGTH) + beta * p["mass"] +
          alphas[1] * p["a2"] * sympy.sin(phase) + alphas[2] * p["a3"] * sympy.cos(phase))


def _dirac_gap(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Expr:
  phase: sympy.Expr = 2 * sympy.pi * v[0] / _DIRAC_LENGTH
  return sympy.sqrt(
      _saturated(v[1], _DIRAC_LENGTH)**2 + p["mass"]**2 + (p["a2"] * sympy.sin(phase))**2 +
      (p["a3"] * sympy.cos(phase))**2
  )


def _quartic_scalar(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Expr:
  x1, x2, xi1, xi2 = v
  return (xi1**2 + xi2**2) / 2 + p["omega"]**2 * (x1**2 + x2**2) / 2 + p["g"] * x1**2 * x2**2


def _quartic_matrix(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Matrix:
  return p["c"] * v[0] * SIGMAS[0] + p["c"] * v[1] * SIGMAS[1] + p["delta"] * SIGMAS[2]


def _quartic_gap(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Expr:
  return sympy.sqrt(p["c"]**2 * (v[0]**2 + v[1]**2) + p["delta"]**2)


def _anisotropic_scalar(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Expr:
  x1, x2, xi1, xi2 = v
  return (xi1**2 + xi2**2 + p["omega1"]**2 * x1**2 + p["omega2"]**2 * x2**2) / 2


def _constant_coupling(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Matrix:
  return p["delta"] * SIGMAS[2]


def _constant_gap(v: Tuple[sympy.Symbol, ...], p: Params) -> sympy.Expr:
  return sympy.Float(abs(p["delta"]))


_BOX_1D: Final[float] = 9.0
_DIRAC_LENGTH: Final[float] = 2 * math.pi
_BOX_2D: Final[float] = 6.0

MODELS: Final[Tuple[ModelSpec, ...]] = (
    ModelSpec(
        id="harmonic",
        title="Scalar harmonic oscillator",
        d=1,
        n=1,
        multiplicities=(1, ),
        defaults={"omega": 1.0},
        scalar=_harmonic_scalar,
        matrix=None,
        gap=None,
        sweep=tuple(GridChoice(N, _BOX_1D, _BOX_1D) for N in (64, 128, 256, 512)),
        window=(3.0, 5.0),
        trust_energy=6.0,
        margin=1.0,
        period=2 * math.pi,
        quadratic=True,
        start=(1.0, 0.5),
        observables=("identity", "x_squared", "position"),
    ),
    ModelSpec(
        id="pauli",
        title="Pauli avoided crossing",
        d=1,
        n=2,
        multiplicities=(1, 1),
        defaults={"c": 0.5, "delta": 0.5, "kappa": 0.2},
        scalar=_pauli_scalar,
        matrix=_pauli_matrix,
        gap=_pauli_gap,
        sweep=tuple(GridChoice(N, _BOX_1D, _BOX_1D) for N in (64, 128, 256, 512)),
        window=(3.0, 5.0),
        trust_energy=6.0,
        margin=1.0,
        period=2 * math.pi,
        correction=_pauli_correction,
        start=(1.0, 0.5),
        observables=("identity", "x_squared", "off_diagonal"),
    ),
    ModelSpec(
        id="dirac",
        title="Dirac-type doubly degenerate bands",
        d=1,
        n=4,
        multiplicities=(2, 2),
        defaults={"mass": 1.0, "v0": 0.3, "a2": 0.3, "a3": 0.2},
        scalar=_dirac_scalar,
        matrix=_dirac_matrix,
        gap=_dirac_gap,
        sweep=tuple(GridChoice(N, _DIRAC_LENGTH, _DIRAC_LENGTH) for N in (32, 64, 128, 256)),
        window=(1.6, 1.0),
        trust_energy=math.inf,
        margin=0.0,
        period=2 * math.pi,
        group="su2",
        start=(0.5, 0.3),
        observables=("identity", "cos_x", "off_diagonal"),
    ),
    ModelSpec(
        id="quartic",
        title="Chaotic quartic-coupled 2D model",
        d=2,
        n=2,
        multiplicities=(1, 1),
        defaults={"omega": 1.0, "g": 1.0, "c": 0.5, "delta": 0.5},
        scalar=_quartic_scalar,
        matrix=_quartic_matrix,
        gap=_quartic_gap,
        sweep=(GridChoice(16, _BOX_2D, _BOX_2D), GridChoice(32, _BOX_2D, _BOX_2D),
               GridChoice(32, 5.0, 5.0)),
        window=(0.8, 1.0),
        trust_energy=1.2,
        margin=0.75,
        period=2 * math.pi,
        start=(0.4, -0.3, 0.2, 0.5),
        observables=("x_squared", "momentum_squared", "coupling"),
    ),
    ModelSpec(
        id="anisotropic",
        title="Integrable anisotropic 2D oscillator",
        d=2,
        n=2,
        multiplicities=(1, 1),
        defaults={"omega1": 1.0, "omega2": math.sqrt(2.0), "delta": 0.5},
        scalar=_anisotropic_scalar,
        matrix=_constant_coupling,
        gap=_constant_gap,
        sweep=(GridChoice(16, _BOX_2D, _BOX_2D), GridChoice(32, _BOX_2D, _BOX_2D),
               GridChoice(32, 5.0, 5.0)),
        window=(0.8, 1.0),
        trust_energy=1.2,
        margin=0.75,
        period=2 * math.pi,
        start=(0.4, -0.3, 0.2, 0.5),
        observables=("x_squared", "momentum_squared", "coupling"),
    ),
)


def model_catalog() -> List[ModelSpec]:
  """All built-in models."""
  return list(MODELS)


def get_model(model_id: str) -> ModelSpec:
  for spec in MODELS:
    if spec.id == model_id:
      return spec
  raise ConfigError(
      f"Unknown model '{model_id}'. Available: {', '.join(s.id for s in MODELS)}"
  )


def sweep_instances(spec: ModelSpec, sizes: Optional[Sequence[int]] = None,
                    params: Optional[Params] = None) -> List[ModelInstance]:
  """Instances along an ħ sweep, ordered by decreasing ħ."""
  choices: List[GridChoice] = (
      list(spec.sweep) if not sizes else [spec.choice_for(int(N)) for N in sizes]
  )
  choices.sort(key=lambda c: -c.hbar)
  return [spec.instance(c, params) for c in choices]
