"""
Closed-form matrix symbols built with sympy.

Model Hamiltonians and observables are sympy matrices in the phase-space
variables x1..xd, xi1..xid. They are lambdified entry by entry, so values and
exact partial derivatives can be sampled at grid nodes, half-grid midpoints or
along trajectories.
"""

import logging
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np
import sympy

from .errors import ConfigError
from .jets import Jet, MultiIndex

logger: logging.Logger = logging.getLogger("semiclab")

Coords = Sequence[np.ndarray]


def phase_space_symbols(d: int) -> Tuple[sympy.Symbol, ...]:
  """The real symbols (x1..xd, xi1..xid)."""
  xs = sympy.symbols(" ".join(f"x{l + 1}" for l in range(d)), real=True)
  xis = sympy.symbols(" ".join(f"xi{l + 1}" for l in range(d)), real=True)
  if d == 1:
    return (xs, xis)
  return tuple(xs) + tuple(xis)


class SymbolicMatrix:
  """An r × c matrix of sympy expressions on T*R^d."""

  def __init__(self, expr: Union[sympy.Matrix, Sequence], d: int):
    if d not in (1, 2):
      raise ConfigError(f"Phase-space dimension d must be 1 or 2, got {d}")
    self.expr: sympy.Matrix = sympy.Matrix(expr)
    self.d: int = d
    self.variables: Tuple[sympy.Symbol, ...] = phase_space_symbols(d)
    unknown = self.expr.free_symbols - set(self.variables)
    if unknown:
      raise ConfigError(f"Symbol depends on unbound parameters: {sorted(map(str, unknown))}")
    self._compiled: Dict[MultiIndex, List[List[Callable]]] = {}

  @classmethod
  def scalar(cls, expr: sympy.Expr, d: int) -> "SymbolicMatrix":
    return cls(sympy.Matrix([[expr]]), d)

  @property
  def shape(self) -> Tuple[int, int]:
    return tuple(self.expr.shape)  # type: ignore[return-value]

  @property
  def is_hermitian(self) -> bool:
    return bool((self.expr - self.expr.H).applyfunc(sympy.simplify).is_zero_matrix)

  def __add__(self, other: "SymbolicMatrix") -> "SymbolicMatrix":
    return SymbolicMatrix(self.expr + other.expr, self.d)

  def __sub__(self, other: "SymbolicMatrix") -> "SymbolicMatrix":
    return SymbolicMatrix(self.expr - other.expr, self.d)

  def __matmul__(self, other: "SymbolicMatrix") -> "SymbolicMatrix":
    return SymbolicMatrix(self.expr * other.expr, self.d)

  def scale(self, factor: Union[complex, sympy.Expr]) -> "SymbolicMatrix":
    return SymbolicMatrix(self.expr * sympy.sympify(factor), self.d)

  def dagger(self) -> "SymbolicMatrix":
    return SymbolicMatrix(self.expr.H, self.d)

  def subs(self, mapping: Dict) -> "SymbolicMatrix":
    return SymbolicMatrix(self.expr.subs(mapping), self.d)

  def _entries(self, alpha: MultiIndex) -> List[List[Callable]]:
    alpha = tuple(alpha)
    if alpha not in self._compiled:
      diff_spec: List = []
      for var, count in zip(self.variables, alpha):
        diff_spec.extend([var] * count)
      rows: List[List[Callable]] = []
      for r in range(self.shape[0]):
        row: List[Callable] = []
        for c in range(self.shape[1]):
          entry: sympy.Expr = self.expr[r, c]
          if diff_spec:
            entry = sympy.diff(entry, *diff_spec)
          row.append(sympy.lambdify(self.variables, entry, modules="numpy"))
        rows.append(row)
      self._compiled[alpha] = rows
    return self._compiled[alpha]

  def evaluate(self, coords: Coords, alpha: Union[MultiIndex, None] = None) -> np.ndarray:
    """Values (or ∂^α) at broadcastable coordinate arrays; shape batch + (r, c)."""
    if len(coords) != 2 * self.d:
      raise ConfigError(f"Expected {2 * self.d} coordinate arrays, got {len(coords)}")
    alpha = tuple(alpha) if alpha is not None else (0, ) * (2 * self.d)
    arrays: List[np.ndarray] = [np.asarray(c, dtype=float) for c in coords]
    batch: Tuple[int, ...] = np.broadcast_shapes(*(a.shape for a in arrays))
    out: np.ndarray = np.empty(batch + self.shape, dtype=complex)
    for r, row in enumerate(self._entries(alpha)):
      for c, fn in enumerate(row):
        out[..., r, c] = np.broadcast_to(np.asarray(fn(*arrays), dtype=complex), batch)
    return out

  def jet(self, coords: Coords, order: int) -> Jet:
    """Exact Taylor jet of the given order at the coordinate batch."""
    return Jet.from_derivatives(lambda alpha: self.evaluate(coords, alpha), 2 * self.d, order)

  def __repr__(self) -> str:
    return f"SymbolicMatrix(d={self.d}, shape={self.shape})"
