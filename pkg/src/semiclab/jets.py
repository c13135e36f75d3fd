"""
Truncated Taylor jets of matrix-valued phase-space fields.

A jet of order K at a batch of points stores the Taylor coefficients
c_α = ∂^α F / α! for every multi-index |α| ≤ K in the 2d phase-space
variables, ordered x_1..x_d, ξ_1..ξ_d. Products, inverses, derivatives and the
Moyal expansion act exactly on these coefficients, so symbol calculus never
re-differentiates numerically.
"""

import itertools
import math
from collections import Counter
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError

MultiIndex = Tuple[int, ...]
Scalar = Union[complex, float, np.ndarray]


@lru_cache(maxsize=None)
def monomials(nvars: int, order: int) -> Tuple[MultiIndex, ...]:
  """All multi-indices with |α| ≤ order, graded by total degree."""
  out: List[MultiIndex] = []
  for degree in range(order + 1):
    for combo in itertools.combinations_with_replacement(range(nvars), degree):
      alpha: List[int] = [0] * nvars
      for var in combo:
        alpha[var] += 1
      out.append(tuple(alpha))
  return tuple(out)


@lru_cache(maxsize=None)
def _index(nvars: int, order: int) -> Dict[MultiIndex, int]:
  return {alpha: i for i, alpha in enumerate(monomials(nvars, order))}


@lru_cache(maxsize=None)
def _product_table(nvars: int, order: int) -> Tuple[Tuple[int, Tuple[Tuple[int, int], ...]], ...]:
  """For each target γ, the pairs (α, β) with α + β = γ."""
  mons: Tuple[MultiIndex, ...] = monomials(nvars, order)
  index: Dict[MultiIndex, int] = _index(nvars, order)
  table: List[Tuple[int, Tuple[Tuple[int, int], ...]]] = []
  for k, gamma in enumerate(mons):
    pairs: List[Tuple[int, int]] = []
    for i, alpha in enumerate(mons):
      beta: MultiIndex = tuple(g - a for g, a in zip(gamma, alpha))
      if min(beta) >= 0:
        pairs.append((i, index[beta]))
    table.append((k, tuple(pairs)))
  return tuple(table)


@lru_cache(maxsize=None)
def moyal_terms(d: int, j: int) -> Tuple[Tuple[MultiIndex, MultiIndex, complex], ...]:
  """
  Expansion of (i/2)^j/j! (Σ_l ∂x_l^A ∂ξ_l^B − ∂ξ_l^A ∂x_l^B)^j into
  (α, β, coefficient) triples: derivatives α act on the left factor,
  β on the right one.
  """
  choices: List[Tuple[int, int, int]] = []
  for l in range(d):
    choices.append((+1, l, d + l))
    choices.append((-1, d + l, l))
  counts: Counter = Counter()
  for picks in itertools.product(choices, repeat=j):
    alpha: List[int] = [0] * (2 * d)
    beta: List[int] = [0] * (2 * d)
    sign: int = 1
    for s, va, vb in picks:
      sign *= s
      alpha[va] += 1
      beta[vb] += 1
    counts[(tuple(alpha), tuple(beta))] += sign
  prefactor: complex = (0.5j)**j / math.factorial(j)
  return tuple((a, b, prefactor * c) for (a, b), c in sorted(counts.items()) if c != 0)


def _factorial(alpha: MultiIndex) -> int:
  return math.prod(math.factorial(a) for a in alpha)


class Jet:
  """Taylor data of an (r × c) matrix field at a batch of points."""

  __slots__ = ("coeffs", "nvars", "order")

  def __init__(self, coeffs: np.ndarray, nvars: int, order: int):
    coeffs = np.asarray(coeffs, dtype=complex)
    expected: int = len(monomials(nvars, order))
    if coeffs.ndim < 3 or coeffs.shape[0] != expected:
      raise ConfigError(
          f"Jet of order {order} in {nvars} variables needs {expected} coefficients, "
          f"got array of shape {coeffs.shape}"
      )
    self.coeffs: np.ndarray = coeffs
    self.nvars: int = nvars
    self.order: int = order

  # ---------------------------------------------------------------- builders
  @classmethod
  def constant(cls, value: np.ndarray, nvars: int, order: int) -> "Jet":
    """Jet of a field that is constant near every point of the batch."""
    value = np.asarray(value, dtype=complex)
    coeffs: np.ndarray = np.zeros((len(monomials(nvars, order)), ) + value.shape, dtype=complex)
    coeffs[0] = value
    return cls(coeffs, nvars, order)

  @classmethod
  def from_derivatives(
      cls,
      derivative: Callable[[MultiIndex], np.ndarray],
      nvars: int,
      order: int,
  ) -> "Jet":
    """Build a jet from a callable returning ∂^α F on the batch."""
    mons: Tuple[MultiIndex, ...] = monomials(nvars, order)
    first: np.ndarray = np.asarray(derivative(mons[0]), dtype=complex)
    coeffs: np.ndarray = np.empty((len(mons), ) + first.shape, dtype=complex)
    coeffs[0] = first
    for i, alpha in enumerate(mons[1:], start=1):
      coeffs[i] = np.asarray(derivative(alpha), dtype=complex) / _factorial(alpha)
    return cls(coeffs, nvars, order)

  # ------------------------------------------------------------- properties
  @property
  def value(self) -> np.ndarray:
    return self.coeffs[0]

  @property
  def batch_shape(self) -> Tuple[int, ...]:
    return tuple(self.coeffs.shape[1:-2])

  @property
  def shape(self) -> Tuple[int, int]:
    return (self.coeffs.shape[-2], self.coeffs.shape[-1])

  def coefficient(self, alpha: MultiIndex) -> np.ndarray:
    """Taylor coefficient for multi-index α."""
    return self.coeffs[_index(self.nvars, self.order)[tuple(alpha)]]

  def partial(self, alpha: MultiIndex) -> np.ndarray:
    """Value of ∂^α F on the batch."""
    return self.coefficient(alpha) * _factorial(tuple(alpha))

  # -------------------------------------------------------------- algebra
  def truncate(self, order: int) -> "Jet":
    if order > self.order:
      raise ConfigError(f"Cannot raise jet order from {self.order} to {order}")
    if order == self.order:
      return self
    return Jet(self.coeffs[:len(monomials(self.nvars, order))], self.nvars, order)

  def _aligned(self, other: "Jet") -> Tuple[np.ndarray, np.ndarray, int]:
    if other.nvars != self.nvars:
      raise ConfigError(f"Jets over {self.nvars} and {other.nvars} variables do not mix")
    order: int = min(self.order, other.order)
    m: int = len(monomials(self.nvars, order))
    return self.coeffs[:m], other.coeffs[:m], order

  def __add__(self, other: "Jet") -> "Jet":
    a, b, order = self._aligned(other)
    return Jet(a + b, self.nvars, order)

  def __sub__(self, other: "Jet") -> "Jet":
    a, b, order = self._aligned(other)
    return Jet(a - b, self.nvars, order)

  def __neg__(self) -> "Jet":
    return Jet(-self.coeffs, self.nvars, self.order)

  def scale(self, factor: Scalar) -> "Jet":
    """Multiply by a constant (or a per-point constant of shape batch)."""
    f: np.ndarray = np.asarray(factor, dtype=complex)
    if f.ndim:
      f = f[..., None, None]
    return Jet(self.coeffs * f, self.nvars, self.order)

  def shift(self, value: Scalar) -> "Jet":
    """Add value·Id (value constant or per point) to the zeroth coefficient."""
    coeffs: np.ndarray = self.coeffs.copy()
    v: np.ndarray = np.asarray(value, dtype=complex)
    if v.ndim:
      v = v[..., None, None]
    coeffs[0] = coeffs[0] + v * np.eye(self.shape[0], self.shape[1])
    return Jet(coeffs, self.nvars, self.order)

  def _cauchy(self, other: "Jet", op: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "Jet":
    if other.nvars != self.nvars:
      raise ConfigError(f"Jets over {self.nvars} and {other.nvars} variables do not mix")
    order: int = min(self.order, other.order)
    out: Optional[np.ndarray] = None
    for k, pairs in _product_table(self.nvars, order):
      acc: np.ndarray = op(self.coeffs[pairs[0][0]], other.coeffs[pairs[0][1]])
      for i, j in pairs[1:]:
        acc = acc + op(self.coeffs[i], other.coeffs[j])
      if out is None:
        out = np.empty((len(monomials(self.nvars, order)), ) + acc.shape, dtype=complex)
      out[k] = acc
    return Jet(out, self.nvars, order)  # type: ignore[arg-type]

  def __matmul__(self, other: "Jet") -> "Jet":
    return self._cauchy(other, np.matmul)

  def __mul__(self, other: "Jet") -> "Jet":
    """Entrywise (broadcasting) product, used for scalar jets times matrix jets."""
    return self._cauchy(other, np.multiply)

  def dagger(self) -> "Jet":
    return Jet(np.conj(np.swapaxes(self.coeffs, -1, -2)), self.nvars, self.order)

  def trace(self) -> "Jet":
    """Scalar (1 × 1) jet of the matrix trace."""
    tr: np.ndarray = np.trace(self.coeffs, axis1=-2, axis2=-1)
    return Jet(tr[..., None, None], self.nvars, self.order)

  def derivative(self, alpha: MultiIndex) -> "Jet":
    """Jet of ∂^α F, one order lower per derivative taken."""
    alpha = tuple(alpha)
    new_order: int = self.order - sum(alpha)
    if new_order < 0:
      raise ConfigError(f"Derivative of total order {sum(alpha)} exceeds jet order {self.order}")
    index: Dict[MultiIndex, int] = _index(self.nvars, self.order)
    mons: Tuple[MultiIndex, ...] = monomials(self.nvars, new_order)
    coeffs: np.ndarray = np.empty((len(mons), ) + self.coeffs.shape[1:], dtype=complex)
    for i, beta in enumerate(mons):
      source: MultiIndex = tuple(b + a for b, a in zip(beta, alpha))
      factor: float = _factorial(source) / _factorial(beta)
      coeffs[i] = self.coeffs[index[source]] * factor
    return Jet(coeffs, self.nvars, new_order)

  def inverse(self) -> "Jet":
    """Jet of the pointwise matrix inverse."""
    inv0: np.ndarray = np.linalg.inv(self.coeffs[0])
    out: np.ndarray = np.empty_like(self.coeffs)
    out[0] = inv0
    for k, pairs in _product_table(self.nvars, self.order)[1:]:
      acc: Optional[np.ndarray] = None
      for i, j in pairs:
        if i == 0:
          continue
        term: np.ndarray = self.coeffs[i] @ out[j]
        acc = term if acc is None else acc + term
      out[k] = -inv0 @ acc
    return Jet(out, self.nvars, self.order)

  def reciprocal(self) -> "Jet":
    """Jet of 1/f for a scalar (1 × 1) jet."""
    return self.inverse()


def zero_like(jet: Jet, order: Optional[int] = None) -> Jet:
  """Zero jet with the batch and matrix shape of another jet."""
  o: int = jet.order if order is None else order
  return Jet(np.zeros((len(monomials(jet.nvars, o)), ) + jet.coeffs.shape[1:], dtype=complex),
             jet.nvars, o)


def identity_like(jet: Jet, order: Optional[int] = None) -> Jet:
  """Identity-matrix jet with the batch shape of another jet."""
  o: int = jet.order if order is None else order
  eye: np.ndarray = np.broadcast_to(np.eye(jet.shape[0], dtype=complex),
                                    jet.batch_shape + (jet.shape[0], jet.shape[0]))
  return Jet.constant(eye, jet.nvars, o)


def moyal_term(a: Jet, b: Jet, j: int) -> Jet:
  """The ħ^j term of the Moyal product of two fixed symbols."""
  d: int = a.nvars // 2
  order: int = min(a.order, b.order) - j
  if order < 0:
    raise ConfigError(f"Moyal term of order {j} needs jets of order ≥ {j}")
  if j == 0:
    return (a @ b).truncate(order)
  result: Optional[Jet] = None
  for alpha, beta, coef in moyal_terms(d, j):
    term: Jet = (a.derivative(alpha).truncate(order) @ b.derivative(beta).truncate(order)).scale(coef)
    result = term if result is None else result + term
  return result  # type: ignore[return-value]


def moyal_series(left: Sequence[Jet], right: Sequence[Jet], order: int) -> List[Optional[Jet]]:
  """
  Coefficients C_k, k ≤ order, of (Σ ħ^a A_a) # (Σ ħ^b B_b).

  Entries whose inputs lack the derivative order needed are None.
  """
  out: List[Optional[Jet]] = []
  for k in range(order + 1):
    acc: Optional[Jet] = None
    for a_idx, a in enumerate(left):
      for b_idx, b in enumerate(right):
        j: int = k - a_idx - b_idx
        if j < 0 or min(a.order, b.order) < j:
          continue
        term: Jet = moyal_term(a, b, j)
        acc = term if acc is None else acc + term
    out.append(acc)
  return out


def poisson(a: Jet, b: Jet) -> Jet:
  """{A,B} = Σ_l ∂ξ_l A ∂x_l B − ∂x_l A ∂ξ_l B, one order lower."""
  d: int = a.nvars // 2
  order: int = min(a.order, b.order) - 1
  result: Optional[Jet] = None
  for l in range(d):
    ex: MultiIndex = tuple(1 if v == l else 0 for v in range(2 * d))
    exi: MultiIndex = tuple(1 if v == d + l else 0 for v in range(2 * d))
    da_xi: Jet = a.derivative(exi).truncate(order)
    da_x: Jet = a.derivative(ex).truncate(order)
    db_xi: Jet = b.derivative(exi).truncate(order)
    db_x: Jet = b.derivative(ex).truncate(order)
    op: Callable[[Jet, Jet], Jet] = (lambda p, q: p @ q
                                     ) if a.shape[1] == b.shape[0] else (lambda p, q: p * q)
    term: Jet = op(da_xi, db_x) - op(da_x, db_xi)
    result = term if result is None else result + term
  return result  # type: ignore[return-value]
