"""
Poisson-bracket relations for matrix-valued symbols.

Every relation is evaluated with exact first-order jets of random closed-form
trigonometric fields at random phase-space points, so the only error is
floating-point round-off.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Final, List, Tuple

import numpy as np

from .errors import ConfigError
from .grid import random_projector_symbol, random_trig_symbol
from .jets import Jet, identity_like, poisson
from .symbolic import SymbolicMatrix

logger: logging.Logger = logging.getLogger("semiclab")

IDENTITY_TOL: Final[float] = 1e-9
DEFAULT_DRAWS: Final[int] = 10
DEFAULT_POINTS: Final[int] = 32

RELATIONS: Final[Tuple[str, ...]] = (
    "product_rule",
    "projector_sandwich",
    "commuting_block",
    "same_projector",
    "orthogonal_projectors",
    "cross_projector",
)

Coords = List[np.ndarray]


def _commutator(a: Jet, b: Jet) -> Jet:
  return a @ b - b @ a


def _defect(left: Jet, right: Jet) -> float:
  return float(np.max(np.abs(left.value - right.value)))


@dataclass
class FieldDraw:
  """One random draw: generic fields, a scalar, a projector and a commuting field."""

  a: Jet
  b: Jet
  c: Jet
  lam: Jet
  p: Jet
  commuting: Jet


def _jet(symbol: SymbolicMatrix, coords: Coords) -> Jet:
  return symbol.jet(coords, 1)


def draw_fields(rng: np.random.Generator, d: int = 1, points: int = DEFAULT_POINTS) -> FieldDraw:
  """Random smooth fields on the 2π-periodic box, with jets at random points."""
  coords: Coords = [rng.uniform(-math.pi, math.pi, size=points) for _ in range(2 * d)]
  p: Jet = _jet(random_projector_symbol(d, rng), coords)
  eye: Jet = identity_like(p)
  # f·P + g·(Id − P) commutes with P for any scalars f, g
  f: Jet = _jet(random_trig_symbol(d, 1, rng), coords)
  g: Jet = _jet(random_trig_symbol(d, 1, rng), coords)
  commuting: Jet = f * p + g * (eye - p)
  return FieldDraw(
      a=_jet(random_trig_symbol(d, 2, rng, hermitian=False), coords),
      b=_jet(random_trig_symbol(d, 2, rng, hermitian=False), coords),
      c=_jet(random_trig_symbol(d, 2, rng, hermitian=False), coords),
      lam=_jet(random_trig_symbol(d, 1, rng), coords),
      p=p,
      commuting=commuting,
  )


def product_rule(f: FieldDraw) -> float:
  """A{B,C} − {A,B}C = {AB,C} − {A,BC}."""
  a, b, c = f.a, f.b, f.c
  left: Jet = a.truncate(0) @ poisson(b, c) - poisson(a, b) @ c.truncate(0)
  return _defect(left, poisson(a @ b, c) - poisson(a, b @ c))


def projector_sandwich(f: FieldDraw) -> float:
  """P{λ,P}P = 0."""
  p0: Jet = f.p.truncate(0)
  middle: Jet = p0 @ poisson(f.lam, f.p) @ p0
  return float(np.max(np.abs(middle.value)))


def commuting_block(f: FieldDraw) -> float:
  """P{λ,B}P = {λ,PBP} − [PBP,[P,{λ,P}]] for [B,P] = 0."""
  p, b, lam = f.p, f.commuting, f.lam
  p0: Jet = p.truncate(0)
  pbp: Jet = p @ b @ p
  left: Jet = p0 @ poisson(lam, b) @ p0
  right: Jet = poisson(lam, pbp) - _commutator(pbp.truncate(0), _commutator(p0, poisson(lam, p)))
  return _defect(left, right)


def same_projector(f: FieldDraw) -> float:
  """P({B,P} − {P,B})P = [B, P{P,P}P] for [B,P] = 0."""
  p, b = f.p, f.commuting
  p0: Jet = p.truncate(0)
  left: Jet = p0 @ (poisson(b, p) - poisson(p, b)) @ p0
  return _defect(left, _commutator(b.truncate(0), p0 @ poisson(p, p) @ p0))


def orthogonal_projectors(f: FieldDraw) -> float:
  """P_μ{P_ν,P_ν} = −{P_μ,P_ν}(1 − P_ν) and its mirror for P_μP_ν = 0."""
  p_nu: Jet = f.p
  p_mu: Jet = identity_like(p_nu) - p_nu
  eye0: Jet = identity_like(p_nu, 0)
  first: float = _defect(p_mu.truncate(0) @ poisson(p_nu, p_nu),
                         (poisson(p_mu, p_nu) @ (eye0 - p_nu.truncate(0))).scale(-1))
  second: float = _defect(poisson(p_nu, p_nu) @ p_mu.truncate(0),
                          ((eye0 - p_nu.truncate(0)) @ poisson(p_nu, p_mu)).scale(-1))
  return max(first, second)


def cross_projector(f: FieldDraw) -> float:
  """P_ν({B,P_μ} − {P_μ,B})P_ν = −[B, P_ν{P_μ,P_μ}P_ν] for B commuting with both."""
  p_nu: Jet = f.p
  p_mu: Jet = identity_like(p_nu) - p_nu
  b: Jet = f.commuting
  pn0: Jet = p_nu.truncate(0)
  left: Jet = pn0 @ (poisson(b, p_mu) - poisson(p_mu, b)) @ pn0
  right: Jet = _commutator(b.truncate(0), pn0 @ poisson(p_mu, p_mu) @ pn0).scale(-1)
  return _defect(left, right)


CHECKS: Final[Dict[str, Callable[[FieldDraw], float]]] = {
    "product_rule": product_rule,
    "projector_sandwich": projector_sandwich,
    "commuting_block": commuting_block,
    "same_projector": same_projector,
    "orthogonal_projectors": orthogonal_projectors,
    "cross_projector": cross_projector,
}


@dataclass
class IdentityReport:
  """Worst defect of each relation over all draws."""

  defects: Dict[str, float] = field(default_factory=dict)
  draws: int = 0
  tol: float = IDENTITY_TOL

  @property
  def worst(self) -> float:
    return max(self.defects.values()) if self.defects else 0.0

  @property
  def passed(self) -> bool:
    return all(v <= self.tol for v in self.defects.values())

  def failures(self) -> List[str]:
    return [name for name, v in self.defects.items() if v > self.tol]


def identity_battery(rng: np.random.Generator, draws: int = DEFAULT_DRAWS, d: int = 1,
                     points: int = DEFAULT_POINTS, tol: float = IDENTITY_TOL) -> IdentityReport:
  """Evaluate all relations on independent random draws."""
  if draws < 1:
    raise ConfigError(f"Number of draws must be positive, got {draws}")
  if d not in (1, 2):
    raise ConfigError(f"Phase-space dimension d must be 1 or 2, got {d}")
  report: IdentityReport = IdentityReport({name: 0.0 for name in RELATIONS}, draws, tol)
  for i in range(draws):
    fields_: FieldDraw = draw_fields(rng, d, points)
    for name, check in CHECKS.items():
      report.defects[name] = max(report.defects[name], check(fields_))
    logger.debug(f"Identity draw {i + 1}/{draws}: worst so far {report.worst:.3e}")
  for name in report.failures():
    logger.warning(f"Relation {name} violated: defect {report.defects[name]:.3e} > {tol:.1e}")
  return report
