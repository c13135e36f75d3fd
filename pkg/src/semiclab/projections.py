"""
Eigenbundles of the principal symbol and semiclassical projections.

Projection coefficients are computed on jets, so the same pipeline runs on the
grid nodes and at arbitrary off-grid points (half-grid midpoints for
quantization, trajectory points for transport). Two independent methods are
available: the contour integral of the parametrix and the order-by-order
recursion of the projection conditions.
"""

import functools
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Final, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    ClusterError,
    ConfigError,
    ContourError,
    GapError,
    GaugeObstructionError,
    describe_node,
)
from .grid import GridFunction, JetSource, PhaseGrid
from .jets import Jet, identity_like, moyal_term, zero_like
from .utils import dagger, hermitian_part
from .weyl import DiscretizedOperator, MatrixSymbol, commutator_sharp, moyal_product

logger: logging.Logger = logging.getLogger("semiclab")

GAP_TOL: Final[float] = 1e-6
CLUSTER_TOL: Final[float] = 1e-8
CONTOUR_NODES: Final[int] = 64
CONTOUR_RADIUS: Final[float] = 0.45
OVERLAP_MIN: Final[float] = 0.1
CLUSTER_RADIUS_MAX: Final[float] = 0.25
MAX_RECURSION_ORDER: Final[int] = 2
MAX_RIESZ_ORDER: Final[int] = 4

BUNDLE_MAGIC: Final[bytes] = b"SCLB"
BUNDLE_VERSION: Final[int] = 1

Coords = Sequence[np.ndarray]


# --------------------------------------------------------------------------
# Pointwise eigen-decomposition
# --------------------------------------------------------------------------


@dataclass
class Eigensystem:
  """Clustered eigen-data of a batch of hermitian matrices."""

  eigenvalues: np.ndarray  # batch + (l,)
  projectors: np.ndarray  # (l,) + batch + (n, n)
  isometries: List[np.ndarray]  # batch + (n, k_ν)
  gaps: np.ndarray  # batch

  def local_gap(self, nu: int) -> np.ndarray:
    """min over μ ≠ ν of |λ_ν − λ_μ| per point."""
    lams: np.ndarray = self.eigenvalues
    l: int = lams.shape[-1]
    gap: np.ndarray = np.full(lams.shape[:-1], np.inf)
    if nu > 0:
      gap = np.minimum(gap, lams[..., nu] - lams[..., nu - 1])
    if nu < l - 1:
      gap = np.minimum(gap, lams[..., nu + 1] - lams[..., nu])
    return gap


def _node_text(coords: Optional[Coords], batch: Tuple[int, ...], flat: int) -> str:
  index: Tuple[int, ...] = tuple(int(i) for i in np.unravel_index(flat, batch)) if batch else ()
  if coords is None:
    return f"point {index}"
  point: List[float] = [float(np.broadcast_to(c, batch)[index]) for c in coords]
  return describe_node(point, index)


def check_multiplicities(multiplicities: Sequence[int], n: int) -> Tuple[int, ...]:
  mult: Tuple[int, ...] = tuple(int(k) for k in multiplicities)
  if not mult or min(mult) < 1:
    raise ConfigError(f"Multiplicities must be positive integers, got {multiplicities}")
  if sum(mult) != n:
    raise ConfigError(f"Multiplicities {mult} do not add up to the matrix size {n}")
  return mult


def cluster_eigh(
    h: np.ndarray,
    multiplicities: Sequence[int],
    gap_tol: float = GAP_TOL,
    coords: Optional[Coords] = None,
) -> Eigensystem:
  """Eigen-decompose hermitian matrices and group eigenvalues by declared multiplicities."""
  matrices: np.ndarray = hermitian_part(np.asarray(h, dtype=complex))
  n: int = matrices.shape[-1]
  mult: Tuple[int, ...] = check_multiplicities(multiplicities, n)
  batch: Tuple[int, ...] = matrices.shape[:-2]
  w, v = np.linalg.eigh(matrices)

  lams: List[np.ndarray] = []
  projectors: List[np.ndarray] = []
  isometries: List[np.ndarray] = []
  offset: int = 0
  for nu, k in enumerate(mult):
    block: np.ndarray = w[..., offset:offset + k]
    spread: np.ndarray = block.max(axis=-1) - block.min(axis=-1)
    tolerance: np.ndarray = CLUSTER_TOL * np.maximum(1.0, np.abs(block).max(axis=-1))
    if np.any(spread > tolerance):
      flat: int = int(np.argmax(spread - tolerance))
      raise GapError(
          f"Branch {nu} does not have multiplicity {k}: eigenvalue spread "
          f"{float(spread.ravel()[flat]):.3e} at {_node_text(coords, batch, flat)}"
      )
    iso: np.ndarray = v[..., :, offset:offset + k]
    lams.append(block.mean(axis=-1))
    isometries.append(iso)
    projectors.append(iso @ dagger(iso))
    offset += k

  eigenvalues: np.ndarray = np.stack(lams, axis=-1)
  gaps: np.ndarray = np.full(batch, np.inf)
  if len(mult) > 1:
    gaps = np.min(np.diff(eigenvalues, axis=-1), axis=-1)
    if np.any(gaps < gap_tol):
      flat = int(np.argmin(gaps))
      raise GapError(
          f"Eigenvalue gap {float(gaps.ravel()[flat]):.3e} below gap_tol={gap_tol:g} at "
          f"{_node_text(coords, batch, flat)} (branches must stay separated)"
      )
  return Eigensystem(eigenvalues, np.stack(projectors), isometries, gaps)


# --------------------------------------------------------------------------
# Jet pipelines
# --------------------------------------------------------------------------


def _contour(
    center: np.ndarray,
    radius: np.ndarray,
    integrand: Callable[[np.ndarray], List[Jet]],
    nodes: int,
) -> List[Jet]:
  """−(2πi)^{-1} ∮ f(z) dz on circles z = c + ρe^{iφ}, trapezoid rule."""
  total: Optional[List[Jet]] = None
  for k in range(nodes):
    phase: complex = complex(np.exp(2j * math.pi * k / nodes))
    values: List[Jet] = integrand(center + radius * phase)
    weight: np.ndarray = -radius * phase / nodes
    scaled: List[Jet] = [v.scale(weight) for v in values]
    total = scaled if total is None else [a + b for a, b in zip(total, scaled)]
  return total  # type: ignore[return-value]


def eigen_jets(
    h0: Jet,
    multiplicities: Sequence[int],
    gap_tol: float = GAP_TOL,
    coords: Optional[Coords] = None,
    nodes: int = CONTOUR_NODES,
) -> Tuple[List[Jet], List[Jet], Eigensystem]:
  """Jets of the eigenvalue functions λ_ν and projectors P_{ν,0} of H₀."""
  system: Eigensystem = cluster_eigh(h0.value, multiplicities, gap_tol, coords)
  mult: Tuple[int, ...] = tuple(multiplicities)
  if len(mult) == 1:
    return [h0.trace().scale(1.0 / h0.shape[0])], [identity_like(h0)], system

  projectors: List[Jet] = []
  for nu in range(len(mult)):
    radius: np.ndarray = CONTOUR_RADIUS * system.local_gap(nu)
    projectors.append(
        _contour(system.eigenvalues[..., nu], radius, lambda z: [h0.shift(-z).inverse()], nodes)[0]
    )
  lams: List[Jet] = [(p @ h0).trace().scale(1.0 / k) for p, k in zip(projectors, mult)]
  return lams, projectors, system


def first_order_jets(h0: Jet, system: Eigensystem,
                     multiplicities: Sequence[int]) -> Tuple[List[Jet], List[Jet]]:
  """Order-1 jets of λ_ν and P_{ν,0} by first-order perturbation theory."""
  nvars: int = h0.nvars
  mult: Tuple[int, ...] = tuple(multiplicities)
  l: int = len(mult)
  grads: List[np.ndarray] = [
      h0.partial(tuple(1 if u == v else 0 for u in range(nvars))) for v in range(nvars)
  ]
  lam_jets: List[Jet] = []
  proj_jets: List[Jet] = []
  for nu in range(l):
    p: np.ndarray = system.projectors[nu]
    lam: np.ndarray = system.eigenvalues[..., nu]
    lam_coeffs: np.ndarray = np.empty((nvars + 1, ) + lam.shape + (1, 1), dtype=complex)
    p_coeffs: np.ndarray = np.empty((nvars + 1, ) + p.shape, dtype=complex)
    lam_coeffs[0] = lam[..., None, None]
    p_coeffs[0] = p
    for v, dh in enumerate(grads):
      lam_coeffs[v + 1] = (np.trace(p @ dh, axis1=-2, axis2=-1) / mult[nu])[..., None, None]
      dp: np.ndarray = np.zeros_like(p)
      for mu in range(l):
        if mu == nu:
          continue
        q: np.ndarray = system.projectors[mu]
        diff: np.ndarray = (lam - system.eigenvalues[..., mu])[..., None, None]
        dp = dp + (p @ dh @ q + q @ dh @ p) / diff
      p_coeffs[v + 1] = dp
    lam_jets.append(Jet(lam_coeffs, nvars, 1))
    proj_jets.append(Jet(p_coeffs, nvars, 1))
  return lam_jets, proj_jets


def _shifted(h_jets: Sequence[Jet], a: int, z: np.ndarray) -> Optional[Jet]:
  if a >= len(h_jets):
    return None
  return h_jets[a].shift(-z) if a == 0 else h_jets[a]


def parametrix_jets(h_jets: Sequence[Jet], z: Union[complex, np.ndarray], J: int,
                    order: int = 0) -> List[Jet]:
  """Jets of Q_0..Q_J with (H − z) # Q = 1 through order J."""
  zz: np.ndarray = np.asarray(z, dtype=complex)
  top: int = order + J
  q0: Jet = h_jets[0].truncate(top).shift(-zz).inverse()
  qs: List[Jet] = [q0]
  for j in range(1, J + 1):
    target: int = top - j
    acc: Optional[Jet] = None
    for a in range(j + 1):
      left: Optional[Jet] = _shifted(h_jets, a, zz)
      if left is None:
        continue
      for b in range(j - a + 1):
        if b == j:
          continue
        c: int = j - a - b
        term: Jet = moyal_term(left.truncate(top - a), qs[b], c).truncate(target)
        acc = term if acc is None else acc + term
    qs.append(-(q0.truncate(target) @ acc) if acc is not None else zero_like(q0, target))
  return [q.truncate(order) for q in qs]


def riesz_jets(
    h_jets: Sequence[Jet],
    multiplicities: Sequence[int],
    nu: int,
    J: int,
    order: int = 0,
    gap_tol: float = GAP_TOL,
    coords: Optional[Coords] = None,
    nodes: int = CONTOUR_NODES,
    radius_factor: float = CONTOUR_RADIUS,
) -> List[Jet]:
  """P_{ν,0..J} as contour integrals of the parametrix around λ_ν."""
  if not 0 < radius_factor < 0.5:
    raise ContourError(
        f"Contour radius factor {radius_factor} would reach a neighbouring branch (must be < 0.5)"
    )
  system: Eigensystem = cluster_eigh(h_jets[0].value, multiplicities, gap_tol, coords)
  if len(tuple(multiplicities)) == 1:
    eye: Jet = identity_like(h_jets[0], order)
    return [eye] + [zero_like(eye) for _ in range(J)]
  radius: np.ndarray = radius_factor * system.local_gap(nu)
  return _contour(
      system.eigenvalues[..., nu], radius, lambda z: parametrix_jets(h_jets, z, J, order), nodes
  )


def recursive_jets(
    h_jets: Sequence[Jet],
    multiplicities: Sequence[int],
    nu: int,
    J: int,
    order: int = 0,
    gap_tol: float = GAP_TOL,
    coords: Optional[Coords] = None,
) -> List[Jet]:
  """P_{ν,0..J} from the projection and commutation conditions, order by order."""
  top: int = order + J
  lams, p0, _ = eigen_jets(h_jets[0].truncate(top), multiplicities, gap_tol, coords)
  l: int = len(p0)
  ps: List[Jet] = [p0[nu]]
  for j in range(1, J + 1):
    target: int = top - j
    f: Optional[Jet] = None
    g: Optional[Jet] = None
    for a in range(j):
      for b in range(j - a + 1):
        c: int = j - a - b
        if b < j:
          term: Jet = moyal_term(ps[a], ps[b], c).truncate(target)
          f = term if f is None else f + term
        if b < len(h_jets):
          h_b: Jet = h_jets[b].truncate(top - b)
          comm: Jet = (moyal_term(ps[a], h_b, c) - moyal_term(h_b, ps[a], c)).truncate(target)
          g = comm if g is None else g + comm
    projs: List[Jet] = [p.truncate(target) for p in p0]
    f = f if f is not None else zero_like(projs[0])
    g = g if g is not None else zero_like(projs[0])
    pj: Jet = -(projs[nu] @ f @ projs[nu])
    for alpha in range(l):
      if alpha != nu:
        pj = pj + projs[alpha] @ f @ projs[alpha]
      for beta in range(l):
        if beta == alpha:
          continue
        inverse: Jet = (lams[alpha] - lams[beta]).truncate(target).reciprocal()
        pj = pj + inverse * (projs[alpha] @ g @ projs[beta])
    ps.append(pj)
  return [p.truncate(order) for p in ps]


# --------------------------------------------------------------------------
# Grid-level API
# --------------------------------------------------------------------------


def symbol_jets(symbol: MatrixSymbol, orders: Sequence[int], coords: Optional[Coords] = None) -> List[Jet]:
  """Jets of the coefficients of a symbol, at the nodes or at given points."""
  out: List[Jet] = []
  for a, o in enumerate(orders):
    coef: GridFunction = symbol.coefficient(a)
    out.append(coef.jet_of(o) if coords is None else coef.jet_at(coords, o))
  return out


def _sourced(symbol: MatrixSymbol) -> bool:
  return all(c.source is not None and hasattr(c.source, "jet") for c in symbol.coefficients)


@dataclass
class EigenBundle:
  """Eigenvalue branches, projectors and isometries of H₀ over the grid."""

  hamiltonian: GridFunction
  multiplicities: Tuple[int, ...]
  eigenvalues: List[GridFunction]
  projectors: List[GridFunction]
  isometries: List[GridFunction]
  gap: float
  gap_tol: float = GAP_TOL
  gauge_fixed: bool = False

  @property
  def grid(self) -> PhaseGrid:
    return self.hamiltonian.grid

  @property
  def l(self) -> int:
    return len(self.multiplicities)

  @property
  def n(self) -> int:
    return self.hamiltonian.n

  def k(self, nu: int) -> int:
    return self.multiplicities[nu]

  def at(self, coords: Coords) -> Eigensystem:
    """Clustered eigen-data at arbitrary points."""
    return cluster_eigh(self.hamiltonian.evaluate_at(coords), self.multiplicities, self.gap_tol,
                        coords)

  def jets_at(self, coords: Coords, order: int) -> Tuple[List[Jet], List[Jet], Eigensystem]:
    """Exact jets of λ_ν and P_{ν,0} at arbitrary points."""
    h0: Jet = self.hamiltonian.jet_at(coords, order)
    return eigen_jets(h0, self.multiplicities, self.gap_tol, coords)

  def gradient_jets(self, coords: Coords) -> Tuple[List[Jet], List[Jet], Eigensystem]:
    """Order-1 jets by perturbation theory; cheaper than jets_at for trajectories."""
    h0: Jet = self.hamiltonian.jet_at(coords, 1)
    system: Eigensystem = cluster_eigh(h0.value, self.multiplicities, self.gap_tol, coords)
    lams, projs = first_order_jets(h0, system, self.multiplicities)
    return lams, projs, system

  def projector_symbol(self, nu: int) -> MatrixSymbol:
    return MatrixSymbol([self.projectors[nu]])


def _eigen_component(h0: GridFunction, multiplicities: Tuple[int, ...], gap_tol: float, which: str,
                     nu: int, coords: Coords, order: int) -> Jet:
  lams, projs, _ = eigen_jets(h0.jet_at(coords, order), multiplicities, gap_tol, coords)
  return lams[nu] if which == "lambda" else projs[nu]


def eigendecompose(
    h0: GridFunction, multiplicities: Sequence[int], gap_tol: float = GAP_TOL
) -> EigenBundle:
  """Pointwise eigen-decomposition of the principal symbol, branches ascending."""
  grid: PhaseGrid = h0.grid
  mult: Tuple[int, ...] = check_multiplicities(multiplicities, h0.n)
  system: Eigensystem = cluster_eigh(h0.values, mult, gap_tol, grid.mesh())
  sourced: bool = h0.source is not None and hasattr(h0.source, "jet")

  eigenvalues: List[GridFunction] = []
  projectors: List[GridFunction] = []
  isometries: List[GridFunction] = []
  for nu in range(len(mult)):
    lam_source: Optional[JetSource] = None
    proj_source: Optional[JetSource] = None
    if sourced:
      lam_source = JetSource(functools.partial(_eigen_component, h0, mult, gap_tol, "lambda", nu))
      proj_source = JetSource(functools.partial(_eigen_component, h0, mult, gap_tol, "projector", nu))
    eigenvalues.append(
        GridFunction(grid, system.eigenvalues[..., nu], hermitian=True, source=lam_source)
    )
    projectors.append(GridFunction(grid, system.projectors[nu], hermitian=True, source=proj_source))
    isometries.append(GridFunction(grid, system.isometries[nu]))

  gap: float = float(np.min(system.gaps)) if len(mult) > 1 else math.inf
  logger.debug(f"Eigendecomposition: {len(mult)} branches, multiplicities {mult}, gap {gap:.4g}")
  return EigenBundle(h0, mult, eigenvalues, projectors, isometries, gap, gap_tol)


@dataclass
class SemiclassicalProjection:
  """P_ν ~ Σ ħ^j P_{ν,j} computed by one of two methods."""

  symbol: MatrixSymbol
  branch: int
  method: str

  @property
  def order(self) -> int:
    return self.symbol.truncation_order


def _pipeline_component(method: str, hamiltonian: MatrixSymbol, multiplicities: Tuple[int, ...],
                        nu: int, J: int, gap_tol: float, j: int, coords: Coords, order: int) -> Jet:
  h_jets: List[Jet] = symbol_jets(hamiltonian, [order + J - a for a in range(J + 1)], coords)
  if method == "riesz":
    return riesz_jets(h_jets, multiplicities, nu, J, order, gap_tol, coords)[j]
  return recursive_jets(h_jets, multiplicities, nu, J, order, gap_tol, coords)[j]


def _projection(method: str, hamiltonian: MatrixSymbol, multiplicities: Sequence[int], nu: int,
                J: int, gap_tol: float) -> SemiclassicalProjection:
  grid: PhaseGrid = hamiltonian.grid
  mult: Tuple[int, ...] = check_multiplicities(multiplicities, hamiltonian.n)
  if not 0 <= nu < len(mult):
    raise ConfigError(f"Branch index {nu} out of range for {len(mult)} branches")
  h_jets: List[Jet] = symbol_jets(hamiltonian, [J - a for a in range(J + 1)])
  if method == "riesz":
    jets: List[Jet] = riesz_jets(h_jets, mult, nu, J, 0, gap_tol, grid.mesh())
  else:
    jets = recursive_jets(h_jets, mult, nu, J, 0, gap_tol, grid.mesh())

  sourced: bool = _sourced(hamiltonian)
  coefficients: List[GridFunction] = []
  for j, jet in enumerate(jets):
    source: Optional[JetSource] = None
    if sourced:
      source = JetSource(
          functools.partial(_pipeline_component, method, hamiltonian, mult, nu, J, gap_tol, j)
      )
    coefficients.append(GridFunction(grid, jet.value, source=source))
  logger.debug(f"{method} projection for branch {nu} through order {J} on N={grid.N}")
  return SemiclassicalProjection(MatrixSymbol(coefficients), nu, method)


def parametrix(hamiltonian: MatrixSymbol, z: complex, J: int, rho_min: float = 1e-6) -> MatrixSymbol:
  """Q ~ Σ ħ^j Q_j with (H − z) # Q = 1 through order J."""
  if J < 0:
    raise ConfigError(f"Parametrix order must be non-negative, got {J}")
  grid: PhaseGrid = hamiltonian.grid
  spectrum: np.ndarray = np.linalg.eigvalsh(hermitian_part(hamiltonian.principal.values))
  distance: np.ndarray = np.min(np.abs(spectrum - z), axis=-1)
  if np.min(distance) < rho_min:
    flat: int = int(np.argmin(distance))
    raise ContourError(
        f"z={z} lies within {float(distance.ravel()[flat]):.3e} of the spectrum at "
        f"{_node_text(grid.mesh(), grid.shape, flat)}"
    )
  h_jets: List[Jet] = symbol_jets(hamiltonian, [J - a for a in range(J + 1)])
  jets: List[Jet] = parametrix_jets(h_jets, z, J)

  def build(j: int, coords: Coords, order: int) -> Jet:
    local: List[Jet] = symbol_jets(hamiltonian, [order + J - a for a in range(J + 1)], coords)
    return parametrix_jets(local, z, J, order)[j]

  sourced: bool = _sourced(hamiltonian)
  return MatrixSymbol([
      GridFunction(grid, jet.value, source=JetSource(functools.partial(build, j)) if sourced else None)
      for j, jet in enumerate(jets)
  ])


def riesz_projection(
    hamiltonian: MatrixSymbol, multiplicities: Sequence[int], nu: int, J: int,
    gap_tol: float = GAP_TOL
) -> SemiclassicalProjection:
  """Contour integral of the parametrix around the branch λ_ν."""
  if not 0 <= J <= MAX_RIESZ_ORDER:
    raise ConfigError(f"Riesz projection order must be between 0 and {MAX_RIESZ_ORDER}, got {J}")
  return _projection("riesz", hamiltonian, multiplicities, nu, J, gap_tol)


def recursive_projection(
    hamiltonian: MatrixSymbol, multiplicities: Sequence[int], nu: int, J: int,
    gap_tol: float = GAP_TOL
) -> SemiclassicalProjection:
  """Order-by-order solution of P # P = P and [P, H]_# = 0."""
  if not 0 <= J <= MAX_RECURSION_ORDER:
    raise ConfigError(f"Recursive projection order must be between 0 and {MAX_RECURSION_ORDER}, got {J}")
  return _projection("recursion", hamiltonian, multiplicities, nu, J, gap_tol)


def projection_residuals(hamiltonian: MatrixSymbol, projection: MatrixSymbol,
                         J: int) -> Dict[str, List[float]]:
  """Max-norms of the coefficients of P # P − P and [P, H]_# through order J."""
  idempotency: MatrixSymbol = moyal_product(projection, projection, J) - projection.truncate(J)
  commutator: MatrixSymbol = commutator_sharp(projection, hamiltonian.truncate(J), J)
  return {
      "idempotency": [c.max_norm() for c in idempotency.coefficients],
      "commutator": [c.max_norm() for c in commutator.coefficients],
  }


def orthogonalize_projector(op: DiscretizedOperator) -> DiscretizedOperator:
  """Round the spectrum of the hermitian part to {0, 1}."""
  h: np.ndarray = hermitian_part(op.matrix)
  w, v = np.linalg.eigh(h)
  distance: np.ndarray = np.minimum(np.abs(w), np.abs(w - 1.0))
  radius: float = float(np.max(distance)) if w.size else 0.0
  if radius > CLUSTER_RADIUS_MAX:
    stray: float = float(w[int(np.argmax(distance))])
    raise ClusterError(
        f"Spectrum not clustered near {{0, 1}}: eigenvalue {stray:.6g} lies "
        f"{radius:.3g} away (limit {CLUSTER_RADIUS_MAX})"
    )
  keep: np.ndarray = w >= 0.5
  basis: np.ndarray = v[:, keep]
  matrix: np.ndarray = basis @ basis.conj().T
  result: DiscretizedOperator = DiscretizedOperator(matrix, op.grid, op.n, hermitian=True)
  result.meta.update({"cluster_radius": radius, "rank": int(keep.sum())})
  logger.debug(f"Orthogonalized projector: rank {int(keep.sum())}, cluster radius {radius:.3e}")
  return result


# --------------------------------------------------------------------------
# Gauge fixing
# --------------------------------------------------------------------------


def lattice_chern(frames: np.ndarray) -> float:
  """Plaquette Chern number of a k-frame field on a periodic 2D lattice."""

  def link(axis: int) -> np.ndarray:
    overlap: np.ndarray = dagger(frames) @ np.roll(frames, -1, axis=axis)
    det: np.ndarray = np.linalg.det(overlap)
    return det / np.maximum(np.abs(det), 1e-300)

  u0: np.ndarray = link(0)
  u1: np.ndarray = link(1)
  plaquette: np.ndarray = u0 * np.roll(u1, -1, axis=0) * np.conj(np.roll(u0, -1, axis=1)) * np.conj(u1)
  return float(np.sum(np.angle(plaquette)) / (2 * math.pi))


def _plane_slice(grid: PhaseGrid, l: int, start: Tuple[int, ...]) -> Tuple:
  index: List = list(start)
  index[l] = slice(None)
  index[grid.d + l] = slice(None)
  return tuple(index)


def _torus_order(grid: PhaseGrid, start: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
  """Flat node indices, their parents and torus Manhattan distances from start."""
  N: int = grid.N
  idx: np.ndarray = np.indices(grid.shape).reshape(len(grid.shape), -1)
  offset: np.ndarray = (idx - np.asarray(start)[:, None]) % N
  distance: np.ndarray = np.minimum(offset, N - offset).sum(axis=0)
  moving: np.ndarray = np.argmax(offset != 0, axis=0)
  columns: np.ndarray = np.arange(idx.shape[1])
  step: np.ndarray = np.where(offset[moving, columns] <= N // 2, -1, 1)
  parent: np.ndarray = idx.copy()
  parent[moving, columns] = (parent[moving, columns] + step) % N
  flat: np.ndarray = np.ravel_multi_index(tuple(idx), grid.shape)
  parent_flat: np.ndarray = np.ravel_multi_index(tuple(parent), grid.shape)
  return flat, parent_flat, distance


def gauge_fix(bundle: EigenBundle) -> EigenBundle:
  """Make the isometries V_ν grid-smooth by polar-factor alignment, flood-filled from the origin."""
  grid: PhaseGrid = bundle.grid
  start: Tuple[int, ...] = (grid.N // 2, ) * (2 * grid.d)
  flat, parent, distance = _torus_order(grid, start)
  mesh: Tuple[np.ndarray, ...] = grid.mesh()

  fixed: List[GridFunction] = []
  for nu, iso in enumerate(bundle.isometries):
    for l in range(grid.d):
      chern: float = lattice_chern(iso.values[_plane_slice(grid, l, start)])
      if abs(chern) > 0.5:
        raise GaugeObstructionError(
            f"Branch {nu} carries lattice Chern number {chern:.3f} in the (x{l + 1}, xi{l + 1}) "
            f"plane; no smooth isometry field exists"
        )

    n, k = iso.shape
    frames: np.ndarray = iso.values.reshape(-1, n, k).copy()
    for layer in range(1, int(distance.max()) + 1):
      members: np.ndarray = np.nonzero(distance == layer)[0]
      nodes: np.ndarray = flat[members]
      parents: np.ndarray = parent[members]
      overlap: np.ndarray = dagger(frames[nodes]) @ frames[parents]
      u, s, vh = np.linalg.svd(overlap)
      smallest: np.ndarray = s.min(axis=-1)
      if np.any(smallest < OVERLAP_MIN):
        bad: int = int(nodes[int(np.argmin(smallest))])
        raise GaugeObstructionError(
            f"Frame overlap {float(smallest.min()):.3e} below {OVERLAP_MIN} for branch {nu} at "
            f"{_node_text(mesh, grid.shape, bad)}"
        )
      frames[nodes] = frames[nodes] @ (u @ vh)
    fixed.append(GridFunction(grid, frames.reshape(iso.values.shape)))

  logger.debug(f"Gauge-fixed {bundle.l} isometry fields by flood fill from index {start}")
  return EigenBundle(bundle.hamiltonian, bundle.multiplicities, bundle.eigenvalues,
                     bundle.projectors, fixed, bundle.gap, bundle.gap_tol, gauge_fixed=True)


# --------------------------------------------------------------------------
# Binary layout
# --------------------------------------------------------------------------


def write_bundle(bundle: EigenBundle, path: Union[str, Path]) -> Path:
  """
  Write a bundle as a little-endian columnar file.

  Header: magic, version, d, N, n, l (int32), k[l] (int32), L_x, L_xi, hbar,
  gap (float64). Body per node: λ[l], then P0[l] and V[l] as interleaved
  (real, imag) float64 pairs.
  """
  target: Path = Path(path)
  grid: PhaseGrid = bundle.grid
  header: bytes = BUNDLE_MAGIC + struct.pack(
      f"<5i{bundle.l}i4d", BUNDLE_VERSION, grid.d, grid.N, bundle.n, bundle.l,
      *bundle.multiplicities, grid.L_x, grid.L_xi, grid.hbar, bundle.gap
  )
  nodes: int = int(np.prod(grid.shape))
  columns: List[np.ndarray] = [
      np.stack([lam.values.real.reshape(nodes) for lam in bundle.eigenvalues], axis=-1)
  ]
  for field_ in bundle.projectors + bundle.isometries:
    values: np.ndarray = field_.values.reshape(nodes, -1)
    columns.append(np.stack([values.real, values.imag], axis=-1).reshape(nodes, -1))
  body: np.ndarray = np.concatenate(columns, axis=-1).astype("<f8")
  target.write_bytes(header + body.tobytes())
  logger.debug(f"Wrote eigenbundle ({nodes} nodes) to {target}")
  return target


def read_bundle(path: Union[str, Path], hamiltonian: Optional[GridFunction] = None) -> EigenBundle:
  """Read a bundle written by write_bundle."""
  raw: bytes = Path(path).read_bytes()
  if raw[:4] != BUNDLE_MAGIC:
    raise ConfigError(f"{path} is not an eigenbundle file")
  version, d, N, n, l = struct.unpack_from("<5i", raw, 4)
  if version != BUNDLE_VERSION:
    raise ConfigError(f"Unsupported eigenbundle version {version}")
  offset: int = 4 + 5 * 4
  mult: Tuple[int, ...] = struct.unpack_from(f"<{l}i", raw, offset)
  offset += 4 * l
  L_x, L_xi, hbar, gap = struct.unpack_from("<4d", raw, offset)
  offset += 4 * 8

  grid: PhaseGrid = PhaseGrid(d, L_x, L_xi, N, hbar, max(1.0, hbar))
  nodes: int = N**(2 * d)
  body: np.ndarray = np.frombuffer(raw, dtype="<f8", offset=offset).reshape(nodes, -1)
  lams: np.ndarray = body[:, :l]
  cursor: int = l

  def take(cols: int) -> np.ndarray:
    nonlocal cursor
    block: np.ndarray = body[:, cursor:cursor + 2 * cols].reshape(nodes, cols, 2)
    cursor += 2 * cols
    return block[..., 0] + 1j * block[..., 1]

  projectors: List[GridFunction] = [
      GridFunction(grid, take(n * n).reshape(grid.shape + (n, n)), hermitian=True) for _ in range(l)
  ]
  isometries: List[GridFunction] = [
      GridFunction(grid, take(n * k).reshape(grid.shape + (n, k))) for k in mult
  ]
  eigenvalues: List[GridFunction] = [
      GridFunction(grid, lams[:, nu].reshape(grid.shape)) for nu in range(l)
  ]
  if hamiltonian is None:
    h0: np.ndarray = sum(
        lam.values * p.values for lam, p in zip(eigenvalues, projectors)
    )  # type: ignore[assignment]
    hamiltonian = GridFunction(grid, h0)
  return EigenBundle(hamiltonian, tuple(mult), eigenvalues, projectors, isometries, gap)


def resolution_defect(projections: Sequence[MatrixSymbol]) -> List[float]:
  """Max-norm of Σ_ν P_{ν,j} − δ_{j0} Id per order j."""
  total: MatrixSymbol = projections[0]
  for p in projections[1:]:
    total = total + p
  n: int = total.n
  out: List[float] = []
  for j, coef in enumerate(total.coefficients):
    values: np.ndarray = coef.values - (np.eye(n) if j == 0 else 0.0)
    out.append(float(np.max(np.abs(values))))
  return out
