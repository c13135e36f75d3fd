"""
Spectral windows, quasimodes and semiclassical averages.

Eigenpairs of the quantized Hamiltonian in I(E, ħ) = [E − ħω, E + ħω] are
compared with Liouville averages over the level surfaces {λ_ν = E}, realized
by a Gaussian mollifier on the grid. Quasimodes are the normalized branch
projections 𝒫_ν ψ_j. Time averages run along the skew-product flows on
Ω × O_λ (coadjoint orbit) and Ω × G (group).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Final, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, NumericalError, PreconditionError
from .grid import GridFunction, PhaseGrid
from .projections import EigenBundle
from .stratweyl import (
    IrrepModel,
    SWCalculus,
    coadjoint_action,
    moment_map,
    random_group_element,
    sw_symbol,
)
from .transport import (
    DEFAULT_DT,
    BranchField,
    Trajectory,
    fixed_gauge_transport,
    hamiltonian_flow,
    reference_frames,
    transport_matrix,
)
from .utils import dagger, hermitian_part
from .weyl import DiscretizedOperator, MatrixSymbol, quantize, wigner_matrix

logger: logging.Logger = logging.getLogger("semiclab")

RESIDUAL_TOL: Final[float] = 1e-9
ORTHONORMAL_TOL: Final[float] = 1e-10
MIN_WINDOW: Final[int] = 8
MOLLIFIER_FACTOR: Final[float] = 3.0
MIN_VOLUME: Final[float] = 1e-10
ROUTE_TOL: Final[float] = 1e-8
NEAR_BRANCH: Final[float] = 0.1
HISTOGRAM_BINS: Final[int] = 10


# --------------------------------------------------------------------------
# Windows and quasimodes
# --------------------------------------------------------------------------


@dataclass
class SpectralData:
  """Eigenpairs of op(H) inside the window I(E, ħ)."""

  E: float
  omega: float
  hbar: float
  energies: np.ndarray  # (N_I,)
  states: np.ndarray  # (dim, N_I)
  projected_norms: Optional[np.ndarray] = None  # (l, N_I)
  residual: float = 0.0

  @property
  def count(self) -> int:
    return int(self.energies.size)

  @property
  def window(self) -> Tuple[float, float]:
    return (self.E - self.hbar * self.omega, self.E + self.hbar * self.omega)

  @property
  def void(self) -> bool:
    return self.count < MIN_WINDOW


def eigensolve_window(h_op: DiscretizedOperator, E: float, omega: float,
                      spectrum: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> SpectralData:
  """All eigenpairs with E_j ∈ [E − ħω, E + ħω]; an empty window is valid."""
  if omega <= 0:
    raise ConfigError(f"Window half-width omega must be positive, got {omega}")
  energies, vectors = spectrum if spectrum is not None else np.linalg.eigh(hermitian_part(h_op.matrix))
  hbar: float = h_op.grid.hbar
  mask: np.ndarray = np.abs(energies - E) <= hbar * omega
  data: SpectralData = SpectralData(E, omega, hbar, energies[mask], vectors[:, mask])
  if data.count:
    residual: np.ndarray = h_op.matrix @ data.states - data.states * data.energies
    data.residual = float(np.max(np.linalg.norm(residual, axis=0)))
    tolerance: float = RESIDUAL_TOL * max(1.0, float(np.max(np.abs(energies))))
    if data.residual > tolerance:
      raise NumericalError(f"Eigenpair residual {data.residual:.3e} exceeds {tolerance:.1e}")
    gram: np.ndarray = data.states.conj().T @ data.states
    if np.max(np.abs(gram - np.eye(data.count))) > ORTHONORMAL_TOL:
      raise NumericalError("Window eigenvectors are not orthonormal")
  if data.void:
    logger.warning(
        f"Window [{data.window[0]:.4g}, {data.window[1]:.4g}] holds {data.count} eigenvalues; "
        f"fewer than {MIN_WINDOW} is statistically void"
    )
  logger.debug(f"Window around E={E}: {data.count} eigenvalues at hbar={hbar:.4g}")
  return data


def attach_projectors(data: SpectralData, projectors: Sequence[np.ndarray]) -> SpectralData:
  """Record ‖𝒫_ν ψ_j‖² for every branch."""
  norms: List[np.ndarray] = [
      np.linalg.norm(p @ data.states, axis=0)**2 for p in projectors
  ]
  data.projected_norms = np.stack(norms) if norms else np.zeros((0, data.count))
  return data


@dataclass
class QuasimodeSet:
  """Normalized projections φ_{j,ν} = 𝒫_ν ψ_j/‖𝒫_ν ψ_j‖ with ‖𝒫_ν ψ_j‖² ≥ δ."""

  branch: int
  delta: float
  delta_nu: float
  energies: np.ndarray
  modes: np.ndarray  # (dim, count)
  discrepancies: np.ndarray
  total: int

  @property
  def count(self) -> int:
    return int(self.energies.size)

  @property
  def fraction(self) -> float:
    return self.count / self.total if self.total else 0.0

  @property
  def lower_bound(self) -> float:
    """(δ_ν − δ)/(1 − δ): projected norms average to δ_ν and never exceed 1."""
    return (self.delta_nu - self.delta) / (1.0 - self.delta)


def quasimodes(data: SpectralData, projector: np.ndarray, delta: float, delta_nu: float,
               h_op: DiscretizedOperator, branch: int = 0) -> QuasimodeSet:
  """Filter the window by projected norm and record discrepancies ‖[H, 𝒫]ψ‖/‖𝒫ψ‖."""
  if not 0 < delta < delta_nu:
    raise PreconditionError(f"delta={delta} must lie in (0, delta_nu={delta_nu:.4g})")
  projected: np.ndarray = projector @ data.states
  norms: np.ndarray = np.linalg.norm(projected, axis=0)
  keep: np.ndarray = norms**2 >= delta
  commutator: np.ndarray = h_op.matrix @ projector - projector @ h_op.matrix
  residual: np.ndarray = np.linalg.norm(commutator @ data.states, axis=0)
  modes: np.ndarray = projected[:, keep] / norms[keep]
  result: QuasimodeSet = QuasimodeSet(branch, delta, delta_nu, data.energies[keep], modes,
                                      residual[keep] / norms[keep], data.count)
  logger.debug(f"Quasimodes for branch {branch}: kept {result.count}/{data.count} (delta={delta})")
  return result


# --------------------------------------------------------------------------
# Liouville measures
# --------------------------------------------------------------------------


@dataclass
class LevelSurfaceMeasure:
  """Mollified coarea weights of the level surface {λ_ν = E} on the grid."""

  branch: int
  E: float
  width: float
  weights: np.ndarray  # normalized, grid shape
  vol: float
  grid: PhaseGrid

  def average(self, values: np.ndarray) -> np.ndarray:
    """Σ_nodes weight·value over the leading grid axes."""
    axes: Tuple[int, ...] = tuple(range(2 * self.grid.d))
    w: np.ndarray = self.weights.reshape(self.weights.shape + (1, ) * (values.ndim - self.weights.ndim))
    return np.sum(w * values, axis=axes)


def _mollifier(s: np.ndarray, width: float) -> np.ndarray:
  return np.exp(-s**2 / (2 * width**2)) / (math.sqrt(2 * math.pi) * width)


def _gradient_norm(bundle: EigenBundle, nu: int) -> Tuple[np.ndarray, np.ndarray]:
  lams, _, _ = bundle.gradient_jets(bundle.grid.mesh())
  lam = lams[nu]
  nvars: int = 2 * bundle.grid.d
  grads: List[np.ndarray] = [
      lam.partial(tuple(1 if u == v else 0 for u in range(nvars)))[..., 0, 0].real for v in range(nvars)
  ]
  return lam.value[..., 0, 0].real, np.sqrt(sum(g**2 for g in grads))


def level_surface(bundle: EigenBundle, nu: int, E: float,
                  width: Optional[float] = None) -> LevelSurfaceMeasure:
  """δ(λ_ν − E) dx dξ as Gaussian-weighted nodes; default width 3·|∇λ|·(grid step)."""
  grid: PhaseGrid = bundle.grid
  lam, grad = _gradient_norm(bundle, nu)
  step: float = max(grid.dx, grid.dxi)
  if width is None:
    near: np.ndarray = np.abs(lam - E) <= float(np.max(grad)) * step
    if not np.any(near):
      raise PreconditionError(f"Level surface lambda_{nu} = {E} does not meet the grid")
    width = MOLLIFIER_FACTOR * float(np.mean(grad[near])) * step
  if width <= 0:
    raise ConfigError(f"Mollifier width must be positive, got {width}")
  raw: np.ndarray = _mollifier(lam - E, width) * grid.cell_volume
  vol: float = float(raw.sum())
  weights: np.ndarray = raw / vol if vol > 0 else raw
  logger.debug(f"Level surface lambda_{nu}={E}: vol={vol:.4g}, width={width:.3g}")
  return LevelSurfaceMeasure(nu, E, width, weights, vol, grid)


def level_surfaces(bundle: EigenBundle, E: float) -> List[LevelSurfaceMeasure]:
  """Measures for every branch; a branch that never reaches E gets an empty measure."""
  out: List[LevelSurfaceMeasure] = []
  for nu in range(bundle.l):
    try:
      out.append(level_surface(bundle, nu, E))
    except PreconditionError:
      logger.debug(f"Branch {nu} does not reach E={E}; its level surface is empty")
      out.append(LevelSurfaceMeasure(nu, E, 0.0, np.zeros(bundle.grid.shape), 0.0, bundle.grid))
  return out


def liouville_average(b0: GridFunction, measure: LevelSurfaceMeasure) -> np.ndarray:
  """ℓ_{ν,E}(B₀) as an n × n matrix."""
  if b0.grid != measure.grid:
    raise ConfigError("Observable and level-surface measure live on different grids")
  if measure.vol < MIN_VOLUME:
    raise PreconditionError(
        f"Level surface lambda_{measure.branch} = {measure.E} is empty (vol {measure.vol:.3e})"
    )
  return measure.average(b0.values)


def mollifier_convergence(b0: GridFunction, bundle: EigenBundle, measure: LevelSurfaceMeasure) -> float:
  """Relative change of ℓ(B₀) when the mollifier width is halved."""
  finer: LevelSurfaceMeasure = level_surface(bundle, measure.branch, measure.E, measure.width / 2)
  coarse: np.ndarray = liouville_average(b0, measure)
  fine: np.ndarray = liouville_average(b0, finer)
  return float(np.max(np.abs(fine - coarse)) / max(1e-12, float(np.max(np.abs(coarse)))))


def delta_bounds(measures: Sequence[LevelSurfaceMeasure], multiplicities: Sequence[int]) -> List[float]:
  """δ_ν = k_ν vol Ω_ν / Σ_μ k_μ vol Ω_μ."""
  total: float = sum(k * m.vol for k, m in zip(multiplicities, measures))
  if total <= 0:
    raise PreconditionError("All level surfaces are empty")
  return [k * m.vol / total for k, m in zip(multiplicities, measures)]


def weyl_prediction(measures: Sequence[LevelSurfaceMeasure], multiplicities: Sequence[int], omega: float,
                    hbar: float, d: int) -> Tuple[float, List[float]]:
  """N_I ≈ (ω/π) Σ_ν k_ν vol Ω_ν / (2πħ)^{d−1}, with the per-branch terms."""
  scale: float = omega / math.pi / (2 * math.pi * hbar)**(d - 1)
  per_branch: List[float] = [scale * k * m.vol for k, m in zip(multiplicities, measures)]
  return sum(per_branch), per_branch


# --------------------------------------------------------------------------
# Szegő limit formula
# --------------------------------------------------------------------------


@dataclass
class SzegoReport:
  """Window averages against level-surface averages, with counts and norm statistics."""

  lhs: float
  rhs: float
  restricted_lhs: List[float]
  restricted_rhs: List[float]
  count: int
  predicted_count: float
  branch_counts: List[int]
  predicted_branch_counts: List[float]
  norm_sums: List[float]
  delta_nu: List[float]
  upper_fractions: List[float]
  histograms: List[List[int]]
  scenarios: List[str]
  void: bool = False

  @property
  def difference(self) -> float:
    return abs(self.lhs - self.rhs)

  @property
  def count_error(self) -> float:
    return abs(self.count - self.predicted_count) / self.predicted_count if self.predicted_count else math.inf

  def to_dict(self) -> Dict[str, Any]:
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def _classify(norms: np.ndarray) -> str:
  """Bimodal near 0 and 1 reads as concentration; mass in between as equidistribution."""
  if norms.size == 0:
    return "empty"
  middle: float = float(np.mean((norms > 0.1) & (norms < 0.9)))
  return "concentrated" if middle < 0.5 else "equidistributed"


def szego_check(
    data: SpectralData,
    observable: Union[MatrixSymbol, GridFunction],
    bundle: EigenBundle,
    measures: Sequence[LevelSurfaceMeasure],
    projectors: Sequence[np.ndarray],
) -> SzegoReport:
  """Both sides of the Szegő limit formula, its restricted form and the norm accounting."""
  if data.count == 0:
    raise PreconditionError("Szegő check needs a non-empty window")
  b0: GridFunction = observable.principal if isinstance(observable, MatrixSymbol) else observable
  b_op: DiscretizedOperator = quantize(observable)
  attach_projectors(data, projectors)
  norms: np.ndarray = data.projected_norms  # type: ignore[assignment]
  mult: Tuple[int, ...] = bundle.multiplicities

  expectations: np.ndarray = np.real(np.einsum("ij,ik,kj->j", data.states.conj(), b_op.matrix, data.states))
  lhs: float = float(np.mean(expectations))
  total: float = sum(k * m.vol for k, m in zip(mult, measures))
  blocks: List[float] = []
  for nu, measure in enumerate(measures):
    if measure.vol < MIN_VOLUME:
      blocks.append(0.0)
      continue
    p: np.ndarray = bundle.projectors[nu].values
    block: np.ndarray = liouville_average(GridFunction(bundle.grid, p @ b0.values @ p), measure)
    blocks.append(float(np.real(np.trace(block))) * measure.vol / total)

  restricted: List[float] = []
  for proj in projectors:
    inner: np.ndarray = proj @ b_op.matrix @ proj
    restricted.append(float(np.mean(np.real(np.einsum("ij,ik,kj->j", data.states.conj(), inner,
                                                       data.states)))))

  deltas: List[float] = delta_bounds(measures, mult)
  predicted, per_branch = weyl_prediction(measures, mult, data.omega, data.hbar, bundle.grid.d)
  upper: List[float] = [float(np.mean(1.0 - n <= NEAR_BRANCH**2)) for n in norms]
  histograms: List[List[int]] = [
      np.histogram(n, bins=HISTOGRAM_BINS, range=(0.0, 1.0))[0].tolist() for n in norms
  ]
  report: SzegoReport = SzegoReport(
      lhs=lhs,
      rhs=sum(blocks),
      restricted_lhs=restricted,
      restricted_rhs=blocks,
      count=data.count,
      predicted_count=predicted,
      branch_counts=[int(np.sum(n > 0.5)) for n in norms],
      predicted_branch_counts=per_branch,
      norm_sums=[float(np.mean(n)) for n in norms],
      delta_nu=deltas,
      upper_fractions=upper,
      histograms=histograms,
      scenarios=[_classify(n) for n in norms],
      void=data.void,
  )
  logger.debug(f"Szegő: LHS={lhs:.5g}, RHS={report.rhs:.5g}, N_I={data.count} vs {predicted:.4g}")
  return report


# --------------------------------------------------------------------------
# Quantum variance
# --------------------------------------------------------------------------


def _node_blocks(bundle: EigenBundle, nu: int, values: np.ndarray) -> np.ndarray:
  iso: np.ndarray = bundle.isometries[nu].values
  return dagger(iso) @ values @ iso


def orbit_mean(b0: GridFunction, bundle: EigenBundle, measure: LevelSurfaceMeasure,
               calculus: SWCalculus) -> Tuple[float, float]:
  """M_{E,ν,λ}(b) by the trace route and by the orbit-integral route."""
  nu: int = measure.branch
  k: int = bundle.k(nu)
  blocks: np.ndarray = _node_blocks(bundle, nu, b0.values)
  trace_route: float = float(np.real(np.trace(measure.average(blocks)))) / k
  flat: np.ndarray = blocks.reshape((-1, k, k))
  symbols: np.ndarray = np.stack([sw_symbol(calculus, b) for b in flat])  # (nodes, M)
  orbit_integrals: np.ndarray = symbols @ calculus.orbit.weights
  orbit_route: float = float(np.real(np.sum(measure.weights.ravel() * orbit_integrals))) / k
  if abs(trace_route - orbit_route) > ROUTE_TOL * max(1.0, abs(trace_route)):
    raise NumericalError(
        f"Orbit mean routes disagree: trace {trace_route:.10g} vs orbit {orbit_route:.10g}"
    )
  return trace_route, orbit_route


@dataclass
class VarianceReport:
  """S₂ about the orbit mean and the per-mode deviations."""

  s2: float
  mean: float
  deviations: np.ndarray
  count: int


def variance_s2(qset: QuasimodeSet, observable: Union[MatrixSymbol, GridFunction], bundle: EigenBundle,
                measure: LevelSurfaceMeasure, calculus: SWCalculus) -> VarianceReport:
  """S₂ = mean |⟨φ, op(B)φ⟩ − M|² over the quasimodes of one branch."""
  if qset.count == 0:
    raise PreconditionError("Quantum variance needs at least one quasimode")
  b0: GridFunction = observable.principal if isinstance(observable, MatrixSymbol) else observable
  mean, _ = orbit_mean(b0, bundle, measure, calculus)
  b_op: DiscretizedOperator = quantize(observable)
  expectations: np.ndarray = np.einsum("ij,ik,kj->j", qset.modes.conj(), b_op.matrix, qset.modes)
  deviations: np.ndarray = np.abs(expectations - mean)
  s2: float = float(np.mean(deviations**2))
  logger.debug(f"S2 for branch {qset.branch}: {s2:.4e} over {qset.count} modes")
  return VarianceReport(s2, mean, deviations, qset.count)


# --------------------------------------------------------------------------
# Observables on Ω × O_λ and time averages
# --------------------------------------------------------------------------


class BlockObservable:
  """b(z, η) = symb^SW[V_ν(z)* B₀(z) V_ν(z)](η) in the reference gauge."""

  def __init__(self, b0: GridFunction, bundle: EigenBundle, nu: int, calculus: SWCalculus):
    self.b0: GridFunction = b0
    self.bundle: EigenBundle = bundle
    self.nu: int = nu
    self.calculus: SWCalculus = calculus

  def blocks(self, points: np.ndarray) -> np.ndarray:
    coords: List[np.ndarray] = [points[:, v] for v in range(points.shape[1])]
    frames: np.ndarray = reference_frames(self.bundle, self.nu, points)
    return dagger(frames) @ self.b0.evaluate_at(coords) @ frames

  def symbol_at(self, block: np.ndarray, etas: np.ndarray) -> np.ndarray:
    return np.real(sw_symbol(self.calculus, block, etas))


@dataclass
class Ensemble:
  """Starts on Ω_{ν,E} × O_λ, with the section elements g (η = Ad*_g λ)."""

  points: np.ndarray  # (B, 2d)
  elements: np.ndarray  # (B, k, k)
  etas: np.ndarray  # (B, m)


def surface_ensemble(measure: LevelSurfaceMeasure, irrep: IrrepModel, count: int,
                     rng: np.random.Generator, haar: bool = True,
                     calculus: Optional[SWCalculus] = None) -> Ensemble:
  """Nodes drawn from the mollified surface measure, group elements Haar-random or orbit nodes."""
  grid: PhaseGrid = measure.grid
  flat: np.ndarray = measure.weights.ravel()
  picks: np.ndarray = rng.choice(flat.size, size=count, p=flat / flat.sum())
  index: Tuple[np.ndarray, ...] = np.unravel_index(picks, measure.weights.shape)
  points: np.ndarray = np.stack([grid.axis(v)[index[v]] for v in range(2 * grid.d)], axis=-1)
  if haar or calculus is None:
    elements: np.ndarray = np.stack([random_group_element(irrep, rng) for _ in range(count)])
  else:
    orbit = calculus.orbit
    chosen: np.ndarray = rng.choice(orbit.size, size=count, p=orbit.weights / orbit.weights.sum())
    elements = orbit.sections[chosen]
  etas: np.ndarray = moment_map(irrep, elements @ irrep.highest_weight)
  return Ensemble(points, elements, etas)


@dataclass
class TimeAverageReport:
  """Per-start time averages along a skew-product flow and the space average."""

  averages: np.ndarray
  space_average: float
  T: float

  @property
  def spread(self) -> float:
    return float(np.std(self.averages)) if self.averages.size else 0.0

  @property
  def bias(self) -> float:
    return float(np.max(np.abs(self.averages - self.space_average))) if self.averages.size else 0.0


@dataclass
class TransportSeries:
  """Trajectories and fixed-gauge reduced transports for an ensemble, reusable across observables."""

  trajectory: Trajectory
  transport: np.ndarray  # (S, B, k, k)

  @property
  def dt(self) -> float:
    return self.trajectory.dt

  @property
  def T(self) -> float:
    return float(abs(self.trajectory.times[-1]))

  def samples(self, T: float, stride: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Points (S', B, 2d) and transports on [0, T], every `stride` steps."""
    steps: int = int(round(T / self.dt))
    if steps > self.trajectory.times.size - 1 + 1e-9:
      raise ConfigError(f"Series covers T={self.T:g}; cannot average up to {T:g}")
    index: np.ndarray = np.arange(0, steps + 1, max(1, stride))
    return self.trajectory.points[index], self.transport[index]


def transport_series(bundle: EigenBundle, nu: int, points: np.ndarray, T: float, dt: float = DEFAULT_DT,
                     h1: Optional[GridFunction] = None) -> TransportSeries:
  """Flow and reduced transport from every start up to time T."""
  if T <= 0:
    raise ConfigError(f"Averaging time must be positive, got {T}")
  traj: Trajectory = hamiltonian_flow(bundle, nu, points, T, dt, check_escape=False)
  generator: BranchField = BranchField(bundle, nu, h1)
  frames: np.ndarray = reference_frames(bundle, nu, points)
  reduced = transport_matrix(traj, generator, reduced=True, frames=frames)
  logger.debug(f"Transport series: {points.shape[0]} starts up to T={T:g}")
  return TransportSeries(traj, fixed_gauge_transport(bundle, reduced))


def _time_mean(series: np.ndarray, axis: int = 0) -> np.ndarray:
  """Trapezoid mean over equally spaced samples."""
  if series.shape[axis] == 1:
    return np.take(series, 0, axis=axis)
  weights: np.ndarray = np.ones(series.shape[axis])
  weights[0] = weights[-1] = 0.5
  weights /= weights.sum()
  return np.tensordot(weights, series, axes=([0], [axis]))


def space_average(observable: BlockObservable, measure: LevelSurfaceMeasure) -> float:
  """M(b) = k⁻¹ ∫∫ b dη dℓ = k⁻¹ tr ℓ(V*B₀V)."""
  k: int = observable.calculus.k
  blocks: np.ndarray = _node_blocks(observable.bundle, observable.nu, observable.b0.values)
  return float(np.real(np.trace(measure.average(blocks)))) / k


def ergodic_time_average(observable: BlockObservable, ensemble: Ensemble, series: TransportSeries,
                         measure: LevelSurfaceMeasure, T: Optional[float] = None,
                         stride: int = 1) -> TimeAverageReport:
  """Time averages of b∘Y^t: the blocks D* b(Φ^t z) D are averaged first, then symbolized at η."""
  horizon: float = series.T if T is None else T
  points, transport = series.samples(horizon, stride)
  blocks: np.ndarray = np.stack([observable.blocks(p) for p in points])
  mean_blocks: np.ndarray = _time_mean(dagger(transport) @ blocks @ transport)
  averages: np.ndarray = np.array([
      float(observable.symbol_at(block, eta[None, :])[0]) for block, eta in zip(mean_blocks, ensemble.etas)
  ])
  return TimeAverageReport(averages, space_average(observable, measure), horizon)


def group_time_average(observable: BlockObservable, ensemble: Ensemble, series: TransportSeries,
                       measure: LevelSurfaceMeasure, T: Optional[float] = None,
                       stride: int = 1) -> TimeAverageReport:
  """
  Time averages along Ỹ^t on Ω × G, pulled back through η(t) = Ad*_{D g}λ per sample.

  The coadjoint action ignores the U(1) phase of D, so no subgroup projection is needed.
  """
  irrep: IrrepModel = observable.calculus.irrep
  horizon: float = series.T if T is None else T
  points, transport = series.samples(horizon, stride)
  samples: List[np.ndarray] = []
  for p, step in zip(points, transport):
    blocks: np.ndarray = observable.blocks(p)
    row: List[float] = []
    for b in range(ensemble.points.shape[0]):
      eta: np.ndarray = coadjoint_action(irrep, step[b] @ ensemble.elements[b], irrep.weight)
      row.append(float(observable.symbol_at(blocks[b], eta[None, :])[0]))
    samples.append(np.array(row))
  return TimeAverageReport(_time_mean(np.stack(samples)), space_average(observable, measure), horizon)


@dataclass
class EquivalenceReport:
  """Orbit-route against group-route time averages."""

  orbit: TimeAverageReport
  group: TimeAverageReport

  @property
  def differences(self) -> np.ndarray:
    return np.abs(self.orbit.averages - self.group.averages)

  @property
  def relative(self) -> float:
    scale: float = max(1e-12, float(np.max(np.abs(self.orbit.averages))))
    return float(np.max(self.differences)) / scale


def group_orbit_equivalence(observable: BlockObservable, ensemble: Ensemble, series: TransportSeries,
                            measure: LevelSurfaceMeasure, stride: int = 1) -> EquivalenceReport:
  """Time averages through Ỹ^t on Ω × G and through Y^t on Ω × O_λ on the same samples."""
  return EquivalenceReport(
      ergodic_time_average(observable, ensemble, series, measure, stride=stride),
      group_time_average(observable, ensemble, series, measure, stride=stride),
  )


def haar_orbit_moments(irrep: IrrepModel, calculus: SWCalculus, samples: int,
                       rng: np.random.Generator) -> Dict[str, float]:
  """First and second moments of Ad*_g λ for Haar g against the orbit quadrature."""
  etas: np.ndarray = np.stack([
      coadjoint_action(irrep, random_group_element(irrep, rng), irrep.weight) for _ in range(samples)
  ])
  weights: np.ndarray = calculus.orbit.weights / calculus.orbit.weights.sum()
  points: np.ndarray = calculus.orbit.points
  first_q: np.ndarray = weights @ points
  second_q: np.ndarray = np.einsum("i,ia,ib->ab", weights, points, points)
  return {
      "first": float(np.max(np.abs(etas.mean(axis=0) - first_q))),
      "second": float(np.max(np.abs(np.einsum("ia,ib->ab", etas, etas) / samples - second_q))),
  }


# --------------------------------------------------------------------------
# Scalar Wigner transform
# --------------------------------------------------------------------------


@dataclass
class ScalarWigner:
  """w_ν[ψ](z, η) at grid nodes × orbit points."""

  values: np.ndarray  # grid shape + (M,)
  blocks: np.ndarray  # grid shape + (k, k)
  calculus: SWCalculus
  grid: PhaseGrid
  meta: Dict[str, Any] = field(default_factory=dict)

  @property
  def density(self) -> float:
    """Phase-space measure (2πħ)^{-d} dx dξ per node."""
    return self.grid.cell_volume / (2 * math.pi * self.grid.hbar)**self.grid.d

  def mass(self) -> float:
    return float(np.real(np.sum(self.values @ self.calculus.orbit.weights))) * self.density

  def marginal(self) -> np.ndarray:
    """∫ w dη per node."""
    return np.real(self.values @ self.calculus.orbit.weights)

  def pairing(self, block_symbols: np.ndarray) -> float:
    """(2πħ)^{-d} ∫∫ w b dx dξ dη with b sampled like `values`."""
    return float(np.real(np.sum((self.values * block_symbols) @ self.calculus.orbit.weights))) * self.density


def scalar_wigner(psi: np.ndarray, bundle: EigenBundle, calculus: SWCalculus, nu: int) -> ScalarWigner:
  """symb^SW[V_ν* W[ψ] V_ν](η) at every node and orbit point."""
  grid: PhaseGrid = bundle.grid
  k: int = bundle.k(nu)
  if calculus.k != k:
    raise ConfigError(f"Calculus acts on C^{calculus.k} but branch {nu} has multiplicity {k}")
  if not bundle.gauge_fixed:
    logger.warning("Scalar Wigner transform on a bundle without a fixed gauge")
  vector: np.ndarray = np.asarray(psi, dtype=complex).ravel()
  if vector.size != grid.dimension * bundle.n:
    raise ConfigError(f"State of length {vector.size} does not match dimension {grid.dimension * bundle.n}")
  w: GridFunction = wigner_matrix(vector, grid, bundle.n)
  blocks: np.ndarray = _node_blocks(bundle, nu, w.values)
  flat: np.ndarray = blocks.reshape((-1, k, k))
  values: np.ndarray = np.stack([sw_symbol(calculus, b) for b in flat]).reshape(grid.shape + (-1, ))
  return ScalarWigner(values, blocks, calculus, grid)


def block_symbol_field(b0: GridFunction, bundle: EigenBundle, calculus: SWCalculus, nu: int) -> np.ndarray:
  """b_{0,ν}(z, η_i) at nodes × orbit points, in the gauge of the bundle."""
  k: int = bundle.k(nu)
  flat: np.ndarray = _node_blocks(bundle, nu, b0.values).reshape((-1, k, k))
  return np.stack([sw_symbol(calculus, b) for b in flat]).reshape(bundle.grid.shape + (-1, ))


def shell_fraction(wigner: ScalarWigner, bundle: EigenBundle, nu: int, E: float, width: float) -> float:
  """Share of the η-marginal mass outside the shell |λ_ν − E| ≤ width."""
  lam: np.ndarray = np.real(bundle.eigenvalues[nu].values[..., 0, 0])
  marginal: np.ndarray = np.abs(wigner.marginal())
  total: float = float(marginal.sum())
  if total == 0:
    return 0.0
  return float(marginal[np.abs(lam - E) > width].sum()) / total
