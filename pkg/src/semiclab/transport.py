"""
Hamiltonian flows of eigenvalue branches and unitary transport along them.

The transport generator H̃ is evaluated from order-1 jets of λ_ν and P_ν at
arbitrary points, so flows and transport run off the grid. Flow and transport
share one fourth-order Runge–Kutta step: the propagator of a step is
integrated from the identity at the stage points of the flow step, then
replaced by its unitary polar factor. The reported unitarity defect is that
of the unprojected RK4 product.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Final, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .errors import (
    ConfigError,
    GaugeObstructionError,
    PreconditionError,
    TrajectoryEscapeError,
    UnitarityError,
    describe_node,
)
from .grid import GridFunction, PhaseGrid
from .jets import Jet, poisson
from .projections import (
    EigenBundle,
    Eigensystem,
    OVERLAP_MIN,
    cluster_eigh,
    eigen_jets,
    first_order_jets,
    gauge_fix,
    recursive_jets,
    symbol_jets,
)
from .stratweyl import IrrepModel, coadjoint_action, commutant_dimension, group_element, on_orbit
from .utils import dagger, polar_unitary, rng_from_seed, unitarity_defect
from .weyl import MatrixSymbol

logger: logging.Logger = logging.getLogger("semiclab")

DEFAULT_DT: Final[float] = 0.01
ENERGY_TOL: Final[float] = 1e-8
UNITARITY_TOL: Final[float] = 1e-8
BLOCK_TOL: Final[float] = 1e-8
ALGEBRA_TOL: Final[float] = 1e-8
ALGEBRA_NODES: Final[int] = 16

Points = np.ndarray  # (B, 2d)


def _coords(points: Points) -> List[np.ndarray]:
  return [points[:, v] for v in range(points.shape[1])]


def _unit(nvars: int, v: int) -> Tuple[int, ...]:
  return tuple(1 if u == v else 0 for u in range(nvars))


def _as_points(start: Union[Sequence[float], np.ndarray], d: int) -> np.ndarray:
  points: np.ndarray = np.atleast_2d(np.asarray(start, dtype=float))
  if points.shape[-1] != 2 * d:
    raise ConfigError(f"Start points need {2 * d} coordinates, got shape {points.shape}")
  return points


# --------------------------------------------------------------------------
# Pointwise generator
# --------------------------------------------------------------------------


@dataclass
class GeneratorSample:
  """Order-1 bundle data and H̃ at a batch of points."""

  velocity: np.ndarray  # (B, 2d): Hamiltonian vector field of λ_ν
  energy: np.ndarray  # (B,)
  projector: np.ndarray  # (B, n, n)
  projector_rate: np.ndarray  # (B, n, n): dP/dt along the flow
  h_tilde: np.ndarray  # (B, n, n)
  berry: np.ndarray
  poisson: np.ndarray
  subprincipal: np.ndarray


def split_generator(lam: Jet, projector: Jet, h0: Jet, h1: np.ndarray) -> Dict[str, np.ndarray]:
  """Berry, Poisson and subprincipal parts of H̃_{νν,1} from order-1 jets."""
  d: int = lam.nvars // 2
  p: np.ndarray = projector.value
  bracket: np.ndarray = poisson(lam, projector).value
  berry: np.ndarray = -1j * (p @ bracket - bracket @ p)
  subprincipal: np.ndarray = p @ h1 @ p
  shifted: np.ndarray = h0.value - lam.value * np.eye(p.shape[-1])
  curvature: np.ndarray = np.zeros_like(p)
  for l in range(d):
    dx: np.ndarray = projector.partial(_unit(2 * d, l))
    dxi: np.ndarray = projector.partial(_unit(2 * d, d + l))
    curvature = curvature + dxi @ shifted @ dx - dx @ shifted @ dxi
  poisson_part: np.ndarray = 0.5j * p @ curvature @ p
  return {
      "berry": berry,
      "poisson": poisson_part,
      "subprincipal": subprincipal,
      "h_tilde": berry + poisson_part + subprincipal,
  }


def assemble_generator(
    lam_nu: Jet, p_nu: Jet, p_mu: np.ndarray, p1_nu: np.ndarray, h0: Jet, h1: np.ndarray,
    same: bool
) -> np.ndarray:
  """H̃_{νμ,1} from its defining formula with H_{ν,1} = (P_ν # H)_1."""
  pv: np.ndarray = p_nu.value
  h_nu1: np.ndarray = p1_nu @ h0.value + pv @ h1 - 0.5j * poisson(p_nu, h0).value
  sign: float = -1.0 if same else 1.0
  curvature: np.ndarray = poisson(p_nu, p_nu).value
  out: np.ndarray = 1j * sign * 0.5 * lam_nu.value * (p_mu @ curvature @ p_mu) + p_mu @ h_nu1 @ p_mu
  if same:
    bracket: np.ndarray = poisson(lam_nu, p_nu).value
    out = out - 1j * (pv @ bracket - bracket @ pv)
  return out


class BranchField:
  """Hamiltonian vector field of λ_ν together with the transport generator."""

  def __init__(self, bundle: EigenBundle, nu: int, h1: Optional[GridFunction] = None):
    if not 0 <= nu < bundle.l:
      raise ConfigError(f"Branch index {nu} out of range for {bundle.l} branches")
    self.bundle: EigenBundle = bundle
    self.nu: int = nu
    self.h1: Optional[GridFunction] = h1
    self.d: int = bundle.grid.d

  def sample(self, points: Points) -> GeneratorSample:
    coords: List[np.ndarray] = _coords(points)
    h0: Jet = self.bundle.hamiltonian.jet_at(coords, 1)
    system: Eigensystem = cluster_eigh(h0.value, self.bundle.multiplicities, self.bundle.gap_tol,
                                       coords)
    lams, projs = first_order_jets(h0, system, self.bundle.multiplicities)
    lam: Jet = lams[self.nu]
    proj: Jet = projs[self.nu]
    d: int = self.d

    grad: np.ndarray = np.stack(
        [lam.partial(_unit(2 * d, v))[..., 0, 0].real for v in range(2 * d)], axis=-1
    )
    velocity: np.ndarray = np.concatenate([grad[:, d:], -grad[:, :d]], axis=-1)
    rate: np.ndarray = np.zeros_like(proj.value)
    for v in range(2 * d):
      rate = rate + proj.partial(_unit(2 * d, v)) * velocity[:, v, None, None]

    h1: np.ndarray = (
        np.zeros_like(proj.value) if self.h1 is None else self.h1.evaluate_at(coords)
    )
    parts: Dict[str, np.ndarray] = split_generator(lam, proj, h0, h1)
    return GeneratorSample(velocity, lam.value[..., 0, 0].real, proj.value, rate, parts["h_tilde"],
                           parts["berry"], parts["poisson"], parts["subprincipal"])


class ConstantGenerator:
  """A position-independent generator along a prescribed straight flow."""

  def __init__(self, matrix: np.ndarray, velocity: Optional[np.ndarray] = None):
    self.matrix: np.ndarray = np.asarray(matrix, dtype=complex)
    self.velocity: Optional[np.ndarray] = velocity

  def sample(self, points: Points) -> GeneratorSample:
    batch: int = points.shape[0]
    n: int = self.matrix.shape[0]
    h: np.ndarray = np.broadcast_to(self.matrix, (batch, n, n))
    velocity: np.ndarray = (
        np.zeros_like(points) if self.velocity is None else np.broadcast_to(self.velocity, points.shape)
    )
    eye: np.ndarray = np.broadcast_to(np.eye(n, dtype=complex), (batch, n, n))
    zero: np.ndarray = np.zeros((batch, n, n), dtype=complex)
    return GeneratorSample(velocity, np.zeros(batch), eye, zero, h, zero, zero, h)


# --------------------------------------------------------------------------
# Flows
# --------------------------------------------------------------------------


@dataclass
class Trajectory:
  """Samples (t, x(t), ξ(t)) of a batch of trajectories of one branch."""

  branch: int
  times: np.ndarray  # (S,)
  points: np.ndarray  # (S, B, 2d)
  dt: float
  energies: np.ndarray  # (S, B)
  integrator: str = "rk4"
  meta: Dict[str, Any] = field(default_factory=dict)

  @property
  def final(self) -> np.ndarray:
    return self.points[-1]

  @property
  def energy_drift(self) -> float:
    return float(np.max(np.abs(self.energies - self.energies[0]))) if self.energies.size else 0.0


def _rk4_stages(rhs: Callable[[Points], Tuple[np.ndarray, Any]], z: Points,
                dt: float) -> Tuple[List[Any], np.ndarray]:
  """One RK4 step; returns the per-stage samples and the next state."""
  samples: List[Any] = []
  k1, s1 = rhs(z)
  samples.append(s1)
  k2, s2 = rhs(z + 0.5 * dt * k1)
  samples.append(s2)
  k3, s3 = rhs(z + 0.5 * dt * k2)
  samples.append(s3)
  k4, s4 = rhs(z + dt * k3)
  samples.append(s4)
  return samples, z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _step_count(T: float, dt: float) -> Tuple[int, float]:
  if dt <= 0:
    raise ConfigError(f"Time step must be positive, got {dt}")
  steps: int = int(math.ceil(abs(T) / dt - 1e-9))
  if steps == 0:
    return 0, 0.0
  return steps, T / steps


def _check_region(grid: PhaseGrid, points: Points, margin: float, t: float) -> None:
  d: int = grid.d
  limits: np.ndarray = np.array([grid.L_x / 2 - margin] * d + [grid.L_xi / 2 - margin] * d)
  outside: np.ndarray = np.any(np.abs(points) > limits, axis=-1)
  if np.any(outside):
    bad: int = int(np.argmax(outside))
    raise TrajectoryEscapeError(
        f"Trajectory {bad} left the trusted region (margin {margin:g}) at t={t:.4g}: "
        f"{describe_node(points[bad])}"
    )


def hamiltonian_flow(
    bundle: EigenBundle,
    nu: int,
    start: Union[Sequence[float], np.ndarray],
    T: float,
    dt: float = DEFAULT_DT,
    margin: float = 0.0,
    check_escape: bool = True,
    h1: Optional[GridFunction] = None,
) -> Trajectory:
  """Integrate ẋ = ∂_ξλ_ν, ξ̇ = −∂_xλ_ν with fixed-step RK4 (negative T runs backwards)."""
  grid: PhaseGrid = bundle.grid
  branch: BranchField = BranchField(bundle, nu, h1)
  z: np.ndarray = _as_points(start, grid.d)
  steps, h = _step_count(T, dt)

  def rhs(points: Points) -> Tuple[np.ndarray, GeneratorSample]:
    sample: GeneratorSample = branch.sample(points)
    return sample.velocity, sample

  points: List[np.ndarray] = [z]
  energies: List[np.ndarray] = []
  if check_escape:
    _check_region(grid, z, margin, 0.0)
  for step in range(steps):
    samples, z = _rk4_stages(rhs, z, h)
    energies.append(samples[0].energy)
    if check_escape:
      _check_region(grid, z, margin, (step + 1) * h)
    points.append(z)
  energies.append(branch.sample(z).energy)

  traj: Trajectory = Trajectory(nu, h * np.arange(steps + 1), np.stack(points), abs(h),
                                np.stack(energies))
  tolerance: float = ENERGY_TOL * max(abs(T), 1.0)
  traj.meta.update({"energy_drift": traj.energy_drift, "energy_tol": tolerance})
  if traj.energy_drift > tolerance:
    logger.warning(f"Energy drift {traj.energy_drift:.3e} exceeds {tolerance:.1e}; reduce dt")
  logger.debug(f"Flow of branch {nu}: {z.shape[0]} starts, T={T:g}, {steps} steps")
  return traj


# --------------------------------------------------------------------------
# Transport
# --------------------------------------------------------------------------


@dataclass
class TransportMatrix:
  """Unitary transport d(t) (full, n × n) or D(t) (reduced, k × k) along a trajectory."""

  trajectory: Trajectory
  values: np.ndarray  # (S, B, m, m)
  form: str
  frames: Optional[np.ndarray] = None  # (S, B, n, k) parallel frames for the reduced form
  unitarity: float = 0.0  # max ‖d*d − Id‖ of the RK4 product before polar projection

  @property
  def times(self) -> np.ndarray:
    return self.trajectory.times

  @property
  def final(self) -> np.ndarray:
    return self.values[-1]


def _propagator(generators: Sequence[np.ndarray], dt: float) -> np.ndarray:
  """RK4 step of Ẏ = −iH(t)Y from Y = Id with H at the four stage points."""
  a: List[np.ndarray] = [-1j * g for g in generators]
  eye: np.ndarray = np.broadcast_to(np.eye(a[0].shape[-1], dtype=complex), a[0].shape)
  k1: np.ndarray = a[0]
  k2: np.ndarray = a[1] @ (eye + 0.5 * dt * k1)
  k3: np.ndarray = a[2] @ (eye + 0.5 * dt * k2)
  k4: np.ndarray = a[3] @ (eye + dt * k3)
  return eye + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def transport_matrix(
    trajectory: Trajectory,
    generator: Any,
    reduced: bool = False,
    frames: Optional[np.ndarray] = None,
) -> TransportMatrix:
  """
  Solve ḋ + iH̃(Φ^t)d = 0, d(0) = Id along a trajectory.

  With reduced=True the frames V (initially `frames`, shape (B, n, k)) are
  parallel-transported, V̇ = ṖV, and D solves Ḋ + iV*H̃V D = 0.
  """
  h: float = float(trajectory.times[1] - trajectory.times[0]) if trajectory.times.size > 1 else 0.0
  batch: int = trajectory.points.shape[1]

  def rhs(points: Points) -> Tuple[np.ndarray, GeneratorSample]:
    sample: GeneratorSample = generator.sample(points)
    return sample.velocity, sample

  first: GeneratorSample = generator.sample(trajectory.points[0])
  n: int = first.h_tilde.shape[-1]
  if reduced:
    if frames is None:
      raise ConfigError("Reduced transport needs initial frames")
    v: np.ndarray = polar_unitary(first.projector @ np.asarray(frames, dtype=complex))[0]
    m: int = v.shape[-1]
  else:
    v = np.zeros((batch, n, 0), dtype=complex)
    m = n
  current: np.ndarray = np.broadcast_to(np.eye(m, dtype=complex), (batch, m, m)).copy()
  raw: np.ndarray = current.copy()
  values: List[np.ndarray] = [current]
  drift: float = 0.0
  frame_list: List[np.ndarray] = [v]

  for step in range(trajectory.times.size - 1):
    z: np.ndarray = trajectory.points[step]
    samples, _ = _rk4_stages(rhs, z, h)
    if reduced:
      # Frames follow the stage points with V̇ = ṖV
      stage_frames: List[np.ndarray] = [v]
      slopes: List[np.ndarray] = []
      for i, s in enumerate(samples):
        slope: np.ndarray = s.projector_rate @ stage_frames[i]
        slopes.append(slope)
        if i < 3:
          stage_frames.append(v + (0.5 if i < 2 else 1.0) * h * slope)
      gens: List[np.ndarray] = [
          dagger(f) @ s.h_tilde @ f for f, s in zip(stage_frames, samples)
      ]
      v_next: np.ndarray = v + h / 6.0 * (slopes[0] + 2 * slopes[1] + 2 * slopes[2] + slopes[3])
    else:
      gens = [s.h_tilde for s in samples]
    increment: np.ndarray = _propagator(gens, h)
    raw = increment @ raw
    drift = max(drift, unitarity_defect(raw))
    current = polar_unitary(increment)[0] @ current
    values.append(current)
    if reduced:
      nxt: GeneratorSample = generator.sample(trajectory.points[step + 1])
      v = polar_unitary(nxt.projector @ v_next)[0]
    frame_list.append(v)

  stacked: np.ndarray = np.stack(values)
  defect: float = unitarity_defect(stacked.reshape((-1, m, m)))
  if defect > UNITARITY_TOL:
    raise UnitarityError(f"Transport unitarity defect {defect:.3e} exceeds {UNITARITY_TOL:g}; reduce dt")
  return TransportMatrix(trajectory, stacked, "reduced" if reduced else "full",
                         np.stack(frame_list) if reduced else None, drift)


def reference_frames(bundle: EigenBundle, nu: int, points: Points) -> np.ndarray:
  """Global gauge V_ν(z) = polar(P_ν(z) W) with W the frame at the grid origin."""
  grid: PhaseGrid = bundle.grid
  origin: Tuple[int, ...] = (grid.N // 2, ) * (2 * grid.d)
  anchor: np.ndarray = bundle.isometries[nu].values[origin]
  system: Eigensystem = bundle.at(_coords(points))
  projected: np.ndarray = system.projectors[nu] @ anchor
  frames, singular = polar_unitary(projected)
  if np.any(singular.min(axis=-1) < OVERLAP_MIN):
    bad: int = int(np.argmin(singular.min(axis=-1)))
    raise GaugeObstructionError(
        f"Reference frame degenerates at {describe_node(points[bad])} for branch {nu}"
    )
  return frames


def transport(
    bundle: EigenBundle,
    nu: int,
    start: Union[Sequence[float], np.ndarray],
    T: float,
    h1: Optional[GridFunction] = None,
    dt: float = DEFAULT_DT,
    margin: float = 0.0,
    check_escape: bool = True,
) -> Tuple[TransportMatrix, TransportMatrix]:
  """Full and reduced transport of branch ν from the given starts."""
  traj: Trajectory = hamiltonian_flow(bundle, nu, start, T, dt, margin, check_escape, h1)
  generator: BranchField = BranchField(bundle, nu, h1)
  full: TransportMatrix = transport_matrix(traj, generator)
  frames: np.ndarray = reference_frames(bundle, nu, traj.points[0])
  reduced: TransportMatrix = transport_matrix(traj, generator, reduced=True, frames=frames)
  return full, reduced


def fixed_gauge_transport(bundle: EigenBundle, reduced: TransportMatrix) -> np.ndarray:
  """D in the global reference gauge: V_ref(Φ^t)* V_par(t) D_par(t)."""
  nu: int = reduced.trajectory.branch
  out: List[np.ndarray] = []
  for step in range(reduced.values.shape[0]):
    ref: np.ndarray = reference_frames(bundle, nu, reduced.trajectory.points[step])
    out.append(dagger(ref) @ reduced.frames[step] @ reduced.values[step])  # type: ignore[index]
  return np.stack(out)


def constant_transport(generator: np.ndarray, t: float) -> np.ndarray:
  """d(t) = exp(−iH̃t) for a position-independent generator."""
  return linalg.expm(-1j * np.asarray(generator, dtype=complex) * t)


# --------------------------------------------------------------------------
# Diagnostics
# --------------------------------------------------------------------------


def fibre_defect(full: TransportMatrix, bundle: EigenBundle) -> float:
  """max_t ‖P(Φ^t z) d P(z) − d P(z)‖: d maps the eigenspace at z onto the one at Φ^t z."""
  nu: int = full.trajectory.branch
  p0: np.ndarray = bundle.at(_coords(full.trajectory.points[0])).projectors[nu]
  worst: float = 0.0
  for step in range(full.values.shape[0]):
    pt: np.ndarray = bundle.at(_coords(full.trajectory.points[step])).projectors[nu]
    dp: np.ndarray = full.values[step] @ p0
    worst = max(worst, float(np.max(np.linalg.norm(pt @ dp - dp, ord=2, axis=(-2, -1)))))
  return worst


def reduced_consistency(full: TransportMatrix, reduced: TransportMatrix) -> float:
  """max_t ‖V*(Φ^t) d(t) V(0) − D(t)‖ with the parallel frames of the reduced run."""
  assert reduced.frames is not None
  worst: float = 0.0
  v0: np.ndarray = reduced.frames[0]
  for step in range(full.values.shape[0]):
    lhs: np.ndarray = dagger(reduced.frames[step]) @ full.values[step] @ v0
    worst = max(worst, float(np.max(np.abs(lhs - reduced.values[step]))))
  return worst


def cocycle_defect(bundle: EigenBundle, nu: int, start: Sequence[float], t1: float, t2: float,
                   h1: Optional[GridFunction] = None, dt: float = DEFAULT_DT) -> Dict[str, float]:
  """Cocycle d(z, t1+t2) = d(Φ^{t1}z, t2) d(z, t1) and inverse d(Φ^t z, −t) = d(z, t)*."""
  generator: BranchField = BranchField(bundle, nu, h1)
  first: Trajectory = hamiltonian_flow(bundle, nu, start, t1, dt, check_escape=False)
  d1: np.ndarray = transport_matrix(first, generator).final
  second: Trajectory = hamiltonian_flow(bundle, nu, first.final, t2, dt, check_escape=False)
  d2: np.ndarray = transport_matrix(second, generator).final
  whole: Trajectory = hamiltonian_flow(bundle, nu, start, t1 + t2, dt, check_escape=False)
  d12: np.ndarray = transport_matrix(whole, generator).final
  back: Trajectory = hamiltonian_flow(bundle, nu, first.final, -t1, dt, check_escape=False)
  d_back: np.ndarray = transport_matrix(back, generator).final
  return {
      "cocycle": float(np.max(np.abs(d12 - d2 @ d1))),
      "inverse": float(np.max(np.abs(d_back - dagger(d1)))),
      "return": float(np.max(np.abs(back.final - np.atleast_2d(start)))),
  }


# --------------------------------------------------------------------------
# Generators on the grid
# --------------------------------------------------------------------------


@dataclass
class TransportGenerator:
  """H̃_{νμ,1} on the grid, with the Berry/Poisson/subprincipal split for ν = μ."""

  nu: int
  mu: int
  h_tilde: GridFunction
  berry: Optional[GridFunction] = None
  poisson: Optional[GridFunction] = None
  subprincipal: Optional[GridFunction] = None
  split_sum: Optional[GridFunction] = None

  def splitting_defect(self) -> float:
    if self.split_sum is None:
      return 0.0
    return float(np.max(np.abs(self.h_tilde.values - self.split_sum.values)))

  def hermiticity_defect(self) -> float:
    values: np.ndarray = self.h_tilde.values
    return float(np.max(np.abs(values - dagger(values))))


def h_tilde(bundle: EigenBundle, h1: Optional[GridFunction], nu: int, mu: int) -> TransportGenerator:
  """Evaluate H̃_{νμ,1} at every node."""
  grid: PhaseGrid = bundle.grid
  h1_field: GridFunction = h1 if h1 is not None else GridFunction(
      grid, np.zeros_like(bundle.hamiltonian.values)
  )
  symbol: MatrixSymbol = MatrixSymbol([bundle.hamiltonian, h1_field])
  h_jets: List[Jet] = symbol_jets(symbol, [1, 0])
  mesh: Tuple[np.ndarray, ...] = grid.mesh()
  lams, projs, _ = eigen_jets(h_jets[0], bundle.multiplicities, bundle.gap_tol, mesh)
  p1: np.ndarray = recursive_jets(h_jets, bundle.multiplicities, nu, 1, 0, bundle.gap_tol, mesh)[1].value

  assembled: np.ndarray = assemble_generator(lams[nu], projs[nu], projs[mu].value, p1, h_jets[0],
                                             h1_field.values, nu == mu)
  result: TransportGenerator = TransportGenerator(nu, mu, GridFunction(grid, assembled))
  if nu == mu:
    parts: Dict[str, np.ndarray] = split_generator(lams[nu], projs[nu], h_jets[0], h1_field.values)
    result.berry = GridFunction(grid, parts["berry"])
    result.poisson = GridFunction(grid, parts["poisson"])
    result.subprincipal = GridFunction(grid, parts["subprincipal"])
    result.split_sum = GridFunction(grid, parts["h_tilde"])
  logger.debug(f"H-tilde ({nu},{mu}): hermiticity defect {result.hermiticity_defect():.2e}")
  return result


# --------------------------------------------------------------------------
# Generated Lie algebra
# --------------------------------------------------------------------------


@dataclass
class AlgebraReport:
  """Lie algebra generated by skew-hermitian samples and the irreducibility verdict."""

  basis: List[np.ndarray]
  k: int
  commutant_dimension: int

  @property
  def dimension(self) -> int:
    return len(self.basis)

  @property
  def irreducible(self) -> bool:
    return self.commutant_dimension == 1


def _real_vector(matrix: np.ndarray) -> np.ndarray:
  return np.concatenate([matrix.real.ravel(), matrix.imag.ravel()])


def _extend(basis: List[np.ndarray], candidate: np.ndarray, tol: float) -> bool:
  vec: np.ndarray = _real_vector(candidate)
  for b in basis:
    bv: np.ndarray = _real_vector(b)
    vec = vec - np.dot(bv, vec) * bv
  norm: float = float(np.linalg.norm(vec))
  if norm <= tol * max(1.0, float(np.linalg.norm(_real_vector(candidate)))):
    return False
  vec = vec / norm
  half: int = vec.size // 2
  k: int = candidate.shape[0]
  basis.append((vec[:half] + 1j * vec[half:]).reshape(k, k))
  return True


def generated_algebra(samples: Sequence[np.ndarray], k: Optional[int] = None,
                      tol: float = ALGEBRA_TOL) -> AlgebraReport:
  """Closure of {iH̃(node)} under commutators, plus the commutant test."""
  mats: List[np.ndarray] = [np.asarray(s, dtype=complex) for s in samples]
  if not mats and k is None:
    raise ConfigError("generated_algebra needs samples or an explicit dimension k")
  k = mats[0].shape[-1] if mats else k
  basis: List[np.ndarray] = []
  for m in mats:
    _extend(basis, 1j * m, tol)

  grown: bool = True
  while grown and len(basis) < k * k:
    grown = False
    current: List[np.ndarray] = list(basis)
    for i in range(len(current)):
      for j in range(i + 1, len(current)):
        if _extend(basis, current[i] @ current[j] - current[j] @ current[i], tol):
          grown = True

  commutant: int = commutant_dimension(basis, tol) if basis else k * k
  logger.debug(f"Generated algebra: dimension {len(basis)}, commutant dimension {commutant}")
  return AlgebraReport(basis, k, commutant)


def branch_algebra(bundle: EigenBundle, nu: int, h1: Optional[GridFunction] = None, seed: Optional[int] = 0,
                   nodes: int = ALGEBRA_NODES) -> AlgebraReport:
  """Algebra generated by the reduced generator V_ν*H̃V_ν at random nodes of the gauge-fixed bundle."""
  fixed: EigenBundle = bundle if bundle.gauge_fixed else gauge_fix(bundle)
  gen: np.ndarray = h_tilde(fixed, h1, nu, nu).h_tilde.values
  iso: np.ndarray = fixed.isometries[nu].values
  n, k = iso.shape[-2:]
  flat_gen: np.ndarray = gen.reshape(-1, n, n)
  flat_iso: np.ndarray = iso.reshape(-1, n, k)
  rng: np.random.Generator = rng_from_seed(seed)
  picks: np.ndarray = rng.choice(flat_gen.shape[0], size=min(nodes, flat_gen.shape[0]), replace=False)
  return generated_algebra([dagger(flat_iso[i]) @ flat_gen[i] @ flat_iso[i] for i in picks], k)


# --------------------------------------------------------------------------
# Skew products
# --------------------------------------------------------------------------


def skew_step_group(
    bundle: EigenBundle,
    nu: int,
    state: Tuple[Sequence[float], np.ndarray],
    t: float,
    irrep: IrrepModel,
    h1: Optional[GridFunction] = None,
    dt: float = DEFAULT_DT,
) -> Tuple[np.ndarray, np.ndarray]:
  """Ỹ^t(z, g) = (Φ^t z, g_ν(z, t) g) with ρ(g_ν) the reduced transport in the reference gauge."""
  start, g = state
  if t == 0:
    return np.atleast_2d(np.asarray(start, dtype=float))[0], group_element(irrep, g)
  full, reduced = transport(bundle, nu, start, t, h1, dt, check_escape=False)
  step: np.ndarray = fixed_gauge_transport(bundle, reduced)[-1, 0]
  return full.trajectory.final[0], group_element(irrep, step) @ group_element(irrep, g)


def skew_step_orbit(
    bundle: EigenBundle,
    nu: int,
    state: Tuple[Sequence[float], np.ndarray],
    t: float,
    irrep: IrrepModel,
    h1: Optional[GridFunction] = None,
    dt: float = DEFAULT_DT,
) -> Tuple[np.ndarray, np.ndarray]:
  """Y^t(z, η) = (Φ^t z, Ad*_{g_ν(z,t)} η)."""
  start, eta = state
  if not on_orbit(irrep, eta):
    raise PreconditionError(f"Point {np.asarray(eta)} is not on the coadjoint orbit of {irrep.name}")
  z, g = skew_step_group(bundle, nu, (start, np.eye(irrep.k)), t, irrep, h1, dt)
  return z, coadjoint_action(irrep, g, eta)


# --------------------------------------------------------------------------
# Egorov symbol
# --------------------------------------------------------------------------


def block_defect(symbol: GridFunction, bundle: EigenBundle) -> float:
  """max-norm of B₀ − Σ_ν P_ν B₀ P_ν."""
  diagonal: np.ndarray = np.zeros_like(symbol.values)
  for p in bundle.projectors:
    diagonal = diagonal + p.values @ symbol.values @ p.values
  return float(np.max(np.abs(symbol.values - diagonal)))


class TransportedSymbol:
  """B(t)₀(z) = Σ_ν d_ν(z,t)* P_ν B₀ P_ν(Φ^t_ν z) d_ν(z,t), evaluated at any points."""

  def __init__(self, observable: GridFunction, bundle: EigenBundle, t: float,
               h1: Optional[GridFunction] = None, dt: float = DEFAULT_DT):
    self.observable: GridFunction = observable
    self.bundle: EigenBundle = bundle
    self.t: float = t
    self.h1: Optional[GridFunction] = h1
    self.dt: float = dt

  def evaluate(self, coords: Sequence[np.ndarray]) -> np.ndarray:
    arrays: List[np.ndarray] = [np.asarray(c, dtype=float) for c in coords]
    batch: Tuple[int, ...] = np.broadcast_shapes(*(a.shape for a in arrays))
    points: np.ndarray = np.stack([np.broadcast_to(a, batch).ravel() for a in arrays], axis=-1)
    if self.t == 0:
      return self.observable.evaluate_at(coords)

    total: Optional[np.ndarray] = None
    for nu in range(self.bundle.l):
      traj: Trajectory = hamiltonian_flow(self.bundle, nu, points, self.t, self.dt,
                                          check_escape=False)
      d: np.ndarray = transport_matrix(traj, BranchField(self.bundle, nu, self.h1)).final
      end: List[np.ndarray] = _coords(traj.final)
      p: np.ndarray = self.bundle.at(end).projectors[nu]
      block: np.ndarray = p @ self.observable.evaluate_at(end) @ p
      term: np.ndarray = dagger(d) @ block @ d
      total = term if total is None else total + term
    return total.reshape(batch + total.shape[-2:])  # type: ignore[union-attr]


def egorov_symbol(observable: Union[MatrixSymbol, GridFunction], bundle: EigenBundle, t: float,
                  h1: Optional[GridFunction] = None, dt: float = DEFAULT_DT) -> GridFunction:
  """Principal symbol of U(t)* op(B) U(t) transported along the branch flows."""
  b0: GridFunction = observable.principal if isinstance(observable, MatrixSymbol) else observable
  defect: float = block_defect(b0, bundle)
  if defect > BLOCK_TOL * max(1.0, b0.max_norm()):
    raise PreconditionError(
        f"Observable is not block-diagonal at leading order (defect {defect:.3e}); it lies "
        f"outside the invariant algebra"
    )
  source: TransportedSymbol = TransportedSymbol(b0, bundle, t, h1, dt)
  values: np.ndarray = source.evaluate(bundle.grid.mesh())
  return GridFunction(bundle.grid, values, source=source)


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------


def write_trajectory_csv(trajectory: Trajectory, path: Union[str, Path]) -> Path:
  """One row per (start, sample): t, coordinates, energy."""
  target: Path = Path(path)
  dim: int = trajectory.points.shape[-1]
  d: int = dim // 2
  names: List[str] = [f"x{l + 1}" for l in range(d)] + [f"xi{l + 1}" for l in range(d)]
  with target.open("w", newline="") as handle:
    writer = csv.writer(handle)
    writer.writerow(["start", "t"] + names + ["energy"])
    for b in range(trajectory.points.shape[1]):
      for s, t in enumerate(trajectory.times):
        writer.writerow([b, f"{t:.10g}"] + [f"{v:.15g}" for v in trajectory.points[s, b]] +
                        [f"{trajectory.energies[s, b]:.15g}"])
  return target


def write_transport_csv(matrix: TransportMatrix, path: Union[str, Path]) -> Path:
  """One row per (start, sample): t, coordinates, unitarity residual, entries of d or D."""
  target: Path = Path(path)
  traj: Trajectory = matrix.trajectory
  m: int = matrix.values.shape[-1]
  entries: List[str] = [f"{part}_{r}{c}" for r in range(m) for c in range(m) for part in ("re", "im")]
  dim: int = traj.points.shape[-1]
  with target.open("w", newline="") as handle:
    writer = csv.writer(handle)
    writer.writerow(["start", "t"] + [f"z{v}" for v in range(dim)] + ["unitarity"] + entries)
    for b in range(matrix.values.shape[1]):
      for s, t in enumerate(traj.times):
        u: np.ndarray = matrix.values[s, b]
        residual: float = float(np.max(np.abs(u.conj().T @ u - np.eye(m))))
        flat: List[str] = []
        for value in u.ravel():
          flat.extend([f"{value.real:.15g}", f"{value.imag:.15g}"])
        writer.writerow([b, f"{t:.10g}"] + [f"{v:.15g}" for v in traj.points[s, b]] +
                        [f"{residual:.3e}"] + flat)
  return target
