"""
Exact quantum evolution of observables against classically transported symbols.

The exact side conjugates op(B) with the propagator of the quantized
Hamiltonian built from its eigenbasis. The classical side quantizes the
transported principal symbol. Errors are operator norms restricted to the
model's trusted energy range, fitted against ħ on a log-log scale.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Final, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, PreconditionError, UnitarityError
from .grid import GridFunction
from .models import ModelInstance, ModelSpec, sweep_instances
from .projections import orthogonalize_projector, riesz_projection
from .stratweyl import (
    IrrepModel,
    SWCalculus,
    build_calculus,
    coadjoint_action,
    group_element,
    irrep_for,
    sw_symbol,
)
from .symbolic import SymbolicMatrix
from .transport import (
    DEFAULT_DT,
    AlgebraReport,
    BranchField,
    branch_algebra,
    block_defect,
    egorov_symbol,
    fixed_gauge_transport,
    hamiltonian_flow,
    reference_frames,
    transport_matrix,
)
from .utils import dagger, loglog_slope, parallel_map, rng_from_seed
from .weyl import DiscretizedOperator, dequantize, quantize

logger: logging.Logger = logging.getLogger("semiclab")

PROPAGATOR_TOL: Final[float] = 1e-10
EXACT_TOL: Final[float] = 1e-8
SLOPE_BAND: Final[float] = 0.3
DEFAULT_SW_NODES: Final[int] = 32


@dataclass
class EgorovReport:
  """Per-ħ Egorov errors with a log-log slope fit."""

  model: str
  t: float
  hbars: List[float]
  errors: List[float]
  slope: float = math.nan
  stderr: float = math.nan
  exact: bool = False
  kind: str = "egorov"
  extra: Dict[str, Any] = field(default_factory=dict)

  def __post_init__(self) -> None:
    if len(self.hbars) != len(self.errors):
      raise ConfigError("hbars and errors must have the same length")
    if any(b >= a for a, b in zip(self.hbars, self.hbars[1:])):
      raise ConfigError(f"hbars must be strictly decreasing, got {self.hbars}")
    if len(self.hbars) < 3:
      logger.warning(f"Egorov report for {self.model} has only {len(self.hbars)} hbar values")

  def fit(self) -> "EgorovReport":
    if self.exact:
      return self
    self.slope, self.stderr = loglog_slope(self.hbars, self.errors)
    return self

  def to_dict(self) -> Dict[str, Any]:
    data: Dict[str, Any] = asdict(self)
    for key in ("slope", "stderr"):
      if isinstance(data[key], float) and math.isnan(data[key]):
        data[key] = None
    return data


def write_report(report: EgorovReport, directory: Union[str, Path], stem: str) -> Tuple[Path, Path]:
  """JSON summary plus a CSV table of ħ against error."""
  target: Path = Path(directory)
  target.mkdir(parents=True, exist_ok=True)
  json_path: Path = target / f"{stem}.json"
  json_path.write_text(json.dumps(report.to_dict(), indent=2, default=float))
  csv_path: Path = target / f"{stem}.csv"
  with csv_path.open("w", newline="") as handle:
    writer = csv.writer(handle)
    writer.writerow(["hbar", "error"])
    for h, e in zip(report.hbars, report.errors):
      writer.writerow([f"{h:.10g}", f"{e:.10g}"])
  return json_path, csv_path


# --------------------------------------------------------------------------
# Exact evolution
# --------------------------------------------------------------------------


def propagator(h_op: DiscretizedOperator, t: float,
               spectrum: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
  """e^{−iHt/ħ} from the eigenbasis of the hermitian operator."""
  if h_op.hermitian_defect() > 1e-10 * max(1.0, float(np.max(np.abs(h_op.matrix)))):
    raise ConfigError(f"Hamiltonian operator is not hermitian (defect {h_op.hermitian_defect():.3e})")
  try:
    energies, vectors = spectrum if spectrum is not None else np.linalg.eigh(h_op.matrix)
  except np.linalg.LinAlgError as e:
    raise UnitarityError(f"Eigensolve of the Hamiltonian failed: {e}") from e
  phases: np.ndarray = np.exp(-1j * energies * t / h_op.grid.hbar)
  unitary: np.ndarray = (vectors * phases) @ vectors.conj().T
  defect: float = float(np.max(np.abs(unitary.conj().T @ unitary - np.eye(unitary.shape[0]))))
  if defect > PROPAGATOR_TOL * max(1.0, math.sqrt(unitary.shape[0])):
    raise UnitarityError(f"Propagator unitarity defect {defect:.3e}")
  return unitary


def evolve_exact(h_op: DiscretizedOperator, b_op: DiscretizedOperator, t: float,
                 spectrum: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> DiscretizedOperator:
  """B(t) = U(t)* B U(t)."""
  if t == 0:
    return b_op
  u: np.ndarray = propagator(h_op, t, spectrum)
  evolved: np.ndarray = u.conj().T @ b_op.matrix @ u
  return DiscretizedOperator(evolved, b_op.grid, b_op.n, hermitian=False)


def _check_time(spec: ModelSpec, t: float) -> None:
  if t < 0:
    raise ConfigError(f"Evolution time must be non-negative, got {t}")
  if t > 2 * spec.period:
    raise ConfigError(
        f"Evolution time {t} exceeds twice the period estimate {spec.period:.4g} of '{spec.id}'"
    )


def _observable(instance: ModelInstance, observable: Union[str, SymbolicMatrix]) -> GridFunction:
  if isinstance(observable, str):
    return instance.observable_field(observable)
  return GridFunction.from_symbolic(instance.grid, observable, hermitian=True)


# --------------------------------------------------------------------------
# Egorov
# --------------------------------------------------------------------------


def egorov_point(instance: ModelInstance, observable: Union[str, SymbolicMatrix], t: float,
                 dt: float = DEFAULT_DT, block_order: Optional[int] = None) -> Dict[str, float]:
  """Error of op(B(t)₀) against U* op(B) U at one ħ, plus the off-diagonal block size."""
  b0: GridFunction = _observable(instance, observable)
  exact: DiscretizedOperator = evolve_exact(instance.operator, quantize(b0), t, instance.spectrum)
  classical: GridFunction = egorov_symbol(b0, instance.bundle, t, instance.h1, dt)
  error: float = instance.trusted_norm(exact.matrix - quantize(classical).matrix)
  result: Dict[str, float] = {"hbar": instance.hbar, "error": error}

  if block_order is not None and instance.bundle.l > 1:
    projectors: List[np.ndarray] = [
        orthogonalize_projector(
            quantize(riesz_projection(instance.symbol, instance.spec.multiplicities, nu,
                                      block_order).symbol)
        ).matrix for nu in range(instance.bundle.l)
    ]
    off: float = 0.0
    for a, pa in enumerate(projectors):
      for b, pb in enumerate(projectors):
        if a != b:
          off = max(off, instance.trusted_norm(pa @ exact.matrix @ pb))
    result["off_block"] = off
  logger.debug(f"Egorov error at hbar={instance.hbar:.4g}: {error:.3e}")
  return result


def egorov_error(
    spec: ModelSpec,
    observable: Union[str, SymbolicMatrix],
    t: float,
    sizes: Optional[Sequence[int]] = None,
    params: Optional[Dict[str, float]] = None,
    dt: float = DEFAULT_DT,
    block_order: Optional[int] = 0,
    workers: int = 1,
) -> EgorovReport:
  """Egorov errors over an ħ sweep with a log-log slope fit."""
  _check_time(spec, t)
  instances: List[ModelInstance] = sweep_instances(spec, sizes, params)
  first: ModelInstance = instances[0]
  b0: GridFunction = _observable(first, observable)
  defect: float = block_defect(b0, first.bundle)
  if defect > 1e-8 * max(1.0, b0.max_norm()):
    raise PreconditionError(
        f"Observable is not block-diagonal at leading order (defect {defect:.3e}); it lies outside "
        f"the invariant algebra"
    )

  points: List[Dict[str, float]] = parallel_map(
      lambda inst: egorov_point(inst, observable, t, dt, block_order), instances, workers
  )
  exact_case: bool = spec.quadratic and spec.n == 1
  report: EgorovReport = EgorovReport(
      spec.id, t, [p["hbar"] for p in points], [p["error"] for p in points], exact=exact_case
  ).fit()
  if all("off_block" in p for p in points):
    off: List[float] = [p["off_block"] for p in points]
    report.extra["off_block"] = off
    report.extra["off_block_slope"], _ = loglog_slope(report.hbars, off)
  if exact_case:
    report.extra["max_error"] = max(report.errors)
  logger.debug(f"Egorov slope for {spec.id} at t={t}: {report.slope}")
  return report


# --------------------------------------------------------------------------
# Stratonovich–Weyl Egorov
# --------------------------------------------------------------------------


def _node_sample(instance: ModelInstance, count: int, seed: Optional[int]) -> np.ndarray:
  """Random grid nodes inside the trusted box, as (B, 2d) coordinates."""
  grid = instance.grid
  mesh: Tuple[np.ndarray, ...] = tuple(np.meshgrid(*[grid.axis(v) for v in range(2 * grid.d)],
                                                   indexing="ij"))
  points: np.ndarray = np.stack([m.ravel() for m in mesh], axis=-1)
  margin: float = instance.spec.margin
  limits: np.ndarray = np.array([grid.L_x / 2 - margin] * grid.d + [grid.L_xi / 2 - margin] * grid.d)
  inside: np.ndarray = points[np.all(np.abs(points) < limits, axis=-1)]
  rng: np.random.Generator = rng_from_seed(seed)
  if inside.shape[0] > count:
    inside = inside[rng.choice(inside.shape[0], size=count, replace=False)]
  return inside


def _block_symbols(calculus: SWCalculus, blocks: np.ndarray) -> np.ndarray:
  """symb^SW of k × k blocks at every orbit point, shape (B, M)."""
  return np.stack([sw_symbol(calculus, block) for block in blocks])


def _transported_orbit_symbols(calculus: SWCalculus, irrep: IrrepModel, blocks_end: np.ndarray,
                               transport: np.ndarray) -> np.ndarray:
  """symb^SW[b(Φz)](Ad*_D η) for every start and orbit point."""
  out: List[np.ndarray] = []
  for block, d in zip(blocks_end, transport):
    g: np.ndarray = group_element(irrep, d)
    moved: np.ndarray = np.stack([coadjoint_action(irrep, g, eta) for eta in calculus.orbit.points])
    out.append(sw_symbol(calculus, block, moved))
  return np.stack(out)


def sw_egorov_point(instance: ModelInstance, observable: Union[str, SymbolicMatrix], t: float, nu: int,
                    calculus: SWCalculus, nodes: int = DEFAULT_SW_NODES, seed: Optional[int] = 0,
                    dt: float = DEFAULT_DT) -> Dict[str, float]:
  """Pointwise SW-Egorov error on grid × orbit nodes at one ħ."""
  irrep: IrrepModel = calculus.irrep
  b0: GridFunction = _observable(instance, observable)
  bundle = instance.bundle
  starts: np.ndarray = _node_sample(instance, nodes, seed)

  # Classical route: transport to Φ^t z and the reduced transport in the reference gauge
  traj = hamiltonian_flow(bundle, nu, starts, t, dt, check_escape=False)
  generator: BranchField = BranchField(bundle, nu, instance.h1)
  frames0: np.ndarray = reference_frames(bundle, nu, starts)
  reduced = transport_matrix(traj, generator, reduced=True, frames=frames0)
  d_fixed: np.ndarray = fixed_gauge_transport(bundle, reduced)[-1]
  end: List[np.ndarray] = [traj.final[:, v] for v in range(traj.final.shape[1])]
  frames_end: np.ndarray = reference_frames(bundle, nu, traj.final)
  blocks_end: np.ndarray = dagger(frames_end) @ b0.evaluate_at(end) @ frames_end
  rhs: np.ndarray = _transported_orbit_symbols(calculus, irrep, blocks_end, d_fixed)

  # Quantum route: dequantized exact evolution, block at z, SW symbol
  exact: DiscretizedOperator = evolve_exact(instance.operator, quantize(b0), t, instance.spectrum)
  evolved: GridFunction = dequantize(exact).principal
  start_coords: List[np.ndarray] = [starts[:, v] for v in range(starts.shape[1])]
  at_start: np.ndarray = evolved.evaluate_at(start_coords)
  lhs: np.ndarray = _block_symbols(calculus, dagger(frames0) @ at_start @ frames0)

  # Classical transport conjugated in SW form, bypassing quantization
  classical: GridFunction = egorov_symbol(b0, bundle, t, instance.h1, dt)
  transported: np.ndarray = classical.source.evaluate(start_coords)  # type: ignore[union-attr]
  direct: np.ndarray = _block_symbols(calculus, dagger(frames0) @ transported @ frames0)

  return {
      "hbar": instance.hbar,
      "error": float(np.max(np.abs(lhs - rhs))),
      "consistency": float(np.max(np.abs(direct - rhs))),
  }


def sw_egorov_error(
    spec: ModelSpec,
    observable: Union[str, SymbolicMatrix],
    t: float,
    nu: int = 1,
    sizes: Optional[Sequence[int]] = None,
    params: Optional[Dict[str, float]] = None,
    nodes: int = DEFAULT_SW_NODES,
    seed: Optional[int] = 0,
    dt: float = DEFAULT_DT,
    workers: int = 1,
) -> EgorovReport:
  """SW symbols of the evolved ν-block against b_{0,ν}∘Y^t over an ħ sweep."""
  _check_time(spec, t)
  instances: List[ModelInstance] = sweep_instances(spec, sizes, params)
  if not 0 <= nu < len(spec.multiplicities):
    raise ConfigError(f"Branch index {nu} out of range for model '{spec.id}'")
  algebra: Dict[str, Any] = {"irreducible": True, "algebra_dimension": 1}
  if spec.multiplicities[nu] > 1:
    generated: AlgebraReport = branch_algebra(instances[0].bundle, nu, instances[0].h1, seed)
    algebra = {"irreducible": generated.irreducible, "algebra_dimension": generated.dimension}
    if not generated.irreducible:
      raise PreconditionError(
          f"Reduced transport of branch {nu} of '{spec.id}' generates a reducible algebra "
          f"(dimension {generated.dimension}, commutant {generated.commutant_dimension}); "
          f"the skew-product flow does not act irreducibly on the orbit"
      )
  irrep: IrrepModel = irrep_for(spec.group, spec.multiplicities[nu])
  calculus: SWCalculus = build_calculus(irrep)
  b0: GridFunction = _observable(instances[0], observable)
  defect: float = block_defect(b0, instances[0].bundle)
  if defect > 1e-8 * max(1.0, b0.max_norm()):
    raise PreconditionError(f"Observable is not block-diagonal at leading order (defect {defect:.3e})")

  points: List[Dict[str, float]] = parallel_map(
      lambda inst: sw_egorov_point(inst, observable, t, nu, calculus, nodes, seed, dt), instances,
      workers
  )
  report: EgorovReport = EgorovReport(spec.id, t, [p["hbar"] for p in points],
                                      [p["error"] for p in points], kind="sw-egorov").fit()
  report.extra["consistency"] = max(p["consistency"] for p in points)
  report.extra["irrep"] = irrep.name
  report.extra.update(algebra)
  return report
