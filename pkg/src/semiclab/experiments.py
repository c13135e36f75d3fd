"""
Experiment runners.

Each kind maps a validated ExperimentConfig to measured quantities, CSV/JSON
artifacts in the run directory and a list of pass/fail criteria. Criterion
failures are data, never exceptions.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Final, List, Optional, Sequence, Tuple

import numpy as np

from .config import MAX_PROJECTION_ORDER, ExperimentConfig
from .egorov import (
    EXACT_TOL,
    EgorovReport,
    egorov_error,
    sw_egorov_error,
    write_report,
)
from .ergodicity import (
    BlockObservable,
    LevelSurfaceMeasure,
    QuasimodeSet,
    SpectralData,
    SzegoReport,
    block_symbol_field,
    delta_bounds,
    eigensolve_window,
    ergodic_time_average,
    group_orbit_equivalence,
    haar_orbit_moments,
    level_surfaces,
    quasimodes,
    scalar_wigner,
    shell_fraction,
    surface_ensemble,
    szego_check,
    transport_series,
    variance_s2,
)
from .errors import ClusterError, GaugeObstructionError, PreconditionError
from .grid import GridFunction, quantum_grid, random_trig_symbol
from .heatmap import save_density, save_histogram
from .identities import identity_battery
from .logger import print_processing_step, print_progress_bar
from .models import ModelInstance, ModelSpec, get_model, sweep_instances
from .projections import (
    EigenBundle,
    gauge_fix,
    orthogonalize_projector,
    recursive_projection,
    resolution_defect,
    riesz_projection,
    write_bundle,
)
from .stratweyl import (
    IrrepModel,
    SWCalculus,
    build_calculus,
    calculus_defects,
    irrep_for,
    spin_matrices,
    su2_irrep,
    sw_symbol,
    u1_irrep,
    write_orbit_csv,
)
from .storage import Criterion, RunDirectory, csv_name
from .transport import (
    branch_algebra,
    cocycle_defect,
    fibre_defect,
    generated_algebra,
    h_tilde,
    reduced_consistency,
    transport,
    write_trajectory_csv,
    write_transport_csv,
)
from .utils import loglog_slope, parallel_map, rng_from_seed
from .weyl import MatrixSymbol, moyal_product, quantize

logger: logging.Logger = logging.getLogger("semiclab")

SLOPE_MARGIN: Final[float] = 0.7
IDEMPOTENT_TOL: Final[float] = 1e-12
METHOD_TOL: Final[float] = 1e-8
RESOLUTION_TOL: Final[float] = 1e-8
CLUSTER_FACTOR: Final[float] = 5.0
UNITARITY_LIMIT: Final[float] = 1e-8
COCYCLE_LIMIT: Final[float] = 1e-7
SPLIT_LIMIT: Final[float] = 1e-10
SW_AXIOM_TOL: Final[float] = 1e-9
SIGMA_Z_TOL: Final[float] = 1e-10
CONSISTENCY_TOL: Final[float] = 1e-7
WEYL_COUNT_TOL: Final[float] = 0.15
SZEGO_TOL: Final[float] = 0.10
NORM_SUM_TOL: Final[float] = 1e-6
FRACTION_SLACK: Final[float] = 0.05
EQUIVALENCE_TOL: Final[float] = 1e-3
SPREAD_FLOOR: Final[float] = 1e-3

MOYAL_SIZES: Final[Tuple[int, ...]] = (32, 64, 128, 256)
MOYAL_PAIRS: Final[int] = 5
EGOROV_TIMES: Final[Tuple[float, ...]] = (0.5, 1.0)
ERGODIC_TIMES: Final[Tuple[float, ...]] = (25.0, 50.0, 100.0)
APPENDIX_TIME: Final[float] = 50.0
MAX_SAMPLES: Final[int] = 500
HAAR_SAMPLES: Final[int] = 4096

CHAOTIC_MODELS: Final[Tuple[str, ...]] = ("quartic", )
INTEGRABLE_MODELS: Final[Tuple[str, ...]] = ("anisotropic", )
WEYL_COUNT_MODELS: Final[Tuple[str, ...]] = ("harmonic", "pauli", "dirac")


@dataclass
class ExperimentResult:
  """Summary scalars, tables and verdicts of one run."""

  kind: str
  model: str
  summary: Dict[str, Any] = field(default_factory=dict)
  criteria: List[Criterion] = field(default_factory=list)
  tables: Dict[str, Tuple[List[str], List[List[Any]]]] = field(default_factory=dict)

  @property
  def passed(self) -> bool:
    return all(c.passed for c in self.criteria)

  def check(self, name: str, value: float, threshold: float, at_least: bool = False,
            detail: str = "") -> Criterion:
    """Record value ≤ threshold (or ≥ with at_least); NaN always fails."""
    ok: bool = not math.isnan(value) and (value >= threshold if at_least else value <= threshold)
    criterion: Criterion = Criterion(name, ok, value, threshold, detail)
    self.criteria.append(criterion)
    return criterion

  def flag(self, name: str, passed: bool, detail: str = "") -> Criterion:
    criterion: Criterion = Criterion(name, bool(passed), detail=detail)
    self.criteria.append(criterion)
    return criterion

  def table(self, name: str, headers: Sequence[str], rows: List[List[Any]]) -> None:
    self.tables[name] = (list(headers), rows)


# --------------------------------------------------------------------------
# Shared helpers
# --------------------------------------------------------------------------


def _spec(config: ExperimentConfig) -> ModelSpec:
  return get_model(config.model)


def _instances(config: ExperimentConfig) -> List[ModelInstance]:
  return sweep_instances(_spec(config), config.resolved_sizes() or None, config.params)


def _first_instance(config: ExperimentConfig) -> ModelInstance:
  spec: ModelSpec = _spec(config)
  sizes: List[int] = config.resolved_sizes()
  choice = spec.choice_for(sizes[0]) if sizes else spec.sweep[0]
  return spec.instance(choice, config.params)


def _order(config: ExperimentConfig, default: int) -> int:
  return default if config.projection_order is None else config.projection_order


def _branch(config: ExperimentConfig, spec: ModelSpec) -> int:
  return config.branch if config.branch < len(spec.multiplicities) else 0


def _block_observables(config: ExperimentConfig, spec: ModelSpec) -> List[str]:
  """Observables in the invariant algebra: everything except the off-diagonal observable."""
  if config.observables:
    return list(config.observables)
  names: List[str] = [o for o in spec.observables if o not in ("identity", "off_diagonal")]
  if spec.gap is not None and spec.n > 2:
    names.append("spin")
  return names


def _window(config: ExperimentConfig, spec: ModelSpec) -> Tuple[float, float]:
  E: float = config.energy if config.energy is not None else spec.window[0]
  omega: float = config.omega if config.omega is not None else spec.window[1]
  return E, omega


def _projector_ops(instance: ModelInstance, J: int) -> List[np.ndarray]:
  """Orthogonalized Riesz projectors of every branch (the identity for a single branch)."""
  if instance.bundle.l == 1:
    return [np.eye(instance.operator.dim, dtype=complex)]
  return [
      orthogonalize_projector(
          quantize(riesz_projection(instance.symbol, instance.spec.multiplicities, nu, J).symbol)
      ).matrix for nu in range(instance.bundle.l)
  ]


def _calculus(spec: ModelSpec, nu: int) -> SWCalculus:
  return build_calculus(irrep_for(spec.group, spec.multiplicities[nu]))


def _slope(hbars: Sequence[float], values: Sequence[float]) -> float:
  if len(hbars) < 2:
    return math.nan
  return loglog_slope(hbars, values)[0]


def _strictly_decreasing(values: Sequence[float]) -> bool:
  return len(values) > 1 and all(b < a for a, b in zip(values, values[1:]))


# --------------------------------------------------------------------------
# Symbol calculus and projections
# --------------------------------------------------------------------------


def run_moyal(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """‖op(A)op(B) − op(A #_K B)‖ against ħ for random band-limited pairs."""
  result: ExperimentResult = ExperimentResult("moyal", config.model)
  rng: np.random.Generator = rng_from_seed(config.seed)
  sizes: List[int] = sorted(config.resolved_sizes() or MOYAL_SIZES)
  orders: List[int] = list(range(config.moyal_order + 1))
  pairs = [(random_trig_symbol(1, 2, rng), random_trig_symbol(1, 2, rng)) for _ in range(MOYAL_PAIRS)]

  def point(N: int) -> Dict[str, Any]:
    grid = quantum_grid(1, N, 2 * math.pi, 2 * math.pi)
    errors: List[List[float]] = []
    for sa, sb in pairs:
      a: MatrixSymbol = MatrixSymbol([GridFunction.from_symbolic(grid, sa)])
      b: MatrixSymbol = MatrixSymbol([GridFunction.from_symbolic(grid, sb)])
      product: np.ndarray = quantize(a).matrix @ quantize(b).matrix
      errors.append([
          float(np.linalg.norm(product - quantize(moyal_product(a, b, K)).matrix, 2)) for K in orders
      ])
    return {"hbar": grid.hbar, "errors": errors}

  points: List[Dict[str, Any]] = parallel_map(point, sizes, config.workers)
  points.sort(key=lambda p: -p["hbar"])
  hbars: List[float] = [p["hbar"] for p in points]
  rows: List[List[Any]] = []
  slopes: Dict[str, float] = {}
  for i in range(MOYAL_PAIRS):
    for k_idx, K in enumerate(orders):
      series: List[float] = [p["errors"][i][k_idx] for p in points]
      rows.extend([[i, K, h, e] for h, e in zip(hbars, series)])
      slope: float = _slope(hbars, series)
      slopes[f"pair{i}_K{K}"] = slope
      result.check(f"moyal slope pair {i}, K={K}", slope, K + SLOPE_MARGIN, at_least=True)
  result.summary.update({"hbars": hbars, "orders": orders, "slopes": slopes})
  result.table(csv_name("torus", "moyal"), ["pair", "K", "hbar", "error"], rows)
  return result


def _projection_point(instance: ModelInstance, orders: Sequence[int]) -> Dict[str, Any]:
  out: Dict[str, Any] = {"hbar": instance.hbar, "rows": [], "orth": []}
  h_op: np.ndarray = instance.operator.matrix
  for J in orders:
    for nu in range(instance.bundle.l):
      p = riesz_projection(instance.symbol, instance.spec.multiplicities, nu, J)
      op: np.ndarray = quantize(p.symbol).matrix
      idem: float = instance.trusted_norm(op @ op - op)
      comm: float = instance.trusted_norm(h_op @ op - op @ h_op)
      out["rows"].append([J, nu, idem, comm])
      if J == orders[-1]:
        try:
          exact = orthogonalize_projector(quantize(p.symbol))
        except ClusterError as e:
          out["orth"].append({"nu": nu, "error": str(e)})
          continue
        proj: np.ndarray = exact.matrix
        out["orth"].append({
            "nu": nu,
            "idempotency": float(np.max(np.abs(proj @ proj - proj))),
            "hermiticity": float(np.max(np.abs(proj - proj.conj().T))),
            "distance": float(np.linalg.norm(proj - op, 2)),
            "radius": exact.meta["cluster_radius"],
        })
  return out


def run_projections(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """Projection residual scaling, Riesz against recursion, resolution of identity, exact projectors."""
  spec: ModelSpec = _spec(config)
  result: ExperimentResult = ExperimentResult("projections", spec.id)
  if len(spec.multiplicities) < 2:
    raise PreconditionError(f"Model '{spec.id}' has a single branch; there is nothing to project")
  instances: List[ModelInstance] = _instances(config)
  top: int = _order(config, 1)
  orders: List[int] = list(range(top + 1))

  # Method agreement and resolution of identity are grid-level statements
  first: ModelInstance = instances[0]
  method_gap: float = 0.0
  riesz_all: List[MatrixSymbol] = []
  for nu in range(first.bundle.l):
    riesz = riesz_projection(first.symbol, spec.multiplicities, nu, top).symbol
    recursion = recursive_projection(first.symbol, spec.multiplicities, nu, top).symbol
    riesz_all.append(riesz)
    for a, b in zip(riesz.coefficients, recursion.coefficients):
      method_gap = max(method_gap, float(np.max(np.abs(a.values - b.values))))
  resolution: List[float] = resolution_defect(riesz_all)
  result.check("riesz vs recursion", method_gap, METHOD_TOL)
  result.check("resolution of identity", max(resolution), RESOLUTION_TOL)

  points: List[Dict[str, Any]] = parallel_map(lambda inst: _projection_point(inst, orders), instances,
                                              config.workers)
  hbars: List[float] = [p["hbar"] for p in points]
  rows: List[List[Any]] = [[p["hbar"]] + r for p in points for r in p["rows"]]
  slopes: Dict[str, float] = {}
  for J in orders:
    for nu in range(first.bundle.l):
      for col, label in ((2, "idempotency"), (3, "commutator")):
        series: List[float] = [r[col] for p in points for r in p["rows"] if r[0] == J and r[1] == nu]
        slope: float = _slope(hbars, series)
        slopes[f"{label}_J{J}_nu{nu}"] = slope
        result.check(f"{label} slope J={J}, branch {nu}", slope, J + SLOPE_MARGIN, at_least=True)
  for p in points:
    for o in p["orth"]:
      tag: str = f"hbar={p['hbar']:.4g}, branch {o['nu']}"
      if "error" in o:
        result.flag(f"exact projector ({tag})", False, o["error"])
        continue
      result.check(f"exact projector idempotent ({tag})", max(o["idempotency"], o["hermiticity"]),
                   IDEMPOTENT_TOL)
      result.check(f"exact projector distance ({tag})", o["distance"],
                   CLUSTER_FACTOR * max(o["radius"], 1e-15))

  try:
    fixed: EigenBundle = gauge_fix(instances[-1].bundle)
    write_bundle(fixed, run.file(f"{spec.id}_bundle.bin"))
    result.summary["gauge"] = "fixed"
  except GaugeObstructionError as e:
    logger.warning(f"Gauge fixing failed: {e}")
    result.summary["gauge"] = str(e)

  result.summary.update({
      "hbars": hbars,
      "orders": orders,
      "slopes": slopes,
      "method_gap": method_gap,
      "resolution": resolution,
      "orthogonalized": [p["orth"] for p in points],
  })
  result.table(csv_name(spec.id, "projections"), ["hbar", "J", "branch", "idempotency", "commutator"], rows)
  return result


def run_spectral_id(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """‖𝒫_< − 1_{(−∞,λ)}(op(H))‖ for the lowest branch against ħ."""
  spec: ModelSpec = _spec(config)
  result: ExperimentResult = ExperimentResult("spectral-id", spec.id)
  if len(spec.multiplicities) < 2:
    raise PreconditionError(f"Model '{spec.id}' has a single branch; spectral identification is empty")
  J: int = _order(config, MAX_PROJECTION_ORDER)

  def point(instance: ModelInstance) -> Tuple[float, float]:
    bundle: EigenBundle = instance.bundle
    top: float = float(np.max(bundle.eigenvalues[0].values.real))
    bottom: float = float(np.min(bundle.eigenvalues[1].values.real))
    if top >= bottom:
      raise PreconditionError(
          f"Branches of '{spec.id}' overlap in energy (max lambda_0 = {top:.4g} >= min lambda_1 = "
          f"{bottom:.4g}); spectral identification needs a uniform gap"
      )
    threshold: float = 0.5 * (top + bottom)
    lower: np.ndarray = orthogonalize_projector(
        quantize(riesz_projection(instance.symbol, spec.multiplicities, 0, J).symbol)
    ).matrix
    energies, vectors = instance.spectrum
    below: np.ndarray = vectors[:, energies < threshold]
    return instance.hbar, instance.trusted_norm(lower - below @ below.conj().T)

  points: List[Tuple[float, float]] = parallel_map(point, _instances(config), config.workers)
  hbars: List[float] = [h for h, _ in points]
  errors: List[float] = [e for _, e in points]
  slope: float = _slope(hbars, errors)
  result.check(f"spectral identification slope (J={J})", slope, J - 0.3, at_least=True)
  result.summary.update({"J": J, "hbars": hbars, "errors": errors, "slope": slope})
  result.table(csv_name(spec.id, "spectral_id"), ["hbar", "error"], [list(p) for p in points])
  return result


def run_identities(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """The Poisson-bracket relations on random smooth fields in one and two degrees of freedom."""
  result: ExperimentResult = ExperimentResult("identities", config.model)
  rng: np.random.Generator = rng_from_seed(config.seed)
  rows: List[List[Any]] = []
  for d in (1, 2):
    report = identity_battery(rng, d=d)
    for name, defect in report.defects.items():
      rows.append([d, name, defect])
      result.check(f"{name} (d={d})", defect, report.tol)
    result.summary[f"d{d}"] = report.defects
  result.table("bracket_identities.csv", ["d", "relation", "defect"], rows)
  return result


# --------------------------------------------------------------------------
# Transport and Egorov
# --------------------------------------------------------------------------


def run_transport(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """Unitarity, fibre invariance, cocycle and generator battery along the model's trajectory."""
  spec: ModelSpec = _spec(config)
  result: ExperimentResult = ExperimentResult("transport", spec.id)
  instance: ModelInstance = _first_instance(config)
  bundle: EigenBundle = instance.bundle
  T: float = config.time if config.time is not None else 1.0
  start: Tuple[float, ...] = spec.start

  for nu in range(bundle.l):
    tag: str = f"branch {nu}"
    full, reduced = transport(bundle, nu, start, T, instance.h1, config.dt, spec.margin)
    cocycle: Dict[str, float] = cocycle_defect(bundle, nu, start, T / 2, T / 2, instance.h1, config.dt)
    gen = h_tilde(bundle, instance.h1, nu, nu)
    values: Dict[str, float] = {
        "unitarity_full": full.unitarity,
        "unitarity_reduced": reduced.unitarity,
        "fibre": fibre_defect(full, bundle),
        "reduced_consistency": reduced_consistency(full, reduced),
        "cocycle": cocycle["cocycle"],
        "inverse": cocycle["inverse"],
        "splitting": gen.splitting_defect(),
        "hermiticity": gen.hermiticity_defect(),
        "energy_drift": full.trajectory.energy_drift,
    }
    result.check(f"unitarity ({tag})", max(values["unitarity_full"], values["unitarity_reduced"]),
                 UNITARITY_LIMIT)
    result.check(f"fibre invariance ({tag})", values["fibre"], COCYCLE_LIMIT)
    result.check(f"reduced consistency ({tag})", values["reduced_consistency"], COCYCLE_LIMIT)
    result.check(f"cocycle ({tag})", values["cocycle"], COCYCLE_LIMIT)
    result.check(f"inverse relation ({tag})", values["inverse"], COCYCLE_LIMIT)
    result.check(f"generator splitting ({tag})", values["splitting"], SPLIT_LIMIT)
    result.check(f"generator hermiticity ({tag})", values["hermiticity"], SPLIT_LIMIT)
    result.check(f"energy drift ({tag})", values["energy_drift"], full.trajectory.meta["energy_tol"])
    for mu in range(bundle.l):
      if mu != nu:
        values[f"offdiagonal_hermiticity_{mu}"] = h_tilde(bundle, instance.h1, nu, mu).hermiticity_defect()

    if bundle.k(nu) > 1:
      values.update(_algebra_check(bundle, instance, nu, config.seed))
      if spec.group == "su2":
        result.flag(f"irreducible transport ({tag})", bool(values["irreducible"]),
                    f"algebra dimension {values['algebra_dimension']}")
    result.summary[tag] = values

    write_trajectory_csv(full.trajectory, run.file(csv_name(spec.id, f"trajectory_b{nu}", instance.hbar)))
    write_transport_csv(reduced, run.file(csv_name(spec.id, f"transport_b{nu}", instance.hbar)))
  return result


def _algebra_check(bundle: EigenBundle, instance: ModelInstance, nu: int, seed: int) -> Dict[str, Any]:
  """Generated Lie algebra of the reduced generator on random nodes of a gauge-fixed bundle."""
  try:
    report = branch_algebra(bundle, nu, instance.h1, seed)
  except GaugeObstructionError as e:
    logger.warning(f"Algebra check skipped: {e}")
    return {"irreducible": False, "algebra_dimension": 0}
  return {"irreducible": report.irreducible, "algebra_dimension": report.dimension}


def _egorov_rows(report: EgorovReport) -> List[List[Any]]:
  return [[report.t, h, e] for h, e in zip(report.hbars, report.errors)]


def run_egorov(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """Egorov errors over the ħ sweep for every block-diagonal observable and time."""
  spec: ModelSpec = _spec(config)
  result: ExperimentResult = ExperimentResult("egorov", spec.id)
  times: List[float] = list(config.times or EGOROV_TIMES)
  reports: List[Dict[str, Any]] = []
  for name in _block_observables(config, spec):
    for t in times:
      report: EgorovReport = egorov_error(spec, name, t, config.resolved_sizes() or None, config.params,
                                          config.dt, _order(config, 0), config.workers)
      stem: str = csv_name(spec.id, f"egorov_{name}_t{t:g}")[:-4]
      for path in write_report(report, run.path, stem):
        run.adopt(path)
      label: str = f"{name}, t={t:g}"
      if report.exact:
        result.check(f"exact Egorov ({label})", report.extra["max_error"], EXACT_TOL)
      else:
        result.check(f"Egorov slope ({label})", report.slope, SLOPE_MARGIN, at_least=True)
      if "off_block_slope" in report.extra:
        result.check(f"time-block preservation ({label})", report.extra["off_block_slope"],
                     _order(config, 0) + SLOPE_MARGIN, at_least=True)
      reports.append({"observable": name, **report.to_dict()})
  result.summary["reports"] = reports
  return result


def run_sw_egorov(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """Pointwise SW-Egorov errors on grid × orbit nodes and the classical consistency route."""
  spec: ModelSpec = _spec(config)
  result: ExperimentResult = ExperimentResult("sw-egorov", spec.id)
  t: float = config.time if config.time is not None else 1.0
  nu: int = _branch(config, spec)
  reports: List[Dict[str, Any]] = []
  for name in _block_observables(config, spec):
    report: EgorovReport = sw_egorov_error(spec, name, t, nu, config.resolved_sizes() or None,
                                           config.params, seed=config.seed, dt=config.dt,
                                           workers=config.workers)
    for path in write_report(report, run.path, csv_name(spec.id, f"sw_egorov_{name}_t{t:g}")[:-4]):
      run.adopt(path)
    result.check(f"SW-Egorov slope ({name})", report.slope, SLOPE_MARGIN, at_least=True)
    result.check(f"SW-Egorov consistency ({name})", report.extra["consistency"], CONSISTENCY_TOL)
    result.flag(f"irreducible transport ({name})", bool(report.extra["irreducible"]),
                f"algebra dimension {report.extra['algebra_dimension']}")
    reports.append({"observable": name, **report.to_dict()})
  result.summary["reports"] = reports
  return result


# --------------------------------------------------------------------------
# Stratonovich–Weyl calculus
# --------------------------------------------------------------------------


def run_sw_axioms(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """Calculus axioms for U(1) and the configured SU(2) spin, plus the spin-½ closed form."""
  result: ExperimentResult = ExperimentResult("sw-axioms", config.model)
  rng: np.random.Generator = rng_from_seed(config.seed)
  irreps: List[IrrepModel] = [u1_irrep()]
  if config.group == "su2":
    irreps.append(su2_irrep(config.spin))
  rows: List[List[Any]] = []
  for irrep in irreps:
    calculus: SWCalculus = build_calculus(irrep)
    defects: Dict[str, float] = calculus_defects(calculus, rng, samples=20)
    for name, value in defects.items():
      rows.append([irrep.name, name, value])
      result.check(f"{name} ({irrep.name})", value, SW_AXIOM_TOL)
    result.summary[irrep.name] = defects
    write_orbit_csv(calculus, run.file(f"orbit_{irrep.name.replace('/', '_')}.csv"))
    if irrep.group == "su2" and irrep.k == 2:
      sigma_z: np.ndarray = 2 * spin_matrices(0.5)[2]
      expected: np.ndarray = math.sqrt(3) * calculus.orbit.points[:, 2] / 0.5
      deviation: float = float(np.max(np.abs(sw_symbol(calculus, sigma_z) - expected)))
      result.check("sigma_z symbol is sqrt(3) cos(theta)", deviation, SIGMA_Z_TOL)
      result.summary["sigma_z_deviation"] = deviation
  result.table("sw_axioms.csv", ["irrep", "axiom", "defect"], rows)
  return result


# --------------------------------------------------------------------------
# Spectral windows and quantum ergodicity
# --------------------------------------------------------------------------


@dataclass
class WindowPoint:
  """Everything measured in one spectral window at one ħ."""

  instance: ModelInstance
  data: SpectralData
  projectors: List[np.ndarray]
  measures: List[LevelSurfaceMeasure]
  deltas: List[float]


def _window_point(config: ExperimentConfig, instance: ModelInstance) -> WindowPoint:
  spec: ModelSpec = instance.spec
  E, omega = _window(config, spec)
  data: SpectralData = eigensolve_window(instance.operator, E, omega, instance.spectrum)
  measures: List[LevelSurfaceMeasure] = level_surfaces(instance.bundle, E)
  deltas: List[float] = delta_bounds(measures, spec.multiplicities)
  return WindowPoint(instance, data, _projector_ops(instance, _order(config, 1)), measures, deltas)


def _surface_scale(b0: GridFunction, measures: Sequence[LevelSurfaceMeasure]) -> float:
  """Largest entry of B₀ on the support of the level-surface measures."""
  scale: float = 0.0
  for m in measures:
    if m.vol <= 0:
      continue
    support: np.ndarray = m.weights > 1e-6 * float(np.max(m.weights))
    scale = max(scale, float(np.max(np.abs(b0.values[support]))))
  return max(scale, 1e-12)


def run_szego(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """Szegő limit formula, Weyl counts and projected-norm accounting over the ħ sweep."""
  spec: ModelSpec = _spec(config)
  result: ExperimentResult = ExperimentResult("szego", spec.id)
  instances: List[ModelInstance] = _instances(config)
  names: List[str] = list(config.observables or spec.observables)
  if len(spec.multiplicities) == 1:
    names = [n for n in names if n not in ("off_diagonal", "spin")]

  points: List[WindowPoint] = parallel_map(lambda inst: _window_point(config, inst), instances,
                                           config.workers)
  rows: List[List[Any]] = []
  reports: Dict[str, List[SzegoReport]] = {name: [] for name in names}
  for point in points:
    if point.data.count == 0:
      logger.warning(f"Empty window at hbar={point.instance.hbar:.4g}; skipping")
      continue
    for name in names:
      report: SzegoReport = szego_check(point.data, point.instance.observable_field(name),
                                        point.instance.bundle, point.measures, point.projectors)
      reports[name].append(report)
      rows.append([name, point.instance.hbar, report.lhs, report.rhs, report.count, report.predicted_count])

  last: WindowPoint = points[-1]
  if last.data.count == 0:
    raise PreconditionError(f"Window around E={_window(config, spec)[0]} is empty at the smallest hbar")
  final: SzegoReport = reports[names[0]][-1]
  hbar: float = last.instance.hbar
  if spec.id in WEYL_COUNT_MODELS and not last.data.void:
    result.check("Weyl count", final.count_error, WEYL_COUNT_TOL)
  for name in names:
    rep: SzegoReport = reports[name][-1]
    if name == "off_diagonal":
      hs: List[float] = [p.instance.hbar for p in points if p.data.count]
      slope: float = _slope(hs, [abs(r.lhs) for r in reports[name]])
      result.check("off-diagonal average decay", slope, SLOPE_MARGIN, at_least=True)
      continue
    scale: float = _surface_scale(last.instance.observable_field(name), last.measures)
    result.check(f"Szegő ({name})", rep.difference / scale, SZEGO_TOL)

  # Projected-norm accounting in the smallest-ħ window
  norms: np.ndarray = last.data.projected_norms  # type: ignore[assignment]
  result.check("projected norms sum to one", float(np.max(np.abs(norms.sum(axis=0) - 1.0))), NORM_SUM_TOL)
  fractions: List[Dict[str, float]] = []
  for nu, delta_nu in enumerate(last.deltas):
    result.check(f"projected-norm average (branch {nu})", abs(final.norm_sums[nu] - delta_nu), SZEGO_TOL)
    result.check(f"upper-bound fraction (branch {nu})", final.upper_fractions[nu], delta_nu + 0.1)
    if 0 < delta_nu < 1:
      delta: float = config.check_delta(delta_nu)
      qset: QuasimodeSet = quasimodes(last.data, last.projectors[nu], delta, delta_nu,
                                      last.instance.operator, nu)
      result.check(f"quasimode fraction (branch {nu})", qset.fraction, qset.lower_bound - FRACTION_SLACK,
                   at_least=True)
      fractions.append({"branch": nu, "fraction": qset.fraction, "lower_bound": qset.lower_bound})
    if config.png:
      run.adopt(save_histogram(final.histograms[nu], run.path / f"{spec.id}_norm_histogram_b{nu}.png"))

  result.summary.update({
      "hbar": hbar,
      "window": list(_window(config, spec)),
      "reports": {name: [r.to_dict() for r in reps] for name, reps in reports.items()},
      "quasimode_fractions": fractions,
  })
  result.table(csv_name(spec.id, "szego"), ["observable", "hbar", "lhs", "rhs", "count", "predicted"], rows)
  return result


def _wigner_artifacts(config: ExperimentConfig, run: RunDirectory, point: WindowPoint, qset: QuasimodeSet,
                      calculus: SWCalculus) -> Dict[str, float]:
  """Scalar Wigner transform of the first quasimode: mass, shell fraction and an optional PNG."""
  bundle: EigenBundle = point.instance.bundle
  wigner = scalar_wigner(qset.modes[:, 0], bundle, calculus, qset.branch)
  measure: LevelSurfaceMeasure = point.measures[qset.branch]
  out: Dict[str, float] = {
      "mass": wigner.mass(),
      "shell_fraction": shell_fraction(wigner, bundle, qset.branch, measure.E, 3 * measure.width),
  }
  b_field: np.ndarray = block_symbol_field(point.instance.observable_field("identity"), bundle, calculus,
                                           qset.branch)
  out["identity_pairing"] = wigner.pairing(b_field)
  if config.png:
    marginal: np.ndarray = wigner.marginal()
    d: int = bundle.grid.d
    if d > 1:
      keep: Tuple[int, ...] = tuple(a for a in range(2 * d) if a not in (0, d))
      marginal = marginal.sum(axis=keep)
    name: str = f"{point.instance.spec.id}_wigner_{qset.branch}.png"
    run.adopt(save_density(marginal, run.path / name))
  return out


def run_s2(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """Quantum variance S₂ about the orbit mean across the ħ sweep."""
  spec: ModelSpec = _spec(config)
  result: ExperimentResult = ExperimentResult("s2", spec.id)
  nu: int = _branch(config, spec)
  calculus: SWCalculus = _calculus(spec, nu)
  names: List[str] = _block_observables(config, spec)
  points: List[WindowPoint] = parallel_map(lambda inst: _window_point(config, inst), _instances(config),
                                           config.workers)
  series: Dict[str, List[float]] = {name: [] for name in names}
  hbars: List[float] = []
  rows: List[List[Any]] = []
  qset: Optional[QuasimodeSet] = None
  for point in points:
    delta_nu: float = min(point.deltas[nu], 1.0)
    if delta_nu <= 0:
      raise PreconditionError(f"Branch {nu} does not reach E={point.data.E}; there are no quasimodes")
    qset = quasimodes(point.data, point.projectors[nu], config.check_delta(delta_nu), delta_nu,
                      point.instance.operator, nu)
    if qset.count == 0:
      logger.warning(f"No quasimodes at hbar={point.instance.hbar:.4g}")
      continue
    hbars.append(point.instance.hbar)
    for name in names:
      report = variance_s2(qset, point.instance.observable_field(name), point.instance.bundle,
                           point.measures[nu], calculus)
      series[name].append(report.s2)
      rows.append([name, point.instance.hbar, report.s2, report.mean, qset.count])

  for name in names:
    values: List[float] = series[name]
    if spec.id in CHAOTIC_MODELS:
      result.flag(f"S2 decreases ({name})", _strictly_decreasing(values), f"S2 = {values}")
    elif spec.id in INTEGRABLE_MODELS:
      result.flag(f"S2 control does not decay monotonically ({name})", not _strictly_decreasing(values),
                  f"S2 = {values}")

  if qset is not None and qset.count:
    result.summary["wigner"] = _wigner_artifacts(config, run, points[-1], qset, calculus)
  result.summary.update({"branch": nu, "hbars": hbars, "s2": series})
  result.table(csv_name(spec.id, "s2"), ["observable", "hbar", "s2", "mean", "modes"], rows)
  return result


def _ensemble_setup(config: ExperimentConfig) -> Tuple[ModelInstance, int, LevelSurfaceMeasure, SWCalculus]:
  spec: ModelSpec = _spec(config)
  instance: ModelInstance = _first_instance(config)
  nu: int = _branch(config, spec)
  E, _ = _window(config, spec)
  measure: LevelSurfaceMeasure = level_surfaces(instance.bundle, E)[nu]
  if measure.vol <= 0:
    raise PreconditionError(f"Branch {nu} of '{spec.id}' has no level surface at E={E}")
  return instance, nu, measure, _calculus(spec, nu)


def _stride(T: float, dt: float) -> int:
  return max(1, int(math.ceil(T / dt / MAX_SAMPLES)))


def run_ergodic_average(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """Time averages along Y^t for an ensemble on Ω_{ν,E} × O_λ, swept over T."""
  spec: ModelSpec = _spec(config)
  result: ExperimentResult = ExperimentResult("ergodic-average", spec.id)
  instance, nu, measure, calculus = _ensemble_setup(config)
  rng: np.random.Generator = rng_from_seed(config.seed)
  ensemble = surface_ensemble(measure, calculus.irrep, config.n_starts, rng, haar=False, calculus=calculus)
  times: List[float] = sorted(config.times or ERGODIC_TIMES)
  print_processing_step(1, f"Integrating {config.n_starts} trajectories up to T={times[-1]:g}")
  series = transport_series(instance.bundle, nu, ensemble.points, times[-1], config.dt, instance.h1)

  rows: List[List[Any]] = []
  spreads: Dict[str, List[float]] = {}
  names: List[str] = _block_observables(config, spec)
  for i, name in enumerate(names):
    observable = BlockObservable(instance.observable_field(name), instance.bundle, nu, calculus)
    spreads[name] = []
    for T in times:
      report = ergodic_time_average(observable, ensemble, series, measure, T, _stride(T, config.dt))
      spreads[name].append(report.spread)
      rows.append([name, T, report.spread, report.bias, report.space_average])
    print_progress_bar(i + 1, len(names), prefix="Observables")
    if spec.id in CHAOTIC_MODELS:
      result.flag(f"spread shrinks with T ({name})", spreads[name][-1] < spreads[name][0],
                  f"spreads {spreads[name]}")
    elif spec.id in INTEGRABLE_MODELS:
      result.check(f"start-dependent averages ({name})", spreads[name][-1], SPREAD_FLOOR, at_least=True)
  result.summary.update({"branch": nu, "times": times, "spreads": spreads})
  result.table(csv_name(spec.id, "time_averages"), ["observable", "T", "spread", "bias", "space_average"],
               rows)
  return result


def run_appendix_b(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """Group-route against orbit-route time averages, and Haar moments against the orbit quadrature."""
  spec: ModelSpec = _spec(config)
  result: ExperimentResult = ExperimentResult("appendix-b", spec.id)
  instance, nu, measure, calculus = _ensemble_setup(config)
  rng: np.random.Generator = rng_from_seed(config.seed)
  ensemble = surface_ensemble(measure, calculus.irrep, config.n_starts, rng, haar=True)
  T: float = config.time if config.time is not None else APPENDIX_TIME
  series = transport_series(instance.bundle, nu, ensemble.points, T, config.dt, instance.h1)
  rows: List[List[Any]] = []
  for name in _block_observables(config, spec):
    observable = BlockObservable(instance.observable_field(name), instance.bundle, nu, calculus)
    report = group_orbit_equivalence(observable, ensemble, series, measure, _stride(T, config.dt))
    result.check(f"group vs orbit averages ({name})", report.relative, EQUIVALENCE_TOL)
    pairs = zip(report.orbit.averages, report.group.averages)
    rows.extend([[name, b, o, g] for b, (o, g) in enumerate(pairs)])
    result.summary[name] = {"relative": report.relative, "space_average": report.orbit.space_average}
  moments: Dict[str, float] = haar_orbit_moments(calculus.irrep, calculus, HAAR_SAMPLES, rng)
  tolerance: float = 5.0 / math.sqrt(HAAR_SAMPLES)
  result.check("Haar first moment", moments["first"], tolerance * calculus.k)
  result.check("Haar second moment", moments["second"], tolerance * calculus.k**2)
  result.summary.update({"T": T, "branch": nu, "haar_moments": moments})
  result.table(csv_name(spec.id, "group_orbit"), ["observable", "start", "orbit", "group"], rows)
  return result


EXPERIMENTS: Final[Dict[str, Callable[[ExperimentConfig, RunDirectory], ExperimentResult]]] = {
    "projections": run_projections,
    "egorov": run_egorov,
    "sw-egorov": run_sw_egorov,
    "szego": run_szego,
    "s2": run_s2,
    "ergodic-average": run_ergodic_average,
    "identities": run_identities,
    "sw-axioms": run_sw_axioms,
    "appendix-b": run_appendix_b,
    "moyal": run_moyal,
    "transport": run_transport,
    "spectral-id": run_spectral_id,
}


def run_experiment(config: ExperimentConfig, run: RunDirectory) -> ExperimentResult:
  """Dispatch, write tables and the manifest."""
  config.validate()
  if config.deterministic:
    np.random.seed(config.seed)
  logger.debug(f"Running {config.kind} on {config.model}")
  result: ExperimentResult = EXPERIMENTS[config.kind](config, run)
  for name, (headers, rows) in result.tables.items():
    run.write_csv(name, headers, rows)
  run.finish(result.summary, result.criteria)
  return result
