"""
Stratonovich–Weyl calculus on a coadjoint orbit of a compact matrix group.

Symbols live in the span S_λ of the matrix coefficients η ↦ ⟨v_η, E v_η⟩.
Everything is finite-dimensional: with an orbit quadrature that is exact on
products of these functions, the Gram matrix G of the covariant symbols of
the unit matrices E_ab determines the contravariant map (G⁻¹), the
Stratonovich–Weyl map (G^{-1/2}) and the quantizer.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Final, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, special

from .errors import ConfigError, PreconditionError, QuadratureError, SubgroupError

logger: logging.Logger = logging.getLogger("semiclab")

CLOSURE_TOL: Final[float] = 1e-10
GROUP_TOL: Final[float] = 1e-8
ORBIT_TOL: Final[float] = 1e-8
QUADRATURE_TOL: Final[float] = 1e-10
GRAM_CONDITION_MAX: Final[float] = 1e8
EIGEN_FLOOR: Final[float] = 1e-12
MAX_SPIN: Final[float] = 2.5

GROUPS: Final[Tuple[str, ...]] = ("su2", "u1", "generic")


def _inner(a: np.ndarray, b: np.ndarray) -> float:
  """Real trace inner product Re tr(A*B)."""
  return float(np.real(np.vdot(a, b)))


def commutant_dimension(matrices: Sequence[np.ndarray], tol: float = 1e-8) -> int:
  """Dimension of {X : [X, A] = 0 for all A}, from the nullity of the stacked commutator map."""
  mats: List[np.ndarray] = [np.asarray(m, dtype=complex) for m in matrices]
  if not mats:
    raise ConfigError("Commutant of an empty family is undefined")
  k: int = mats[0].shape[-1]
  eye: np.ndarray = np.eye(k)
  system: np.ndarray = np.vstack([np.kron(m, eye) - np.kron(eye, m.T) for m in mats])
  singular: np.ndarray = np.linalg.svd(system, compute_uv=False)
  rank: int = int(np.sum(singular > tol * max(1.0, float(singular.max()))))
  return k * k - rank


def spin_matrices(j: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
  """Spin-j matrices (S_x, S_y, S_z) in the basis m = j, j−1, …, −j."""
  k: int = int(round(2 * j)) + 1
  m: np.ndarray = j - np.arange(k)
  raising: np.ndarray = np.zeros((k, k), dtype=complex)
  for i in range(1, k):
    raising[i - 1, i] = math.sqrt(j * (j + 1) - m[i] * (m[i] + 1))
  sx: np.ndarray = 0.5 * (raising + raising.conj().T)
  sy: np.ndarray = -0.5j * (raising - raising.conj().T)
  sz: np.ndarray = np.diag(m).astype(complex)
  return sx, sy, sz


@dataclass
class IrrepModel:
  """A unitary irrep given by skew-hermitian generators dρ(X_a) and a highest-weight vector."""

  group: str
  k: int
  generators: List[np.ndarray]
  highest_weight: np.ndarray
  weight: np.ndarray
  special: bool = False
  spin: Optional[float] = None

  def __post_init__(self) -> None:
    if self.group not in GROUPS:
      raise ConfigError(f"Unknown group '{self.group}'. Choose from: {', '.join(GROUPS)}")
    self.generators = [np.asarray(g, dtype=complex) for g in self.generators]
    for g in self.generators:
      if g.shape != (self.k, self.k):
        raise ConfigError(f"Generator of shape {g.shape} does not act on C^{self.k}")
      if np.max(np.abs(g + g.conj().T)) > CLOSURE_TOL:
        raise ConfigError("Generators must be skew-hermitian")
    self.highest_weight = np.asarray(self.highest_weight, dtype=complex)
    self.highest_weight = self.highest_weight / np.linalg.norm(self.highest_weight)
    self.weight = np.asarray(self.weight, dtype=float)

    gram: np.ndarray = self.gram
    if np.linalg.matrix_rank(gram, tol=CLOSURE_TOL) < len(self.generators):
      raise ConfigError("Generators are linearly dependent")
    for a in self.generators:
      for b in self.generators:
        bracket: np.ndarray = a @ b - b @ a
        if self._residual(bracket) > CLOSURE_TOL * max(1.0, float(np.max(np.abs(bracket)))):
          raise ConfigError("Generators do not close under commutation")
    if commutant_dimension(self.generators) != 1:
      raise ConfigError(f"Representation of {self.name} is reducible (non-trivial commutant)")
    if np.max(np.abs(moment_map(self, self.highest_weight) - self.weight)) > ORBIT_TOL:
      raise ConfigError("Weight does not match the moment map of the highest-weight vector")

  @property
  def name(self) -> str:
    if self.group == "su2":
      return f"SU(2) spin-{_spin_text(self.spin)}"
    if self.group == "u1":
      return "U(1)"
    return f"subgroup of U({self.k})"

  @property
  def dimension(self) -> int:
    return len(self.generators)

  @property
  def gram(self) -> np.ndarray:
    return np.array([[_inner(a, b) for b in self.generators] for a in self.generators])

  def coordinates(self, matrix: np.ndarray) -> np.ndarray:
    """Real coefficients of a matrix in the generator basis (least squares)."""
    rhs: np.ndarray = np.array([_inner(a, matrix) for a in self.generators])
    return np.linalg.solve(self.gram, rhs)

  def combine(self, coefficients: Sequence[float]) -> np.ndarray:
    return sum(c * g for c, g in zip(coefficients, self.generators))  # type: ignore[return-value]

  def _residual(self, matrix: np.ndarray) -> float:
    return float(np.max(np.abs(matrix - self.combine(self.coordinates(matrix)))))


def _spin_text(spin: Optional[float]) -> str:
  if spin is None:
    return "?"
  twice: int = int(round(2 * spin))
  return str(twice // 2) if twice % 2 == 0 else f"{twice}/2"


def su2_irrep(j: float) -> IrrepModel:
  """Spin-j irrep of SU(2), j ∈ {1/2, 1, …, 5/2}, with dρ(X_a) = −iS_a and w = |m=j⟩."""
  twice: float = 2 * j
  if abs(twice - round(twice)) > 1e-12 or not 0.5 <= j <= MAX_SPIN:
    raise ConfigError(f"Spin must be a half-integer in [1/2, {MAX_SPIN}], got {j}")
  spins: Tuple[np.ndarray, ...] = spin_matrices(j)
  k: int = int(round(twice)) + 1
  w: np.ndarray = np.zeros(k, dtype=complex)
  w[0] = 1.0
  return IrrepModel("su2", k, [-1j * s for s in spins], w, np.array([0.0, 0.0, j]), special=True,
                    spin=j)


def u1_irrep() -> IrrepModel:
  """The defining representation of U(1) on C."""
  return IrrepModel("u1", 1, [np.array([[-1j]])], np.array([1.0]), np.array([1.0]))


def generic_irrep(generators: Sequence[np.ndarray], highest_weight: Optional[np.ndarray] = None,
                  special: bool = False) -> IrrepModel:
  """An irreducible subgroup of U(k) given by its Lie algebra basis."""
  gens: List[np.ndarray] = [np.asarray(g, dtype=complex) for g in generators]
  if not gens:
    raise ConfigError("A generic irrep needs at least one generator")
  k: int = gens[0].shape[0]
  w: np.ndarray = np.zeros(k, dtype=complex) if highest_weight is None else np.asarray(
      highest_weight, dtype=complex
  )
  if highest_weight is None:
    w[0] = 1.0
  w = w / np.linalg.norm(w)
  weight: np.ndarray = np.array([float(np.real(1j * np.vdot(w, g @ w))) for g in gens])
  return IrrepModel("generic", k, gens, w, weight, special=special)


def irrep_for(group: str, k: int) -> IrrepModel:
  """Default irrep of a given dimension: U(1) for k = 1, spin-(k−1)/2 of SU(2) otherwise."""
  if group == "u1" or (group == "su2" and k == 1):
    return u1_irrep()
  if group == "su2":
    return su2_irrep((k - 1) / 2)
  raise ConfigError(f"No default irrep for group '{group}'; supply generators")


# --------------------------------------------------------------------------
# Group and coadjoint action
# --------------------------------------------------------------------------


def moment_map(irrep: IrrepModel, v: np.ndarray) -> np.ndarray:
  """J(v)_a = i⟨v, dρ(X_a) v⟩ for a batch of vectors (..., k)."""
  vec: np.ndarray = np.asarray(v, dtype=complex)
  return np.stack(
      [np.real(1j * np.einsum("...i,ij,...j->...", vec.conj(), g, vec)) for g in irrep.generators],
      axis=-1
  )


def casimir(irrep: IrrepModel, eta: np.ndarray) -> np.ndarray:
  """|η|² in the dual basis; constant on coadjoint orbits of SU(2) and U(1)."""
  return np.sum(np.asarray(eta, dtype=float)**2, axis=-1)


def on_orbit(irrep: IrrepModel, eta: np.ndarray, tol: float = ORBIT_TOL) -> bool:
  """Necessary orbit test: matching Casimir (exact for SU(2) and U(1))."""
  value: np.ndarray = np.atleast_1d(casimir(irrep, eta))
  target: float = float(casimir(irrep, irrep.weight))
  if irrep.group == "u1":
    return bool(np.all(np.abs(np.asarray(eta, dtype=float) - irrep.weight) <= tol))
  return bool(np.all(np.abs(value - target) <= tol * max(1.0, target)))


def _check_group(irrep: IrrepModel, g: np.ndarray) -> np.ndarray:
  mat: np.ndarray = np.asarray(g, dtype=complex)
  if mat.shape != (irrep.k, irrep.k):
    raise SubgroupError(f"Group element of shape {mat.shape} does not act on C^{irrep.k}")
  defect: float = float(np.max(np.abs(mat.conj().T @ mat - np.eye(irrep.k))))
  if defect > GROUP_TOL:
    raise SubgroupError(f"Matrix is not unitary (defect {defect:.3e})")
  return mat


def group_element(irrep: IrrepModel, matrix: np.ndarray, tol: float = GROUP_TOL) -> np.ndarray:
  """
  Identify a unitary matrix as ρ(g) for g in the group.

  For special groups the determinant phase is divided out first, choosing the
  k-th root that puts the logarithm in the Lie algebra.
  """
  mat: np.ndarray = _check_group(irrep, matrix)
  candidates: List[np.ndarray] = [mat]
  if irrep.special:
    root: complex = complex(np.linalg.det(mat))**(1.0 / irrep.k)
    candidates = [
        mat / (root * np.exp(2j * math.pi * m / irrep.k)) for m in range(irrep.k)
    ]
  best: Tuple[float, Optional[np.ndarray]] = (math.inf, None)
  for cand in candidates:
    log: np.ndarray = linalg.logm(cand)
    residual: float = irrep._residual(log)
    if residual < best[0]:
      best = (residual, cand)
  if best[0] > tol:
    raise SubgroupError(
        f"Matrix does not lie in {irrep.name}: Lie-algebra residual {best[0]:.3e} > {tol:g}"
    )
  return best[1]  # type: ignore[return-value]


def coadjoint_action(irrep: IrrepModel, g: np.ndarray, eta: np.ndarray) -> np.ndarray:
  """(Ad*_g η)_a = Σ_b c_ba η_b where ρ(g)⁻¹ dρ(X_a) ρ(g) = Σ_b c_ba dρ(X_b)."""
  mat: np.ndarray = _check_group(irrep, g)
  inverse: np.ndarray = mat.conj().T
  columns: List[np.ndarray] = []
  for x in irrep.generators:
    conjugated: np.ndarray = inverse @ x @ mat
    if irrep._residual(conjugated) > GROUP_TOL:
      raise SubgroupError(f"Element does not normalise the Lie algebra of {irrep.name}")
    columns.append(irrep.coordinates(conjugated))
  c: np.ndarray = np.stack(columns, axis=-1)  # c[b, a]
  return np.asarray(eta, dtype=float) @ c


def exp_algebra(irrep: IrrepModel, coefficients: Sequence[float]) -> np.ndarray:
  return linalg.expm(irrep.combine(coefficients))


def random_group_element(irrep: IrrepModel, rng: np.random.Generator) -> np.ndarray:
  """Haar-distributed element for SU(2) and U(1); exp of a Gaussian algebra element otherwise."""
  if irrep.group == "u1":
    return np.array([[np.exp(1j * rng.uniform(0, 2 * math.pi))]])
  if irrep.group == "su2":
    q: np.ndarray = rng.normal(size=4)
    q = q / np.linalg.norm(q)
    angle: float = 2 * math.acos(float(np.clip(q[0], -1.0, 1.0)))
    axis_norm: float = float(np.linalg.norm(q[1:]))
    axis: np.ndarray = q[1:] / axis_norm if axis_norm > 0 else np.array([0.0, 0.0, 1.0])
    return exp_algebra(irrep, angle * axis)
  return exp_algebra(irrep, rng.normal(size=irrep.dimension))


# --------------------------------------------------------------------------
# Orbit sampling
# --------------------------------------------------------------------------


@dataclass
class OrbitSample:
  """Orbit points η_i, section elements g_i, coherent states v_i and weights summing to k."""

  points: np.ndarray  # (M, m)
  sections: np.ndarray  # (M, k, k)
  states: np.ndarray  # (M, k)
  weights: np.ndarray  # (M,)
  meta: Dict[str, Any] = field(default_factory=dict)

  @property
  def size(self) -> int:
    return self.weights.size


def _fix_phase(v: np.ndarray) -> np.ndarray:
  """Make the first nonzero component real and positive."""
  out: np.ndarray = np.array(v, dtype=complex)
  flat: np.ndarray = out.reshape(-1, out.shape[-1])
  for row in flat:
    nonzero: np.ndarray = np.flatnonzero(np.abs(row) > 1e-12)
    if nonzero.size:
      first: complex = row[nonzero[0]]
      row *= np.conj(first) / abs(first)
  return flat.reshape(out.shape)


def su2_section(irrep: IrrepModel, theta: float, phi: float) -> np.ndarray:
  """g_η = exp(−iφS_z) exp(−iθS_y), taking the north pole to polar angles (θ, φ)."""
  sy: np.ndarray = 1j * irrep.generators[1]
  sz: np.ndarray = 1j * irrep.generators[2]
  return linalg.expm(-1j * phi * sz) @ linalg.expm(-1j * theta * sy)


def _polar_angles(eta: np.ndarray) -> Tuple[float, float]:
  r: float = float(np.linalg.norm(eta))
  theta: float = math.acos(float(np.clip(eta[2] / r, -1.0, 1.0)))
  phi: float = math.atan2(float(eta[1]), float(eta[0]))
  return theta, phi


def orbit_quadrature(irrep: IrrepModel, sections: Optional[Sequence[np.ndarray]] = None) -> OrbitSample:
  """
  Quadrature on the orbit of the highest weight.

  SU(2): Gauss–Legendre in cos θ (2j+2 nodes) times uniform φ (4j+2 nodes).
  U(1): the single point λ. Generic groups need explicit section elements
  with equal weights; the rule is accepted only if it resolves the identity.
  """
  k: int = irrep.k
  meta: Dict[str, Any] = {"normalization": "vol(orbit) = k"}
  if irrep.group == "su2":
    j: float = irrep.spin  # type: ignore[assignment]
    n_theta: int = int(round(2 * j)) + 2
    n_phi: int = int(round(4 * j)) + 2
    cos_nodes, cos_weights = special.roots_legendre(n_theta)
    mats: List[np.ndarray] = []
    weights: List[float] = []
    for c, wc in zip(cos_nodes, cos_weights):
      theta: float = math.acos(float(c))
      for p in range(n_phi):
        mats.append(su2_section(irrep, theta, 2 * math.pi * p / n_phi))
        weights.append(k * wc / (2 * n_phi))
    weight_array: np.ndarray = np.array(weights)
    meta["sphere_area_factor"] = 4 * math.pi * j * j / k
  elif irrep.group == "u1":
    mats = [np.eye(1, dtype=complex)]
    weight_array = np.array([1.0])
  else:
    if not sections:
      raise QuadratureError(f"Orbit quadrature for {irrep.name} needs explicit section elements")
    mats = [_check_group(irrep, g) for g in sections]
    weight_array = np.full(len(mats), k / len(mats))

  section_array: np.ndarray = np.stack(mats)
  states: np.ndarray = _fix_phase(section_array @ irrep.highest_weight)
  points: np.ndarray = moment_map(irrep, states)
  sample: OrbitSample = OrbitSample(points, section_array, states, weight_array, meta)

  identity: np.ndarray = np.einsum("i,ia,ib->ab", weight_array, states, states.conj())
  defect: float = float(np.max(np.abs(identity - np.eye(k))))
  if defect > QUADRATURE_TOL:
    raise QuadratureError(
        f"Orbit quadrature for {irrep.name} does not resolve the identity (defect {defect:.3e})"
    )
  logger.debug(f"Orbit quadrature for {irrep.name}: {sample.size} points")
  return sample


def coherent_state(irrep: IrrepModel, eta: np.ndarray, orbit: Optional[OrbitSample] = None) -> np.ndarray:
  """v_η = ρ(g_η) w_λ with the first nonzero component real positive."""
  point: np.ndarray = np.asarray(eta, dtype=float)
  if not on_orbit(irrep, point):
    raise PreconditionError(f"Point {point} is not on the orbit of {irrep.name}")
  if irrep.group == "u1":
    return irrep.highest_weight.copy()
  if irrep.group == "su2":
    theta, phi = _polar_angles(point)
    return _fix_phase(su2_section(irrep, theta, phi) @ irrep.highest_weight)
  if orbit is not None:
    distance: np.ndarray = np.linalg.norm(orbit.points - point, axis=-1)
    best: int = int(np.argmin(distance))
    if distance[best] <= ORBIT_TOL:
      return orbit.states[best]
  raise PreconditionError(f"No section element known for {point} on the orbit of {irrep.name}")


# --------------------------------------------------------------------------
# Symbol calculus
# --------------------------------------------------------------------------


def _unit_matrix_values(states: np.ndarray) -> np.ndarray:
  """Q_{E_ab}(η_i) = conj(v_a) v_b, columns ordered a-major."""
  return np.einsum("ia,ib->iab", states.conj(), states).reshape(states.shape[0], -1)


@dataclass
class SWCalculus:
  """Covariant, contravariant and Stratonovich–Weyl symbol maps on one orbit."""

  irrep: IrrepModel
  orbit: OrbitSample
  gram: np.ndarray
  K: np.ndarray
  K_sqrt: np.ndarray
  K_inv_sqrt: np.ndarray
  quantizer: np.ndarray  # (M, k, k)

  @property
  def k(self) -> int:
    return self.irrep.k

  def _states(self, etas: Optional[np.ndarray]) -> np.ndarray:
    if etas is None:
      return self.orbit.states
    points: np.ndarray = np.atleast_2d(np.asarray(etas, dtype=float))
    return np.stack([coherent_state(self.irrep, p, self.orbit) for p in points])

  def _values(self, coefficients: np.ndarray, etas: Optional[np.ndarray]) -> np.ndarray:
    return _unit_matrix_values(self._states(etas)) @ coefficients

  def integrate(self, values: np.ndarray) -> complex:
    """∫ f dη with the orbit quadrature."""
    return complex(np.dot(self.orbit.weights, values))


def _check_matrix(calculus: SWCalculus, a: np.ndarray) -> np.ndarray:
  mat: np.ndarray = np.asarray(a, dtype=complex)
  if mat.shape != (calculus.k, calculus.k):
    raise ConfigError(f"Matrix of shape {mat.shape} does not act on C^{calculus.k}")
  return mat.reshape(-1)


def covariant_symbol(calculus: SWCalculus, a: np.ndarray, etas: Optional[np.ndarray] = None) -> np.ndarray:
  """Q_A(η) = ⟨v_η, A v_η⟩ at the orbit points (or at given points)."""
  return calculus._values(_check_matrix(calculus, a), etas)


def contravariant_symbol(calculus: SWCalculus, a: np.ndarray,
                         etas: Optional[np.ndarray] = None) -> np.ndarray:
  """P_A with ∫ conj(P_A) Q_B dη = tr(A*B)."""
  return calculus._values(calculus.K @ _check_matrix(calculus, a), etas)


def sw_symbol(calculus: SWCalculus, a: np.ndarray, etas: Optional[np.ndarray] = None) -> np.ndarray:
  """symb^SW[A] = K^{1/2} Q_A = K^{-1/2} P_A."""
  return calculus._values(calculus.K_sqrt @ _check_matrix(calculus, a), etas)


def sw_inverse(calculus: SWCalculus, values: np.ndarray) -> np.ndarray:
  """A = ∫ f(η) Δ(η) dη for f sampled at the orbit points."""
  f: np.ndarray = np.asarray(values, dtype=complex)
  if f.shape != (calculus.orbit.size, ):
    raise ConfigError(f"Expected {calculus.orbit.size} orbit samples, got shape {f.shape}")
  return np.einsum("i,i,iab->ab", calculus.orbit.weights, f, calculus.quantizer)


def build_calculus(irrep: IrrepModel, orbit: Optional[OrbitSample] = None) -> SWCalculus:
  """Assemble the Gram system, K and its square roots, and the quantizer."""
  sample: OrbitSample = orbit if orbit is not None else orbit_quadrature(irrep)
  q: np.ndarray = _unit_matrix_values(sample.states)  # (M, k²)
  gram: np.ndarray = q.conj().T @ (sample.weights[:, None] * q)
  gram = 0.5 * (gram + gram.conj().T)
  evals, evecs = np.linalg.eigh(gram)
  if evals.min() <= EIGEN_FLOOR:
    raise QuadratureError(
        f"Covariant symbol map is not injective on {irrep.name} (Gram eigenvalue {evals.min():.3e})"
    )
  condition: float = float(evals.max() / evals.min())
  if condition > GRAM_CONDITION_MAX:
    raise QuadratureError(f"Gram matrix condition number {condition:.3e} exceeds {GRAM_CONDITION_MAX:g}")

  k_op: np.ndarray = (evecs / evals) @ evecs.conj().T
  k_sqrt: np.ndarray = (evecs / np.sqrt(evals)) @ evecs.conj().T
  k_inv_sqrt: np.ndarray = (evecs * np.sqrt(evals)) @ evecs.conj().T
  k: int = irrep.k
  # tr(A Δ(η)) = symb^SW[A](η) gives Δ_ba = Σ_e Q_e (K^{1/2})_{e,ab}
  delta: np.ndarray = (q @ k_sqrt).reshape(sample.size, k, k).transpose(0, 2, 1)

  calculus: SWCalculus = SWCalculus(irrep, sample, gram, k_op, k_sqrt, k_inv_sqrt, delta)
  logger.debug(f"SW calculus for {irrep.name}: Gram condition {condition:.3g}")
  return calculus


def calculus_defects(calculus: SWCalculus, rng: np.random.Generator, samples: int = 10) -> Dict[str, float]:
  """Residuals of the calculus axioms on random matrices."""
  k: int = calculus.k
  eye: np.ndarray = np.eye(k)
  out: Dict[str, float] = {
      "unit": float(np.max(np.abs(sw_symbol(calculus, eye) - 1.0))),
      "conjugation": 0.0,
      "tracial": 0.0,
      "round_trip": 0.0,
      "quantizer_hermitian": float(
          np.max(np.abs(calculus.quantizer - calculus.quantizer.conj().transpose(0, 2, 1)))
      ),
      "square_root": float(np.max(np.abs(calculus.K_sqrt @ calculus.K_sqrt - calculus.K))),
      "covariance": 0.0,
  }
  irrep: IrrepModel = calculus.irrep
  for _ in range(samples):
    # symb[ρ(g) A ρ(g)*](η) = symb[A](Ad*_{g⁻¹} η)
    g: np.ndarray = random_group_element(irrep, rng)
    a = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    moved: np.ndarray = np.stack([coadjoint_action(irrep, g.conj().T, eta) for eta in calculus.orbit.points])
    lhs: np.ndarray = sw_symbol(calculus, g @ a @ g.conj().T)
    out["covariance"] = max(out["covariance"], float(np.max(np.abs(lhs - sw_symbol(calculus, a, moved)))))
  for _ in range(samples):
    a = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    b: np.ndarray = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    sa: np.ndarray = sw_symbol(calculus, a)
    sb: np.ndarray = sw_symbol(calculus, b)
    out["conjugation"] = max(out["conjugation"],
                             float(np.max(np.abs(sw_symbol(calculus, a.conj().T) - sa.conj()))))
    out["tracial"] = max(out["tracial"], abs(calculus.integrate(sa * sb) - np.trace(a @ b)))
    out["round_trip"] = max(out["round_trip"], float(np.max(np.abs(sw_inverse(calculus, sa) - a))))
  return out


def write_orbit_csv(calculus: SWCalculus, path: Union[str, Path]) -> Path:
  """η coordinates, weights and quantizer entries, one row per orbit point."""
  target: Path = Path(path)
  k: int = calculus.k
  m: int = calculus.orbit.points.shape[1]
  entries: List[str] = [f"delta_{part}_{r}{c}" for r in range(k) for c in range(k) for part in ("re", "im")]
  with target.open("w", newline="") as handle:
    writer = csv.writer(handle)
    writer.writerow([f"eta{a}" for a in range(m)] + ["weight"] + entries)
    for i in range(calculus.orbit.size):
      flat: List[str] = []
      for value in calculus.quantizer[i].ravel():
        flat.extend([f"{value.real:.15g}", f"{value.imag:.15g}"])
      writer.writerow([f"{v:.15g}" for v in calculus.orbit.points[i]] +
                      [f"{calculus.orbit.weights[i]:.15g}"] + flat)
  return target
