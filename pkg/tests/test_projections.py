import math

import numpy as np
import pytest
import sympy

from semiclab.errors import ClusterError, ConfigError, ContourError, GapError, GaugeObstructionError
from semiclab.grid import GridFunction, quantum_grid
from semiclab.projections import (
    check_multiplicities,
    cluster_eigh,
    eigendecompose,
    gauge_fix,
    lattice_chern,
    orthogonalize_projector,
    parametrix,
    projection_residuals,
    read_bundle,
    recursive_projection,
    resolution_defect,
    riesz_projection,
    write_bundle,
)
from semiclab.symbolic import SymbolicMatrix, phase_space_symbols
from semiclab.weyl import DiscretizedOperator


@pytest.fixture(scope="module")
def rotating():
  """Bundle of (cos x + cos ξ)/2 + 0.3(cos x σx + sin x σy) + σz on the 2π torus."""
  grid = quantum_grid(1, 32, 2 * math.pi, 2 * math.pi)
  x, xi = phase_space_symbols(1)
  expr = sympy.Matrix([
      [1 + (sympy.cos(xi) + sympy.cos(x)) / 2, 0.3 * sympy.exp(-sympy.I * x)],
      [0.3 * sympy.exp(sympy.I * x), -1 + (sympy.cos(xi) + sympy.cos(x)) / 2],
  ])
  h0 = GridFunction.from_symbolic(grid, SymbolicMatrix(expr, 1), hermitian=True)
  return eigendecompose(h0, (1, 1))


def test_check_multiplicities():
  assert check_multiplicities([2, 2], 4) == (2, 2)
  with pytest.raises(ConfigError):
    check_multiplicities([1, 1], 3)
  with pytest.raises(ConfigError):
    check_multiplicities([0, 2], 2)


def test_cluster_eigh():
  """Test branches are grouped by multiplicity and sorted ascending."""
  h = np.array([np.diag([3.0, 1.0, 1.0]), np.diag([2.0, 2.0, 4.0])])
  system = cluster_eigh(h, (2, 1))
  # First batch element: {1, 1} then 3
  np.testing.assert_allclose(system.eigenvalues[0], [1.0, 3.0])
  np.testing.assert_allclose(system.gaps, [2.0, 2.0])
  np.testing.assert_allclose(np.trace(system.projectors[0], axis1=-2, axis2=-1), [2.0, 2.0])
  np.testing.assert_allclose(system.local_gap(1), [2.0, 2.0])

  with pytest.raises(GapError):
    cluster_eigh(np.diag([1.0, 2.0]), (2, ))
  with pytest.raises(GapError):
    cluster_eigh(np.eye(2), (1, 1))


def test_eigendecompose_matches_closed_form(pauli):
  """Test branches and projectors against λ = s ∓ ε and P = (Id ∓ K/ε)/2."""
  bundle = pauli.bundle
  mesh = pauli.grid.mesh()
  assert bundle.l == 2
  assert bundle.gap == pytest.approx(1.0)
  for nu in range(2):
    np.testing.assert_allclose(bundle.eigenvalues[nu].values[..., 0, 0],
                               pauli.branch_energy(nu).evaluate(mesh)[..., 0, 0].real, atol=1e-10)
    np.testing.assert_allclose(bundle.projectors[nu].values, pauli.branch_projector(nu).evaluate(mesh),
                               atol=1e-10)


def test_bundle_off_grid(pauli):
  coords = (np.array([0.1, -2.3]), np.array([0.7, 1.9]))
  system = pauli.bundle.at(coords)
  expected = pauli.branch_energy(1).evaluate(coords)[:, 0, 0].real
  np.testing.assert_allclose(system.eigenvalues[:, 1], expected, atol=1e-12)


def test_riesz_and_recursion_agree(pauli):
  """Test the two projection methods through first order."""
  riesz = riesz_projection(pauli.symbol, (1, 1), 0, 1)
  recursion = recursive_projection(pauli.symbol, (1, 1), 0, 1)
  assert riesz.order == 1
  assert riesz.method == "riesz"
  for j in range(2):
    diff = riesz.symbol.coefficient(j).values - recursion.symbol.coefficient(j).values
    assert np.max(np.abs(diff)) < 1e-6


def test_projection_residuals(pauli):
  """Test P # P − P and [P, H]_# vanish through the computed order."""
  projection = recursive_projection(pauli.symbol, (1, 1), 1, 2).symbol
  residuals = projection_residuals(pauli.symbol, projection, 2)
  assert len(residuals["idempotency"]) == 3
  assert max(residuals["idempotency"]) < 1e-7
  assert max(residuals["commutator"]) < 1e-7


def test_resolution_of_identity(pauli):
  projections = [recursive_projection(pauli.symbol, (1, 1), nu, 1).symbol for nu in range(2)]
  assert max(resolution_defect(projections)) < 1e-8


def test_projection_arguments(pauli):
  with pytest.raises(ConfigError):
    riesz_projection(pauli.symbol, (1, 1), 0, 5)
  with pytest.raises(ConfigError):
    recursive_projection(pauli.symbol, (1, 1), 0, 3)
  with pytest.raises(ConfigError):
    recursive_projection(pauli.symbol, (1, 1), 2, 1)
  with pytest.raises(ContourError):
    # λ₋ = −δ at the origin, which is a grid node
    parametrix(pauli.symbol, -0.5, 0)


def test_orthogonalize_projector(torus_grid, rng):
  """Test rounding a near-projector to an exact one."""
  q, _ = np.linalg.qr(rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32)))
  spectrum = np.concatenate([np.full(12, 1.0), np.zeros(20)]) + 1e-3 * rng.normal(size=32)
  near = DiscretizedOperator(q @ np.diag(spectrum) @ q.conj().T, torus_grid)
  exact = orthogonalize_projector(near)
  np.testing.assert_allclose(exact.matrix @ exact.matrix, exact.matrix, atol=1e-12)
  assert exact.meta["rank"] == 12
  assert exact.meta["cluster_radius"] < 1e-2
  assert np.linalg.norm(exact.matrix - near.matrix, 2) < 1e-2

  with pytest.raises(ClusterError):
    orthogonalize_projector(DiscretizedOperator(0.5 * np.eye(32), torus_grid))


def test_lattice_chern_trivial(rng):
  frame = np.linalg.qr(rng.normal(size=(2, 1)) + 0j)[0]
  frames = np.broadcast_to(frame, (8, 8, 2, 1)).copy()
  assert lattice_chern(frames) == pytest.approx(0.0)


def test_gauge_fix_obstructed():
  """Test a band with unit lattice Chern number has no smooth isometry field."""
  grid = quantum_grid(1, 32, 2 * math.pi, 2 * math.pi)
  x, xi = phase_space_symbols(1)
  mass = 1 + sympy.cos(x) + sympy.cos(xi)
  expr = sympy.Matrix([
      [mass, sympy.sin(x) - sympy.I * sympy.sin(xi)],
      [sympy.sin(x) + sympy.I * sympy.sin(xi), -mass],
  ])
  h0 = GridFunction.from_symbolic(grid, SymbolicMatrix(expr, 1), hermitian=True)
  bundle = eigendecompose(h0, (1, 1))
  assert abs(lattice_chern(bundle.isometries[0].values)) == pytest.approx(1.0, abs=1e-6)
  with pytest.raises(GaugeObstructionError, match="Chern number"):
    gauge_fix(bundle)


def test_gauge_fix(rotating):
  """Test gauge fixing keeps projectors and yields smooth orthonormal frames."""
  fixed = gauge_fix(rotating)
  assert fixed.gauge_fixed
  for nu in range(2):
    iso = fixed.isometries[nu].values
    np.testing.assert_allclose(iso @ np.conj(np.swapaxes(iso, -1, -2)), rotating.projectors[nu].values,
                               atol=1e-12)
    # Neighbouring frames nearly coincide after alignment
    step = np.real(np.sum(np.conj(iso) * np.roll(iso, -1, axis=0), axis=(-2, -1)))
    assert np.min(step[:-1]) > 0.9


def test_bundle_file(rotating, tmp_path):
  path = write_bundle(rotating, tmp_path / "bundle.bin")
  assert path.read_bytes()[:4] == b"SCLB"
  loaded = read_bundle(path)
  assert loaded.multiplicities == (1, 1)
  assert loaded.grid.N == 32
  np.testing.assert_allclose(loaded.eigenvalues[1].values, rotating.eigenvalues[1].values)
  np.testing.assert_allclose(loaded.projectors[0].values, rotating.projectors[0].values)

  (tmp_path / "bad.bin").write_bytes(b"NOPE" + bytes(16))
  with pytest.raises(ConfigError):
    read_bundle(tmp_path / "bad.bin")
