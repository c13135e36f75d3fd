import math

import numpy as np
import pytest

from semiclab.errors import ConfigError, PreconditionError, TrajectoryEscapeError
from semiclab.transport import (
    ConstantGenerator,
    Trajectory,
    block_defect,
    cocycle_defect,
    constant_transport,
    egorov_symbol,
    fibre_defect,
    generated_algebra,
    h_tilde,
    hamiltonian_flow,
    reduced_consistency,
    transport,
    transport_matrix,
    write_trajectory_csv,
    write_transport_csv,
)
from semiclab.utils import SIGMA_X, SIGMA_Y, SIGMA_Z, unitarity_defect


def test_harmonic_flow_is_periodic(harmonic):
  """Test the oscillator flow returns after one period with conserved energy."""
  traj = hamiltonian_flow(harmonic.bundle, 0, (1.0, 0.5), 2 * math.pi)
  assert traj.points.shape == (traj.times.size, 1, 2)
  np.testing.assert_allclose(traj.final[0], [1.0, 0.5], atol=1e-6)
  assert traj.energy_drift < 1e-8
  # Quarter period rotates (x, ξ) → (ξ, −x)
  quarter = hamiltonian_flow(harmonic.bundle, 0, (1.0, 0.5), math.pi / 2)
  np.testing.assert_allclose(quarter.final[0], [0.5, -1.0], atol=1e-6)


def test_flow_backwards(harmonic):
  forward = hamiltonian_flow(harmonic.bundle, 0, (1.0, 0.5), 1.0)
  back = hamiltonian_flow(harmonic.bundle, 0, forward.final, -1.0)
  np.testing.assert_allclose(back.final, [[1.0, 0.5]], atol=1e-8)


def test_flow_errors(harmonic):
  with pytest.raises(TrajectoryEscapeError):
    hamiltonian_flow(harmonic.bundle, 0, (4.4, 0.0), 1.0, margin=0.5)
  with pytest.raises(ConfigError):
    hamiltonian_flow(harmonic.bundle, 0, (1.0, 0.5), 1.0, dt=0.0)
  with pytest.raises(ConfigError):
    hamiltonian_flow(harmonic.bundle, 1, (1.0, 0.5), 1.0)
  with pytest.raises(ConfigError):
    hamiltonian_flow(harmonic.bundle, 0, (1.0, 0.5, 0.0), 1.0)


def test_constant_generator_transport():
  """Test the RK4 propagator against the matrix exponential."""
  generator = 0.7 * SIGMA_X + 0.2 * SIGMA_Z
  steps = 101
  traj = Trajectory(0, 0.01 * np.arange(steps), np.zeros((steps, 1, 2)), 0.01, np.zeros((steps, 1)))
  result = transport_matrix(traj, ConstantGenerator(generator))
  np.testing.assert_allclose(result.final[0], constant_transport(generator, 1.0), atol=1e-8)
  assert result.unitarity < 1e-11
  np.testing.assert_allclose(constant_transport(np.diag([1.0, 2.0]), 0.5),
                             np.diag(np.exp([-0.5j, -1.0j])))


def test_unitarity_before_projection():
  """Test coarse steps leave a measurable RK4 defect while the stored values stay unitary."""
  steps = 5
  traj = Trajectory(0, 0.5 * np.arange(steps), np.zeros((steps, 1, 2)), 0.5, np.zeros((steps, 1)))
  result = transport_matrix(traj, ConstantGenerator(SIGMA_Z))
  # |R(i/2)|² = 1 − 2.1e-4 per step for the RK4 stability polynomial
  assert 1e-5 < result.unitarity < 1e-2
  assert unitarity_defect(result.values.reshape(-1, 2, 2)) < 1e-12


def test_energy_drift_tolerance(harmonic):
  traj = hamiltonian_flow(harmonic.bundle, 0, (1.0, 0.5), 2.0, dt=0.5)
  assert traj.meta["energy_tol"] == pytest.approx(2e-8)
  assert traj.meta["energy_drift"] > traj.meta["energy_tol"]

  fine = hamiltonian_flow(harmonic.bundle, 0, (1.0, 0.5), 2.0)
  assert fine.meta["energy_drift"] <= fine.meta["energy_tol"]


def test_pauli_transport(pauli):
  """Test full and reduced transport are unitary and respect the eigenbundle."""
  full, reduced = transport(pauli.bundle, 0, (1.0, 0.5), 1.0, pauli.h1)
  assert full.form == "full"
  assert reduced.form == "reduced"
  assert full.values.shape[-2:] == (2, 2)
  assert reduced.values.shape[-2:] == (1, 1)
  assert unitarity_defect(full.values.reshape(-1, 2, 2)) < 1e-8
  assert fibre_defect(full, pauli.bundle) < 1e-6
  assert reduced_consistency(full, reduced) < 1e-6


def test_cocycle(pauli):
  defects = cocycle_defect(pauli.bundle, 1, (1.0, 0.5), 0.4, 0.6, pauli.h1)
  assert set(defects) == {"cocycle", "inverse", "return"}
  assert max(defects.values()) < 1e-6


def test_h_tilde_split(pauli):
  """Test the generator equals its Berry + Poisson + subprincipal split."""
  generator = h_tilde(pauli.bundle, pauli.h1, 0, 0)
  assert generator.splitting_defect() < 1e-10
  assert generator.hermiticity_defect() < 1e-10
  cross = h_tilde(pauli.bundle, pauli.h1, 1, 0)
  assert cross.berry is None
  assert cross.splitting_defect() == 0.0


def test_generated_algebra():
  """Test su(2) is irreducible and a single direction is not."""
  full = generated_algebra([SIGMA_X, SIGMA_Y])
  assert full.dimension == 3
  assert full.irreducible

  abelian = generated_algebra([SIGMA_Z, 2 * SIGMA_Z])
  assert abelian.dimension == 1
  assert not abelian.irreducible

  with pytest.raises(ConfigError):
    generated_algebra([])


def test_block_defect(pauli):
  assert block_defect(pauli.observable_field("x_squared"), pauli.bundle) < 1e-12
  assert block_defect(pauli.observable_field("off_diagonal"), pauli.bundle) > 0.1


def test_egorov_symbol_rejects_off_diagonal(pauli):
  with pytest.raises(PreconditionError):
    egorov_symbol(pauli.observable_field("off_diagonal"), pauli.bundle, 0.5, pauli.h1)


def test_csv_export(pauli, tmp_path):
  full, _ = transport(pauli.bundle, 0, [(1.0, 0.5), (0.0, -1.0)], 0.1, pauli.h1)
  path = write_trajectory_csv(full.trajectory, tmp_path / "trajectory.csv")
  lines = path.read_text().splitlines()
  assert lines[0] == "start,t,x1,xi1,energy"
  assert len(lines) == 1 + 2 * full.trajectory.times.size

  path = write_transport_csv(full, tmp_path / "transport.csv")
  header = path.read_text().splitlines()[0].split(",")
  assert header[:5] == ["start", "t", "z0", "z1", "unitarity"]
  assert len(header) == 5 + 8
