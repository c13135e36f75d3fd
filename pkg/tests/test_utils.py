import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from semiclab.errors import ConfigError
from semiclab.utils import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    dagger,
    hermitian_part,
    is_power_of_two,
    loglog_slope,
    operator_norm,
    parallel_map,
    parse_number_list,
    polar_unitary,
    unitarity_defect,
)


def test_is_power_of_two():
  assert all(is_power_of_two(n) for n in (1, 2, 16, 1024))
  assert not any(is_power_of_two(n) for n in (0, -4, 3, 48, 100))


def test_parse_number_list():
  # Test various list formats
  assert parse_number_list("64,128,256", int) == [64, 128, 256]
  assert parse_number_list("0.5, 1.0") == [0.5, 1.0]
  assert parse_number_list([1, 2], float) == [1.0, 2.0]


def test_parse_number_list_invalid():
  # Test invalid number lists
  with pytest.raises(ConfigError):
    parse_number_list("")
  with pytest.raises(ConfigError):
    parse_number_list("64,abc", int)
  with pytest.raises(ConfigError):
    parse_number_list("0.5", int)


def test_pauli_algebra():
  """Test the Pauli matrices satisfy σxσy = iσz."""
  np.testing.assert_allclose(SIGMA_X @ SIGMA_Y, 1j * SIGMA_Z)
  for sigma in (SIGMA_X, SIGMA_Y, SIGMA_Z):
    np.testing.assert_allclose(sigma @ sigma, np.eye(2))


def test_hermitian_part_and_dagger(rng):
  a = rng.normal(size=(5, 3, 3)) + 1j * rng.normal(size=(5, 3, 3))
  h = hermitian_part(a)
  np.testing.assert_allclose(h, dagger(h))
  np.testing.assert_allclose(hermitian_part(h), h)


def test_polar_unitary(rng):
  """Test the polar factor is unitary and recovers a unitary input."""
  u = unitary_group.rvs(4, random_state=1)
  factor, singular = polar_unitary(u)
  np.testing.assert_allclose(factor, u, atol=1e-12)
  np.testing.assert_allclose(singular, np.ones(4), atol=1e-12)

  a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
  factor, _ = polar_unitary(a)
  assert unitarity_defect(factor) < 1e-12


def test_unitarity_defect():
  assert unitarity_defect(np.eye(3)) == 0.0
  assert unitarity_defect(2 * np.eye(3)) == pytest.approx(3.0)
  assert unitarity_defect(np.zeros((0, 2, 2))) == 0.0


def test_operator_norm(rng):
  """Test the exact and power-iteration branches agree with numpy."""
  small = rng.normal(size=(8, 8))
  assert operator_norm(small) == pytest.approx(np.linalg.norm(small, 2))

  large = np.diag(np.linspace(1.0, 3.0, 64)) + 1e-3 * rng.normal(size=(64, 64))
  assert operator_norm(large, tol=1e-10) == pytest.approx(np.linalg.norm(large, 2), rel=1e-4)
  assert operator_norm(np.zeros((40, 40))) == 0.0


def test_loglog_slope():
  hbars = [0.1, 0.05, 0.025, 0.0125]
  slope, stderr = loglog_slope(hbars, [3 * h**2 for h in hbars])
  assert slope == pytest.approx(2.0)
  assert stderr == pytest.approx(0.0, abs=1e-10)

  # Two points give a slope but no standard error
  slope, stderr = loglog_slope([0.1, 0.05], [0.1, 0.05])
  assert slope == pytest.approx(1.0)
  assert math.isnan(stderr)

  # Zero errors are dropped before the fit
  slope, _ = loglog_slope([0.1, 0.05], [0.0, 0.05])
  assert math.isnan(slope)


def test_parallel_map_keeps_order():
  """Test results come back in input order for several workers."""
  def square(value):
    return value * value

  assert parallel_map(square, range(20), workers=4) == [v * v for v in range(20)]
  assert parallel_map(square, [3], workers=4) == [9]
  assert parallel_map(square, [], workers=1) == []
