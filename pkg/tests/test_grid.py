import math

import numpy as np
import pytest
import sympy

from semiclab.errors import ConfigError, GridError
from semiclab.grid import (
    GridFunction,
    build_grid,
    fourier_interpolate,
    grid_integral,
    poisson_bracket,
    quantum_grid,
    random_projector_symbol,
    random_trig_symbol,
    spectral_derivative,
)
from semiclab.symbolic import SymbolicMatrix, phase_space_symbols
from semiclab.utils import SIGMA_Z


def sampled(grid, expr):
  """Grid field of a closed-form scalar, with and without its source."""
  field = GridFunction.from_symbolic(grid, SymbolicMatrix.scalar(expr, grid.d))
  return field, GridFunction(grid, field.values)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(d=3, L_x=1.0, L_xi=1.0, N=32, hbar=0.1),
        dict(d=1, L_x=1.0, L_xi=1.0, N=48, hbar=0.1),
        dict(d=1, L_x=1.0, L_xi=1.0, N=8, hbar=0.1),
        dict(d=1, L_x=-1.0, L_xi=1.0, N=32, hbar=0.1),
        dict(d=1, L_x=1.0, L_xi=1.0, N=32, hbar=0.0),
        dict(d=1, L_x=1.0, L_xi=1.0, N=32, hbar=2.0),
    ],
)
def test_build_grid_invalid(kwargs):
  with pytest.raises(GridError):
    build_grid(**kwargs)


def test_quantum_grid(torus_grid):
  assert torus_grid.hbar == pytest.approx(2 * math.pi / 32)
  assert torus_grid.is_quantum
  assert torus_grid.shape == (32, 32)
  assert torus_grid.x_axis()[0] == pytest.approx(-math.pi)
  assert not build_grid(1, 2 * math.pi, 2 * math.pi, 32, 0.05).is_quantum


def test_spectral_derivative(torus_grid):
  """Test spectral derivatives are exact for band-limited fields."""
  x, xi = phase_space_symbols(1)
  _, field = sampled(torus_grid, sympy.sin(x) * sympy.cos(2 * xi))
  mesh = torus_grid.mesh()
  dx = spectral_derivative(field, 0)
  np.testing.assert_allclose(dx.values[..., 0, 0], np.cos(mesh[0]) * np.cos(2 * mesh[1]), atol=1e-12)
  dxi2 = spectral_derivative(field, 1, order=2)
  np.testing.assert_allclose(dxi2.values[..., 0, 0], -4 * np.sin(mesh[0]) * np.cos(2 * mesh[1]),
                             atol=1e-11)
  with pytest.raises(GridError):
    spectral_derivative(field, 2)


def test_poisson_bracket(torus_grid):
  """Test {sin x, cos ξ} = cos x sin ξ from closed forms and from samples."""
  x, xi = phase_space_symbols(1)
  mesh = torus_grid.mesh()
  expected = np.cos(mesh[0]) * np.sin(mesh[1])
  for a, b in zip(sampled(torus_grid, sympy.sin(x)), sampled(torus_grid, sympy.cos(xi))):
    bracket = poisson_bracket(a, b)
    np.testing.assert_allclose(bracket.values[..., 0, 0], expected, atol=1e-12)


def test_poisson_bracket_coordinates():
  grid = quantum_grid(1, 32, 4.0, 4.0)
  x, xi = phase_space_symbols(1)
  a, _ = sampled(grid, x)
  b, _ = sampled(grid, xi)
  np.testing.assert_allclose(poisson_bracket(a, b).values, -1.0)


def test_grid_integral(torus_grid):
  x, _ = phase_space_symbols(1)
  one = GridFunction.constant(torus_grid, 1.0)
  assert grid_integral(one)[0, 0] == pytest.approx(4 * math.pi**2)
  field, _ = sampled(torus_grid, sympy.cos(x)**2)
  assert grid_integral(field)[0, 0].real == pytest.approx(2 * math.pi**2)


def test_fourier_interpolate(torus_grid, rng):
  """Test trigonometric interpolation at random off-grid points."""
  x, xi = phase_space_symbols(1)
  _, field = sampled(torus_grid, sympy.sin(x) * sympy.cos(2 * xi) + sympy.cos(3 * x))
  px = rng.uniform(-math.pi, math.pi, 20)
  pxi = rng.uniform(-math.pi, math.pi, 20)
  values = fourier_interpolate(field, (px, pxi))
  expected = np.sin(px) * np.cos(2 * pxi) + np.cos(3 * px)
  assert values.shape == (20, 1, 1)
  np.testing.assert_allclose(values[:, 0, 0], expected, atol=1e-12)


def test_grid_function_checks(torus_grid):
  with pytest.raises(GridError):
    GridFunction(torus_grid, np.zeros((16, 16, 1, 1)))
  with pytest.raises(ConfigError):
    GridFunction(torus_grid, np.ones((32, 32)) * 1j, hermitian=True)
  other = quantum_grid(1, 64, 2 * math.pi, 2 * math.pi)
  with pytest.raises(GridError):
    GridFunction.constant(torus_grid, 1.0) + GridFunction.constant(other, 1.0)


def test_constant_and_algebra(torus_grid):
  sz = GridFunction.constant(torus_grid, SIGMA_Z)
  assert sz.hermitian
  assert sz.shape == (2, 2)
  np.testing.assert_allclose((sz @ sz).values, np.broadcast_to(np.eye(2), (32, 32, 2, 2)))
  assert sz.scale(-2.0).max_norm() == pytest.approx(2.0)
  np.testing.assert_allclose(sz.dagger().values, sz.values)


def test_random_symbols(torus_grid, rng):
  """Test random fields are hermitian and random projectors idempotent."""
  symbol = random_trig_symbol(1, 2, rng)
  values = symbol.evaluate(torus_grid.mesh())
  np.testing.assert_allclose(values, np.conj(np.swapaxes(values, -1, -2)), atol=1e-12)

  projector = random_projector_symbol(1, rng).evaluate(torus_grid.mesh())
  np.testing.assert_allclose(projector @ projector, projector, atol=1e-12)
  np.testing.assert_allclose(np.trace(projector, axis1=-2, axis2=-1), 1.0, atol=1e-12)
