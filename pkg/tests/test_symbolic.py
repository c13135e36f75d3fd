import numpy as np
import pytest
import sympy

from semiclab.errors import ConfigError
from semiclab.symbolic import SymbolicMatrix, phase_space_symbols


def test_phase_space_symbols():
  assert [str(s) for s in phase_space_symbols(1)] == ["x1", "xi1"]
  assert [str(s) for s in phase_space_symbols(2)] == ["x1", "x2", "xi1", "xi2"]


def test_evaluate_and_derivatives():
  x, xi = phase_space_symbols(1)
  symbol = SymbolicMatrix([[x**2, xi], [xi, 1]], 1)
  coords = (np.array([0.5, -1.0]), np.array([2.0, 3.0]))

  values = symbol.evaluate(coords)
  assert values.shape == (2, 2, 2)
  np.testing.assert_allclose(values[:, 0, 0], [0.25, 1.0])
  np.testing.assert_allclose(values[:, 1, 1], [1.0, 1.0])

  # ∂x of the matrix
  dx = symbol.evaluate(coords, (1, 0))
  np.testing.assert_allclose(dx[:, 0, 0], [1.0, -2.0])
  np.testing.assert_allclose(dx[:, 0, 1], 0.0)


def test_jet_matches_closed_form():
  """Test the jet carries exact Taylor data."""
  x, xi = phase_space_symbols(1)
  symbol = SymbolicMatrix.scalar(sympy.sin(x) * sympy.cos(xi), 1)
  coords = (np.array([0.2, 1.3]), np.array([-0.4, 0.9]))
  jet = symbol.jet(coords, 3)
  np.testing.assert_allclose(jet.partial((1, 2))[:, 0, 0], -np.cos(coords[0]) * np.cos(coords[1]))
  np.testing.assert_allclose(jet.partial((3, 0))[:, 0, 0], -np.cos(coords[0]) * np.cos(coords[1]))


def test_broadcasting():
  x, xi = phase_space_symbols(1)
  symbol = SymbolicMatrix.scalar(x + xi, 1)
  values = symbol.evaluate((np.arange(3)[:, None], np.arange(4)[None, :]))
  assert values.shape == (3, 4, 1, 1)
  assert values[2, 3, 0, 0] == 5


def test_is_hermitian():
  x, xi = phase_space_symbols(1)
  assert SymbolicMatrix([[x, sympy.I * xi], [-sympy.I * xi, 0]], 1).is_hermitian
  assert not SymbolicMatrix([[x, sympy.I * xi], [sympy.I * xi, 0]], 1).is_hermitian


def test_algebra():
  x, xi = phase_space_symbols(1)
  a = SymbolicMatrix([[x, 0], [0, xi]], 1)
  b = SymbolicMatrix([[0, 1], [1, 0]], 1)
  assert (a @ b).expr == sympy.Matrix([[0, x], [xi, 0]])
  assert (a - a).expr.is_zero_matrix
  assert a.scale(2).expr == sympy.Matrix([[2 * x, 0], [0, 2 * xi]])


def test_invalid_symbols():
  x, _ = phase_space_symbols(1)
  with pytest.raises(ConfigError):
    SymbolicMatrix.scalar(x, 3)
  with pytest.raises(ConfigError):
    SymbolicMatrix.scalar(x * sympy.Symbol("mass"), 1)
  with pytest.raises(ConfigError):
    SymbolicMatrix.scalar(x, 1).evaluate((np.zeros(2), ))
