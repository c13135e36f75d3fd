import json
import math

import numpy as np
import pytest

from semiclab.egorov import (
    EgorovReport,
    egorov_error,
    egorov_point,
    evolve_exact,
    propagator,
    sw_egorov_error,
    write_report,
)
from semiclab.errors import ConfigError, PreconditionError
from semiclab.models import get_model
from semiclab.weyl import DiscretizedOperator


def test_report_validation():
  with pytest.raises(ConfigError):
    EgorovReport("pauli", 1.0, [0.2, 0.1], [1.0])
  with pytest.raises(ConfigError):
    EgorovReport("pauli", 1.0, [0.1, 0.2], [1.0, 2.0])
  with pytest.raises(ConfigError):
    EgorovReport("pauli", 1.0, [0.1, 0.1], [1.0, 2.0])


def test_report_fit():
  """Test the slope of errors proportional to ħ²."""
  hbars = [0.2, 0.1, 0.05]
  report = EgorovReport("pauli", 1.0, hbars, [3 * h**2 for h in hbars]).fit()
  assert report.slope == pytest.approx(2.0)

  # Exact cases carry no fit
  exact = EgorovReport("harmonic", 1.0, hbars, [1e-12] * 3, exact=True).fit()
  assert math.isnan(exact.slope)
  data = exact.to_dict()
  assert data["slope"] is None
  assert data["stderr"] is None
  assert data["exact"] is True


def test_write_report(tmp_path):
  report = EgorovReport("pauli", 0.5, [0.2, 0.1, 0.05], [4e-2, 1e-2, 2.5e-3]).fit()
  json_path, csv_path = write_report(report, tmp_path / "out", "egorov")
  data = json.loads(json_path.read_text())
  assert data["model"] == "pauli"
  assert data["slope"] == pytest.approx(2.0)
  lines = csv_path.read_text().splitlines()
  assert lines[0] == "hbar,error"
  assert lines[1] == "0.2,0.04"
  assert len(lines) == 4


def test_propagator(torus_grid, rng):
  """Test e^{−iHt/ħ} is unitary and commutes with H."""
  a = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
  h = DiscretizedOperator(a + a.conj().T, torus_grid)
  u = propagator(h, 0.3)
  np.testing.assert_allclose(u.conj().T @ u, np.eye(32), atol=1e-10)
  np.testing.assert_allclose(u @ h.matrix, h.matrix @ u, atol=1e-9)

  with pytest.raises(ConfigError):
    propagator(DiscretizedOperator(a, torus_grid, hermitian=False), 0.3)


def test_evolve_exact(torus_grid, rng):
  a = rng.normal(size=(32, 32))
  h = DiscretizedOperator(a + a.T, torus_grid)
  b = DiscretizedOperator(np.diag(rng.normal(size=32)), torus_grid)
  assert evolve_exact(h, b, 0.0) is b
  # Functions of H are conserved
  evolved = evolve_exact(h, DiscretizedOperator(h.matrix @ h.matrix, torus_grid), 0.7)
  np.testing.assert_allclose(evolved.matrix, h.matrix @ h.matrix, atol=1e-8)


def test_egorov_time_bounds():
  spec = get_model("pauli")
  with pytest.raises(ConfigError):
    egorov_error(spec, "x_squared", -1.0)
  with pytest.raises(ConfigError):
    egorov_error(spec, "x_squared", 3 * spec.period)


def test_egorov_rejects_off_diagonal():
  """Test observables outside the invariant algebra are refused."""
  with pytest.raises(PreconditionError):
    egorov_error(get_model("pauli"), "off_diagonal", 0.5, sizes=[64])


def test_egorov_point(pauli):
  point = egorov_point(pauli, "x_squared", 0.5, block_order=0)
  assert point["hbar"] == pytest.approx(pauli.hbar)
  assert 0.0 < point["error"] < 5.0
  assert point["off_block"] >= 0.0
  assert "off_block" not in egorov_point(pauli, "identity", 0.5)


def test_sw_egorov_at_time_zero():
  """Test the SW-Egorov error at t=0 is only dequantization noise."""
  report = sw_egorov_error(get_model("dirac"), "cos_x", 0.0, sizes=[32, 64], nodes=8)
  assert report.kind == "sw-egorov"
  assert report.hbars == sorted(report.hbars, reverse=True)
  assert max(report.errors) <= 1e-6
  assert report.extra["irrep"] == "SU(2) spin-1/2"
  assert report.extra["irreducible"]
  assert report.extra["algebra_dimension"] >= 3


def test_sw_egorov_needs_irreducible_transport():
  with pytest.raises(PreconditionError, match="reducible algebra"):
    sw_egorov_error(get_model("dirac"), "cos_x", 0.5, sizes=[32, 64, 128], params={"a2": 0.0, "a3": 0.0})
  with pytest.raises(ConfigError):
    sw_egorov_error(get_model("dirac"), "cos_x", 0.5, nu=2, sizes=[32])
