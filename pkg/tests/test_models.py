import math

import numpy as np
import pytest

from semiclab.errors import ConfigError
from semiclab.models import GridChoice, get_model, model_catalog, sweep_instances
from semiclab.transport import branch_algebra


def test_catalog():
  ids = [spec.id for spec in model_catalog()]
  assert ids == ["harmonic", "pauli", "dirac", "quartic", "anisotropic"]
  for spec in model_catalog():
    assert sum(spec.multiplicities) == spec.n
    assert len(spec.start) == 2 * spec.d
    # Sweeps refine ħ
    assert max(spec.hbars) == spec.sweep[0].hbar


def test_get_model_and_resolve():
  spec = get_model("pauli")
  assert spec.resolve() == {"c": 0.5, "delta": 0.5, "kappa": 0.2}
  assert spec.resolve({"kappa": "0.1"})["kappa"] == 0.1
  with pytest.raises(ConfigError):
    spec.resolve({"mass": 1.0})
  with pytest.raises(ConfigError):
    get_model("hydrogen")


def test_grid_choice():
  """Test ħ = L_x L_ξ/(2πN) and the fallback box for unknown sizes."""
  assert GridChoice(64, 9.0, 9.0).hbar == pytest.approx(81 / (128 * math.pi))
  spec = get_model("quartic")
  assert spec.choice_for(32) == GridChoice(32, 6.0, 6.0)
  assert spec.choice_for(64) == GridChoice(64, 6.0, 6.0)


def test_sweep_order():
  instances = sweep_instances(get_model("pauli"), [256, 64, 128])
  assert [i.choice.N for i in instances] == [64, 128, 256]
  hbars = [i.hbar for i in instances]
  assert hbars == sorted(hbars, reverse=True)
  # Instances are lazy: nothing has been built yet
  assert "bundle" not in instances[0].__dict__


def test_pauli_closed_forms(pauli):
  """Test H₀ = s·Id + K with K² = ε² Id."""
  mesh = pauli.grid.mesh()
  h0 = pauli.h0.values
  s = (mesh[0]**2 + mesh[1]**2) / 2
  k = h0 - s[..., None, None] * np.eye(2)
  eps = pauli.branch_energy(1).evaluate(mesh)[..., 0, 0].real - s
  np.testing.assert_allclose(k @ k, (eps**2)[..., None, None] * np.eye(2), atol=1e-10)
  np.testing.assert_allclose(pauli.h1.values, np.broadcast_to(0.2 * np.diag([1.0, -1.0]), h0.shape))
  assert pauli.symbol.truncation_order == 1


def test_observables(pauli, harmonic):
  mesh = pauli.grid.mesh()
  x_squared = pauli.observable_field("x_squared").values
  np.testing.assert_allclose(x_squared[..., 0, 0], mesh[0]**2)
  # The off-diagonal observable has vanishing diagonal blocks
  off = pauli.observable_field("off_diagonal").values
  for nu in range(2):
    p = pauli.bundle.projectors[nu].values
    assert np.max(np.abs(p @ off @ p)) < 1e-10
  with pytest.raises(ConfigError):
    harmonic.observable("off_diagonal")
  with pytest.raises(ConfigError):
    pauli.observable("angular_momentum")


def test_harmonic_spectrum(harmonic):
  """Test the lowest levels are ħ(k + 1/2)."""
  energies, _ = harmonic.spectrum
  expected = harmonic.hbar * (np.arange(8) + 0.5)
  np.testing.assert_allclose(energies[:8], expected, atol=1e-6)
  assert harmonic.trusted_basis.shape[1] == np.sum(energies <= 6.0)
  assert harmonic.trusted_norm(np.eye(harmonic.operator.dim)) == pytest.approx(1.0)


def test_dirac_is_doubly_degenerate(dirac):
  assert dirac.bundle.multiplicities == (2, 2)
  for nu in range(2):
    np.testing.assert_allclose(np.trace(dirac.bundle.projectors[nu].values, axis1=-2, axis2=-1), 2.0,
                               atol=1e-10)
  # Mass 1 keeps the bands apart everywhere
  assert dirac.bundle.gap >= 2.0 - 1e-10


@pytest.mark.parametrize("nu", [0, 1])
def test_dirac_branches_are_irreducible(dirac, nu):
  """Test the reduced generator of each doubly degenerate branch acts irreducibly on C²."""
  report = branch_algebra(dirac.bundle, nu, dirac.h1, seed=3)
  assert report.k == 2
  assert report.irreducible
  assert report.dimension >= 3


def test_decoupled_dirac_is_reducible():
  """Test switching off the x-dependent couplings leaves a reducible transport algebra."""
  instance = get_model("dirac").instance(params={"a2": 0.0, "a3": 0.0})
  report = branch_algebra(instance.bundle, 1, instance.h1)
  assert not report.irreducible
