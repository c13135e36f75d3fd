import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semiclab.errors import ConfigError, PreconditionError, QuadratureError, SubgroupError
from semiclab.stratweyl import (
    build_calculus,
    calculus_defects,
    coadjoint_action,
    coherent_state,
    commutant_dimension,
    generic_irrep,
    group_element,
    irrep_for,
    moment_map,
    on_orbit,
    orbit_quadrature,
    random_group_element,
    spin_matrices,
    su2_irrep,
    sw_inverse,
    sw_symbol,
    u1_irrep,
    write_orbit_csv,
)
from semiclab.utils import SIGMA_X, SIGMA_Y, SIGMA_Z

twice_spins = st.integers(min_value=1, max_value=5)


@given(twice_spins)
def test_spin_matrices(twice):
  """Test [Sx, Sy] = iSz and S² = j(j + 1)."""
  j = twice / 2
  sx, sy, sz = spin_matrices(j)
  np.testing.assert_allclose(sx @ sy - sy @ sx, 1j * sz, atol=1e-12)
  casimir = sx @ sx + sy @ sy + sz @ sz
  np.testing.assert_allclose(casimir, j * (j + 1) * np.eye(twice + 1), atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(twice_spins, st.integers(min_value=0, max_value=2**16))
def test_sw_axioms(twice, seed):
  """Test every calculus axiom holds for spin j = 1/2 … 5/2."""
  calculus = build_calculus(su2_irrep(twice / 2))
  defects = calculus_defects(calculus, np.random.default_rng(seed), samples=3)
  assert set(defects) == {
      "unit", "conjugation", "tracial", "round_trip", "quantizer_hermitian", "square_root", "covariance"
  }
  assert max(defects.values()) < 1e-9


def test_u1_calculus(rng):
  calculus = build_calculus(u1_irrep())
  assert calculus.orbit.size == 1
  assert max(calculus_defects(calculus, rng, samples=3).values()) < 1e-12
  np.testing.assert_allclose(sw_symbol(calculus, np.array([[2.5]])), [2.5])


def test_su2_irrep_bounds():
  with pytest.raises(ConfigError):
    su2_irrep(3.0)
  with pytest.raises(ConfigError):
    su2_irrep(0.3)
  irrep = su2_irrep(1.5)
  assert irrep.k == 4
  assert irrep.name == "SU(2) spin-3/2"
  np.testing.assert_allclose(moment_map(irrep, irrep.highest_weight), [0.0, 0.0, 1.5], atol=1e-12)


def test_irrep_for():
  assert irrep_for("su2", 2).spin == 0.5
  assert irrep_for("su2", 1).group == "u1"
  assert irrep_for("u1", 1).k == 1
  with pytest.raises(ConfigError):
    irrep_for("generic", 2)


def test_generic_irrep():
  """Test validation of user-supplied generators."""
  irrep = generic_irrep([-0.5j * SIGMA_X, -0.5j * SIGMA_Y, -0.5j * SIGMA_Z])
  assert irrep.dimension == 3
  with pytest.raises(ConfigError):
    generic_irrep([-1j * SIGMA_Z])
  with pytest.raises(ConfigError):
    generic_irrep([SIGMA_X])
  with pytest.raises(QuadratureError):
    orbit_quadrature(irrep)


def test_moment_map_equivariance(rng):
  """Test J(ρ(g)v) = Ad*_g J(v)."""
  irrep = su2_irrep(1.0)
  v = rng.normal(size=3) + 1j * rng.normal(size=3)
  v /= np.linalg.norm(v)
  g = random_group_element(irrep, rng)
  np.testing.assert_allclose(moment_map(irrep, g @ v), coadjoint_action(irrep, g, moment_map(irrep, v)),
                             atol=1e-12)


def test_coherent_states():
  irrep = su2_irrep(1.0)
  eta = np.array([0.6, 0.0, 0.8])
  state = coherent_state(irrep, eta)
  assert on_orbit(irrep, eta)
  np.testing.assert_allclose(moment_map(irrep, state), eta, atol=1e-12)
  with pytest.raises(PreconditionError):
    coherent_state(irrep, np.array([0.0, 0.0, 2.0]))


def test_group_element(rng):
  """Test a global phase is divided out for SU(2)."""
  irrep = su2_irrep(0.5)
  g = random_group_element(irrep, rng)
  assert np.linalg.det(g) == pytest.approx(1.0)
  recovered = group_element(irrep, np.exp(0.3j) * g)
  assert np.min([np.max(np.abs(recovered - s * g)) for s in (1, -1)]) < 1e-10
  with pytest.raises(SubgroupError):
    group_element(irrep, 2 * np.eye(2))
  with pytest.raises(SubgroupError):
    group_element(irrep, np.eye(3))


def test_sw_round_trip_and_errors(rng):
  calculus = build_calculus(su2_irrep(1.0))
  a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
  np.testing.assert_allclose(sw_inverse(calculus, sw_symbol(calculus, a)), a, atol=1e-10)
  with pytest.raises(ConfigError):
    sw_symbol(calculus, np.eye(2))
  with pytest.raises(ConfigError):
    sw_inverse(calculus, np.zeros(3))


def test_commutant_dimension():
  assert commutant_dimension([SIGMA_X, SIGMA_Z]) == 1
  assert commutant_dimension([SIGMA_Z]) == 2
  with pytest.raises(ConfigError):
    commutant_dimension([])


def test_write_orbit_csv(tmp_path):
  calculus = build_calculus(su2_irrep(0.5))
  path = write_orbit_csv(calculus, tmp_path / "orbit.csv")
  lines = path.read_text().splitlines()
  assert lines[0].startswith("eta0,eta1,eta2,weight,delta_re_00")
  assert len(lines) == 1 + calculus.orbit.size
