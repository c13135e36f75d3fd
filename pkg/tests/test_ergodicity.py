import math

import numpy as np
import pytest

from semiclab.ergodicity import (
    BlockObservable,
    LevelSurfaceMeasure,
    delta_bounds,
    eigensolve_window,
    ergodic_time_average,
    group_orbit_equivalence,
    haar_orbit_moments,
    level_surface,
    level_surfaces,
    liouville_average,
    mollifier_convergence,
    quasimodes,
    surface_ensemble,
    transport_series,
    weyl_prediction,
)
from semiclab.errors import ConfigError, PreconditionError
from semiclab.projections import orthogonalize_projector, riesz_projection
from semiclab.stratweyl import build_calculus, su2_irrep, u1_irrep
from semiclab.weyl import quantize


def test_eigensolve_window(harmonic):
  """Test the window around E = 4 holds the oscillator levels ħ(k + 1/2) inside it."""
  data = eigensolve_window(harmonic.operator, 4.0, 3.0, harmonic.spectrum)
  low, high = data.window
  assert low == pytest.approx(4.0 - 3.0 * harmonic.hbar)
  assert np.all((data.energies >= low) & (data.energies <= high))
  assert data.count == 6
  assert data.void
  assert data.residual < 1e-9
  np.testing.assert_allclose(data.states.conj().T @ data.states, np.eye(6), atol=1e-10)


def test_window_edge_cases(harmonic):
  empty = eigensolve_window(harmonic.operator, -5.0, 1.0, harmonic.spectrum)
  assert empty.count == 0
  assert empty.void
  with pytest.raises(ConfigError):
    eigensolve_window(harmonic.operator, 4.0, 0.0)


def test_quasimodes(pauli):
  data = eigensolve_window(pauli.operator, 4.0, 3.0, pauli.spectrum)
  projection = riesz_projection(pauli.symbol, (1, 1), 0, 1).symbol
  projector = orthogonalize_projector(quantize(projection)).matrix
  qset = quasimodes(data, projector, 0.1, 0.5, pauli.operator)
  assert qset.total == data.count
  assert 0 < qset.count <= data.count
  np.testing.assert_allclose(np.linalg.norm(qset.modes, axis=0), 1.0)
  assert qset.lower_bound == pytest.approx(0.4 / 0.9)
  assert np.all(qset.discrepancies >= 0)

  with pytest.raises(PreconditionError):
    quasimodes(data, projector, 0.6, 0.5, pauli.operator)


def test_level_surface_harmonic(harmonic):
  """Test vol {H = E} = 2π and the average of x² over it equals E."""
  measure = level_surface(harmonic.bundle, 0, 3.0)
  assert measure.vol == pytest.approx(2 * math.pi, rel=2e-2)
  assert measure.weights.sum() == pytest.approx(1.0)
  average = liouville_average(harmonic.observable_field("x_squared"), measure)
  assert average[0, 0].real == pytest.approx(3.0, rel=2e-2)
  assert mollifier_convergence(harmonic.observable_field("x_squared"), harmonic.bundle, measure) < 0.1


def test_weyl_prediction_matches_count(harmonic):
  measure = level_surface(harmonic.bundle, 0, 4.0)
  data = eigensolve_window(harmonic.operator, 4.0, 3.0, harmonic.spectrum)
  predicted, per_branch = weyl_prediction([measure], (1, ), 3.0, harmonic.hbar, 1)
  assert per_branch == [predicted]
  assert abs(predicted - data.count) <= 1.0


def test_empty_level_surfaces(harmonic):
  """Test an energy below the branch gets an empty measure."""
  with pytest.raises(PreconditionError):
    level_surface(harmonic.bundle, 0, -2.0)
  measures = level_surfaces(harmonic.bundle, -2.0)
  assert len(measures) == 1
  assert measures[0].vol == 0.0
  with pytest.raises(PreconditionError):
    liouville_average(harmonic.observable_field("x_squared"), measures[0])
  with pytest.raises(PreconditionError):
    delta_bounds(measures, (1, ))


def test_delta_bounds(torus_grid):
  measures = [
      LevelSurfaceMeasure(nu, 1.0, 0.1, np.zeros(torus_grid.shape), vol, torus_grid)
      for nu, vol in enumerate((1.0, 3.0))
  ]
  assert delta_bounds(measures, (2, 1)) == pytest.approx([0.4, 0.6])
  empty = [LevelSurfaceMeasure(0, 1.0, 0.1, np.zeros(torus_grid.shape), 0.0, torus_grid)]
  with pytest.raises(PreconditionError):
    delta_bounds(empty, (1, ))


def test_haar_orbit_moments(rng):
  """Test Haar-pushed points reproduce the orbit quadrature moments."""
  irrep = su2_irrep(0.5)
  moments = haar_orbit_moments(irrep, build_calculus(irrep), 4000, rng)
  assert moments["first"] < 0.05
  assert moments["second"] < 0.05


def test_time_average_on_oscillator(harmonic, rng):
  """Test one-period averages of x² equal the energy of each start."""
  measure = level_surface(harmonic.bundle, 0, 3.0)
  calculus = build_calculus(u1_irrep())
  ensemble = surface_ensemble(measure, calculus.irrep, 4, rng)
  series = transport_series(harmonic.bundle, 0, ensemble.points, 2 * math.pi, dt=0.02)
  observable = BlockObservable(harmonic.observable_field("x_squared"), harmonic.bundle, 0, calculus)

  report = ergodic_time_average(observable, ensemble, series, measure)
  energies = np.sum(ensemble.points**2, axis=1) / 2
  np.testing.assert_allclose(report.averages, energies, atol=1e-4)
  assert report.space_average == pytest.approx(3.0, rel=2e-2)

  equivalence = group_orbit_equivalence(observable, ensemble, series, measure, stride=10)
  assert equivalence.relative < 1e-8

  with pytest.raises(ConfigError):
    series.samples(4 * math.pi)
  with pytest.raises(ConfigError):
    transport_series(harmonic.bundle, 0, ensemble.points, 0.0)
