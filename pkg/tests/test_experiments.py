import json
import math

import pytest

from semiclab.config import KINDS, ExperimentConfig
from semiclab.egorov import EgorovReport
from semiclab.errors import PreconditionError
from semiclab.experiments import EXPERIMENTS, ExperimentResult, run_experiment
from semiclab.identities import RELATIONS
from semiclab.storage import RunDirectory


def run_kind(**overrides):
  config = ExperimentConfig().updated(overrides)
  run = RunDirectory.create(config)
  return run_experiment(config, run), run


def test_every_kind_has_a_runner():
  assert set(EXPERIMENTS) == set(KINDS)


def test_check_and_flag():
  """Test NaN fails a check and at_least flips the comparison."""
  result = ExperimentResult("egorov", "pauli")
  assert result.check("small", 1e-10, 1e-9).passed
  assert not result.check("nan", math.nan, 1e-9).passed
  assert result.check("slope", 2.0, 1.7, at_least=True).passed
  assert not result.check("slope", 1.0, 1.7, at_least=True).passed
  assert result.flag("irreducible", True).value is None
  assert not result.passed


def test_identities_run(output_root):
  result, run = run_kind(kind="identities", seed=3)
  assert result.passed
  assert len(result.criteria) == 2 * len(RELATIONS)
  manifest = json.loads((run.path / "manifest.json").read_text())
  assert manifest["passed"] is True
  assert manifest["seed"] == 3
  assert "bracket_identities.csv" in manifest["artifacts"]
  lines = (run.path / "bracket_identities.csv").read_text().splitlines()
  assert lines[0] == "d,relation,defect"
  assert len(lines) == 1 + 2 * len(RELATIONS)


def test_sw_axioms_run(output_root):
  result, run = run_kind(kind="sw-axioms", spin=0.5)
  assert result.passed, [c.name for c in result.criteria if not c.passed]
  assert result.summary["sigma_z_deviation"] < 1e-10
  assert (run.path / "orbit_U(1).csv").is_file()
  assert (run.path / "orbit_SU(2) spin-1_2.csv").is_file()
  assert (run.path / "sw_axioms.csv").is_file()


def test_u1_only_axioms(output_root):
  result, _ = run_kind(kind="sw-axioms", group="u1")
  assert result.passed
  assert "sigma_z_deviation" not in result.summary


def test_spectral_id_needs_a_uniform_gap(output_root):
  """Test overlapping branches and single-branch models are refused."""
  with pytest.raises(PreconditionError):
    run_kind(kind="spectral-id", model="pauli", grid_sizes=[64])
  with pytest.raises(PreconditionError):
    run_kind(kind="spectral-id", model="harmonic", branch=0)


def _criterion(result, name):
  return next(c for c in result.criteria if c.name == name)


def test_transport_energy_drift_is_a_criterion(output_root):
  """Test coarse flow steps fail the energy conservation criterion."""
  result, _ = run_kind(kind="transport", model="pauli", grid_sizes=[64], time=2.0, dt=0.5)
  drift = _criterion(result, "energy drift (branch 0)")
  assert not drift.passed
  assert drift.threshold == pytest.approx(2e-8)
  assert drift.value == result.summary["branch 0"]["energy_drift"]
  assert not result.passed


def test_egorov_checks_time_block_preservation(output_root, monkeypatch):
  """Test a slowly decaying off-diagonal block fails while the Egorov slope passes."""

  def fake_egorov(spec, name, t, *args):
    report = EgorovReport(spec.id, t, [0.2, 0.1, 0.05], [4e-2, 1e-2, 2.5e-3]).fit()
    report.extra["off_block"] = [1e-2, 8e-3, 6.4e-3]
    report.extra["off_block_slope"] = 0.32
    return report

  monkeypatch.setattr("semiclab.experiments.egorov_error", fake_egorov)
  result, _ = run_kind(kind="egorov", model="pauli", times=[0.5])
  assert _criterion(result, "Egorov slope (x_squared, t=0.5)").passed
  block = _criterion(result, "time-block preservation (x_squared, t=0.5)")
  assert not block.passed
  assert block.threshold == pytest.approx(0.7)
  assert not result.passed
