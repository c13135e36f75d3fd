import pytest

from semiclab.config import ExperimentConfig
from semiclab.errors import ConfigError
from semiclab.reports import compare_rows, criteria_rows, print_comparison, print_report, sweep_tables
from semiclab.storage import Criterion, RunDirectory, read_manifest

EGOROV_SUMMARY = {
    "reports": [{
        "observable": "x_squared",
        "t": 1.0,
        "hbars": [0.2, 0.1],
        "errors": [4e-2, 1e-2],
        "slope": 2.0,
        "stderr": None,
    }],
    "slopes": {"off_block": 1.0},
}


def finished_run(criteria, summary=None, **overrides):
  run = RunDirectory.create(ExperimentConfig(kind="egorov").updated(overrides))
  run.finish(summary or {}, criteria)
  return run.path


def test_criteria_rows(output_root):
  path = finished_run([Criterion("slope", True, 2.01, 1.7), Criterion("norm", False, None, 1e-9)])
  rows = criteria_rows(read_manifest(path))
  assert rows == [["slope", "2.010", "1.700", "PASS"], ["norm", "N/A", "1.000e-09", "FAIL"]]


def test_sweep_tables(output_root):
  path = finished_run([], EGOROV_SUMMARY)
  tables = sweep_tables(read_manifest(path))
  titles = [title for title, _, _ in tables]
  assert titles == ["x_squared at t=1: slope +2.00", "fitted slopes"]
  assert tables[0][2] == [[0.2, 4e-2], [0.1, 1e-2]]
  assert tables[1][2] == [["off_block", "+1.00"]]


def test_print_report(output_root, capsys):
  passed = print_report(finished_run([Criterion("slope", True, 2.0, 1.7)], EGOROV_SUMMARY))
  output = capsys.readouterr().out
  assert passed
  assert "egorov on pauli" in output
  assert "Criteria" in output
  assert "PASS" in output

  assert not print_report(finished_run([Criterion("slope", False, 1.0, 1.7)]))
  assert "1 of 1 failed" in capsys.readouterr().out


def test_print_report_missing(tmp_path):
  with pytest.raises(ConfigError):
    print_report(tmp_path)


def test_comparison(output_root, capsys):
  """Test criteria are matched by name across runs."""
  first = finished_run([Criterion("slope", True, 2.0, 1.7), Criterion("norm", True, 0.0, 1e-9)])
  second = finished_run([Criterion("slope", False, 1.2, 1.7)], seed=3)
  rows = compare_rows(read_manifest(first), read_manifest(second))
  assert rows[0] == ["slope", "2.000", "PASS", "1.200", "FAIL"]
  assert rows[1] == ["norm", "0", "PASS", "-", "-"]

  assert not print_comparison(first, second)
  assert "differ" in capsys.readouterr().out
