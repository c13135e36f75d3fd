import json
import math

import numpy as np
import pytest

from semiclab import __version__
from semiclab.config import ExperimentConfig
from semiclab.errors import ConfigError
from semiclab.storage import Criterion, RunDirectory, csv_name, read_manifest, to_jsonable


def test_to_jsonable():
  """Test numpy values and non-finite floats become plain JSON."""
  data = {
      "array": np.array([1.0, math.nan]),
      "flag": np.bool_(True),
      "count": np.int64(3),
      "z": 1 + 2j,
      "inf": math.inf,
      1: (0.5, ),
  }
  assert to_jsonable(data) == {
      "array": [1.0, None],
      "flag": True,
      "count": 3,
      "z": {"re": 1.0, "im": 2.0},
      "inf": None,
      "1": [0.5],
  }
  json.dumps(to_jsonable(data))


def test_csv_name():
  assert csv_name("pauli", "egorov") == "pauli_egorov.csv"
  assert csv_name("pauli", "egorov", 0.05) == "pauli_egorov_0p05.csv"


def test_run_directory(output_root):
  config = ExperimentConfig(kind="identities")
  first = RunDirectory.create(config)
  second = RunDirectory.create(config)
  assert first.path.parent == output_root
  assert first.path.name.startswith("identities_pauli_")
  # Same second, distinct directories
  assert first.path != second.path

  first.write_csv("table.csv", ["hbar", "error"], [[0.1, 1e-3], [0.05, 1 + 1j]])
  lines = (first.path / "table.csv").read_text().splitlines()
  assert lines == ["hbar,error", "0.1,0.001", "0.05,1.0+1j"]

  manifest_path = first.finish({"worst": 1e-12}, [Criterion("defect", True, 1e-12, 1e-9)])
  manifest = json.loads(manifest_path.read_text())
  assert manifest["version"] == __version__
  assert manifest["passed"] is True
  assert manifest["artifacts"] == ["summary.json", "table.csv"]
  assert manifest["config_sha256"] == config.digest()


def test_read_manifest(output_root):
  run = RunDirectory.create(ExperimentConfig())
  run.finish({"worst": 0.5}, [Criterion("defect", False, 0.5, 1e-9, "too large")])
  manifest = read_manifest(run.path)
  assert manifest["summary"] == {"worst": 0.5}
  assert manifest["criteria"][0]["detail"] == "too large"
  assert manifest["passed"] is False
  assert manifest["directory"] == str(run.path)


def test_read_manifest_errors(tmp_path):
  with pytest.raises(ConfigError):
    read_manifest(tmp_path / "missing")
  with pytest.raises(ConfigError):
    read_manifest(tmp_path)
  (tmp_path / "manifest.json").write_text("{not json")
  with pytest.raises(ConfigError):
    read_manifest(tmp_path)
  (tmp_path / "manifest.json").write_text(json.dumps({"kind": "egorov"}))
  with pytest.raises(ConfigError):
    read_manifest(tmp_path)
