import subprocess
import sys
from unittest.mock import patch

import pytest

from semiclab.errors import ConfigError, NumericalError
from semiclab.main import build_parser, config_from_args, main

VALID_TOML = """
[experiment]
kind = "identities"

[run]
seed = 5
"""


@pytest.fixture
def mock_logger():
  with patch("semiclab.main.setup_logger") as mock:
    yield mock.return_value


@pytest.fixture
def mock_run():
  with patch("semiclab.main.run_experiment") as mock:
    yield mock


@pytest.fixture
def config_file(tmp_path):
  """A valid TOML experiment config."""
  path = tmp_path / "run.toml"
  path.write_text(VALID_TOML)
  return path


def test_main_entrypoint():
  result = subprocess.run(
      [sys.executable, "-m", "semiclab.main", "-v"],
      capture_output=True,
      text=True,
  )

  assert result.returncode == 0
  assert "semiclab v" in result.stdout


def test_version_display(capsys):
  """Test version display."""
  with patch.object(sys, "argv", ["semiclab", "-v"]):
    assert main() == 0
    captured = capsys.readouterr()
    assert "semiclab v" in captured.out


def test_help_display(capsys):
  """Test help display without a verb."""
  with patch.object(sys, "argv", ["semiclab"]):
    assert main() == 0
    captured = capsys.readouterr()
    assert "Numerical laboratory for semiclassical matrix-valued operators" in captured.out


def test_list_models(capsys):
  assert main(["list-models", "-q"]) == 0
  captured = capsys.readouterr()
  for model in ("harmonic", "pauli", "dirac", "quartic", "anisotropic"):
    assert model in captured.out


def test_validate_config(config_file, capsys):
  assert main(["validate-config", str(config_file)]) == 0
  captured = capsys.readouterr()
  assert "run.toml is valid" in captured.out


def test_validate_invalid_config(mock_logger, tmp_path):
  """Test an invalid field maps to the configuration exit code."""
  path = tmp_path / "bad.toml"
  path.write_text('[experiment]\nkind = "teleport"\n')
  assert main(["validate-config", str(path)]) == 2
  mock_logger.error.assert_called_once()


def test_run_identities(output_root, capsys):
  assert main(["run", "identities", "-q"]) == 0
  captured = capsys.readouterr()
  assert "Run directory:" in captured.out
  runs = list(output_root.iterdir())
  assert len(runs) == 1
  assert (runs[0] / "manifest.json").is_file()
  # The report of a passing run passes too
  assert main(["report", str(runs[0]), "-q"]) == 0


def test_report_errors(mock_logger, tmp_path):
  assert main(["report", str(tmp_path)]) == 2
  assert main(["report", "a", "b", "c"]) == 2


def test_bad_param(mock_logger, mock_run):
  assert main(["run", "egorov", "-p", "kappa"]) == 2
  assert main(["run", "egorov", "-p", "kappa=much"]) == 2
  assert main(["run", "egorov", "-p", "mass=1.0"]) == 2
  mock_run.assert_not_called()


def test_config_from_args(config_file):
  """Test command-line flags override the file."""
  parser = build_parser()
  args = parser.parse_args(
      ["run", "sw-axioms", "-c", str(config_file), "--j", "1.5", "--grid-sizes", "64,128"]
  )
  config = config_from_args(args)
  assert config.kind == "sw-axioms"
  assert config.seed == 5
  assert config.spin == 1.5
  assert config.grid_sizes == [64, 128]
  assert config.deterministic

  args = parser.parse_args(["run", "-c", str(config_file), "--non-deterministic", "-p", "kappa=0.1"])
  config = config_from_args(args)
  assert config.kind == "identities"
  assert not config.deterministic
  assert config.params == {"kappa": 0.1}


def test_criterion_failure_exit_code(mock_logger, mock_run, output_root):
  mock_run.return_value.passed = False
  mock_run.return_value.criteria = []
  assert main(["run", "identities", "-q"]) == 1


def test_keyboard_interrupt(mock_logger, mock_run, output_root):
  """Test handling of keyboard interrupt."""
  mock_run.side_effect = KeyboardInterrupt()
  assert main(["run", "identities"]) == 130
  mock_logger.warning.assert_called_once_with("Process interrupted by user.")


def test_numerical_failure(mock_logger, mock_run, output_root):
  mock_run.side_effect = NumericalError("gap closed")
  assert main(["run", "identities"]) == 3
  mock_logger.error.assert_called_once_with("Numerical failure: gap closed")


def test_config_error(mock_logger, mock_run, output_root):
  mock_run.side_effect = ConfigError("bad window")
  assert main(["run", "identities"]) == 2
  mock_logger.error.assert_called_once_with("Configuration error: bad window")


def test_debug_mode(mock_logger, mock_run, output_root):
  """Test debug mode logging."""
  mock_run.side_effect = Exception("Test error")
  assert main(["run", "identities", "--debug"]) == 3
  mock_logger.setLevel.assert_called_once()
  mock_logger.exception.assert_called_once_with("Detailed error information:")


def test_quiet_mode(mock_logger, mock_run, output_root, capsys):
  """Test quiet mode skips the banner and per-criterion lines."""
  mock_run.return_value.passed = True
  mock_run.return_value.criteria = []
  assert main(["run", "identities", "-q"]) == 0
  mock_logger.setLevel.assert_called_once()
  assert "Criteria" not in capsys.readouterr().out
