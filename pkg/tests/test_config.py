import pytest

from semiclab.config import DEFAULT_OUTPUT, ExperimentConfig
from semiclab.errors import ConfigError

VALID_TOML = """
[experiment]
kind = "egorov"

[model]
model = "pauli"
params = { kappa = 0.1 }

[grid]
grid-sizes = [64, 128]

[transport]
time = 1.5
dt = 0.02

[run]
seed = 7
observables = ["x_squared"]
"""


def test_from_file(tmp_path):
  path = tmp_path / "run.toml"
  path.write_text(VALID_TOML)
  config = ExperimentConfig.from_file(path).validate()
  assert config.kind == "egorov"
  assert config.params == {"kappa": 0.1}
  assert config.grid_sizes == [64, 128]
  assert config.time == 1.5
  assert config.seed == 7
  assert config.observables == ["x_squared"]
  # Untouched fields keep their defaults
  assert config.moyal_order == 2


def test_from_file_errors(tmp_path):
  with pytest.raises(ConfigError):
    ExperimentConfig.from_file(tmp_path / "missing.toml")
  bad = tmp_path / "bad.toml"
  bad.write_text("[experiment\nkind = ")
  with pytest.raises(ConfigError):
    ExperimentConfig.from_file(bad)


@pytest.mark.parametrize(
    "data",
    [
        {"nonsense": {"kind": "egorov"}},
        {"experiment": {"colour": "blue"}},
        {"experiment": "egorov"},
        {"model": {"params": [1, 2]}},
        {"run": {"seed": 1.5}},
        {"run": {"png": "yes"}},
        {"transport": {"time": "soon"}},
    ],
)
def test_from_mapping_rejects(data):
  with pytest.raises(ConfigError):
    ExperimentConfig.from_mapping(data)


def test_updated_coerces():
  """Test command-line strings become typed values and None is ignored."""
  config = ExperimentConfig().updated({"grid_sizes": "64, 128", "times": "0.5,1", "omega": "2", "time": None})
  assert config.grid_sizes == [64, 128]
  assert config.times == [0.5, 1.0]
  assert config.omega == 2.0
  assert config.time is None
  with pytest.raises(ConfigError):
    ExperimentConfig().updated({"colour": "blue"})


@pytest.mark.parametrize(
    "overrides",
    [
        {"kind": "teleport"},
        {"model": "unknown"},
        {"params": {"mass": 1.0}},
        {"moyal_order": 5},
        {"projection_order": 3},
        {"grid_sizes": [48]},
        {"grid_sizes": [8]},
        {"hbars": [-0.1]},
        {"time": -1.0},
        {"dt": 0.0},
        {"times": [1.0, -2.0]},
        {"omega": 0.0},
        {"delta": 1.0},
        {"branch": 2},
        {"group": "so3"},
        {"spin": 0.3},
        {"spin": 10.0},
        {"n_starts": 0},
        {"workers": 0},
    ],
)
def test_validate_rejects(overrides):
  with pytest.raises(ConfigError):
    ExperimentConfig().updated(overrides).validate()


def test_check_delta():
  config = ExperimentConfig()
  assert config.check_delta(0.5) == pytest.approx(0.25)
  assert config.updated({"delta": 0.1}).check_delta(0.5) == pytest.approx(0.1)
  with pytest.raises(ConfigError):
    config.updated({"delta": 0.6}).check_delta(0.5)


def test_resolved_sizes():
  """Test explicit ħ values map to the nearest power-of-two grid."""
  assert ExperimentConfig(grid_sizes=[64]).resolved_sizes() == [64]
  assert ExperimentConfig().resolved_sizes() == []
  # The pauli box is 9 × 9, so ħ = 81/(2πN)
  config = ExperimentConfig(hbars=[0.2014, 81 / (2 * 3.141592653589793 * 128)])
  assert config.resolved_sizes() == [64, 128]


def test_output_root(monkeypatch):
  monkeypatch.delenv("SEMICLAB_OUTPUT", raising=False)
  assert str(ExperimentConfig().output_root()) == DEFAULT_OUTPUT
  monkeypatch.setenv("SEMICLAB_OUTPUT", "/tmp/env-root")
  assert str(ExperimentConfig().output_root()) == "/tmp/env-root"
  assert str(ExperimentConfig(output_dir="here").output_root()) == "here"


def test_digest_is_stable():
  assert ExperimentConfig().digest() == ExperimentConfig().digest()
  assert ExperimentConfig().digest() != ExperimentConfig(seed=1).digest()
  assert len(ExperimentConfig().digest()) == 64
