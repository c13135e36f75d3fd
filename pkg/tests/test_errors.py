import pytest

from semiclab.errors import (
    EXIT_CONFIG,
    EXIT_CRITERION,
    EXIT_NUMERICAL,
    ClusterError,
    ConfigError,
    GapError,
    GaugeObstructionError,
    GridError,
    NumericalError,
    PreconditionError,
    SemiclabError,
    describe_node,
)


@pytest.mark.parametrize("error", [ConfigError, GridError, PreconditionError])
def test_config_errors_are_value_errors(error):
  """Test configuration errors derive from ValueError."""
  assert issubclass(error, ConfigError)
  assert issubclass(error, ValueError)
  assert issubclass(error, SemiclabError)


@pytest.mark.parametrize("error", [GapError, GaugeObstructionError, ClusterError])
def test_numerical_errors_are_arithmetic_errors(error):
  """Test numerical failures derive from ArithmeticError."""
  assert issubclass(error, NumericalError)
  assert issubclass(error, ArithmeticError)
  assert not issubclass(error, ConfigError)


def test_exit_codes_are_distinct():
  assert len({EXIT_CRITERION, EXIT_CONFIG, EXIT_NUMERICAL}) == 3


def test_describe_node():
  """Test node descriptions for error messages."""
  assert describe_node([0.5, -1.25]) == "(0.5, -1.25)"
  assert describe_node([0.5, 1.0], index=(3, 7)) == "(0.5, 1) at index (3, 7)"
