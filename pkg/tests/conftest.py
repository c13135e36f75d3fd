import math

import numpy as np
import pytest

from semiclab.grid import PhaseGrid, quantum_grid
from semiclab.models import GridChoice, ModelInstance, get_model


@pytest.fixture
def rng():
  return np.random.default_rng(0)


@pytest.fixture
def torus_grid() -> PhaseGrid:
  """32 × 32 quantum grid on the 2π box (hbar = 2π/32)."""
  return quantum_grid(1, 32, 2 * math.pi, 2 * math.pi)


@pytest.fixture(scope="module")
def pauli() -> ModelInstance:
  """The avoided-crossing model on its coarsest grid."""
  return get_model("pauli").instance(GridChoice(64, 9.0, 9.0))


@pytest.fixture(scope="module")
def harmonic() -> ModelInstance:
  return get_model("harmonic").instance(GridChoice(64, 9.0, 9.0))


@pytest.fixture(scope="module")
def dirac() -> ModelInstance:
  return get_model("dirac").instance(GridChoice(32, 2 * math.pi, 2 * math.pi))


@pytest.fixture
def output_root(tmp_path, monkeypatch):
  """Run directories go to a temporary root."""
  root = tmp_path / "runs"
  monkeypatch.setenv("SEMICLAB_OUTPUT", str(root))
  return root
