import math

from semiclab.formatter import format_hbar, format_quantity, format_slope


def test_format_quantity():
  # Fixed notation in the readable range
  assert format_quantity(0.125) == "0.125"
  assert format_quantity(3) == "3.000"
  assert format_quantity(-2.5) == "-2.500"

  # Scientific notation outside it
  assert format_quantity(1e-5) == "1.000e-05"
  assert format_quantity(20000.0) == "2.000e+04"
  assert format_quantity(2.5e-12, digits=1) == "2.5e-12"

  # Special values
  assert format_quantity(0.0) == "0"
  assert format_quantity(math.nan) == "nan"
  assert format_quantity(None) == "N/A"


def test_format_slope():
  assert format_slope(2.0) == "+2.00"
  assert format_slope(-0.5) == "-0.50"
  assert format_slope(1.987, 0.1) == "+1.99 ± 0.10"
  assert format_slope(1.0, math.nan) == "+1.00"
  assert format_slope(None) == "N/A"


def test_format_hbar():
  assert format_hbar(0.05) == "0p05"
  assert format_hbar(0.1963495) == "0p1963"
  assert format_hbar(1.0) == "1"
