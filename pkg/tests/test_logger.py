import logging

from semiclab.logger import (
    Colors,
    colorize,
    print_processing_step,
    print_progress_bar,
    print_result,
    print_table,
    print_verdict,
    setup_logger,
)


def test_print_result(capsys):
  print_result("Test", "Value")
  output = capsys.readouterr().out
  assert output.startswith("Test")
  assert "Value" in output

  for status in ("good", "warning", "bad"):
    print_result("Test", "Value", status)
    output = capsys.readouterr().out
    assert output.startswith("Test")
    assert "Value" in output


def test_colorize():
  assert colorize("x", "good") == f"{Colors.GREEN}x{Colors.ENDC}"
  assert colorize("x", "bad") == f"{Colors.RED}x{Colors.ENDC}"
  assert colorize("x", "warning") == f"{Colors.YELLOW}x{Colors.ENDC}"
  assert colorize("x", None) == "x"


def test_print_verdict(capsys):
  """Test PASS/FAIL lines carry the matching colour."""
  print_verdict("slope", True, "2.01")
  output = capsys.readouterr().out
  assert "PASS 2.01" in output
  assert Colors.GREEN in output

  print_verdict("slope", False)
  output = capsys.readouterr().out
  assert "FAIL" in output
  assert Colors.RED in output


def test_print_table(capsys):
  """Test numeric cells are formatted and headers shown."""
  print_table([[0.5, 1e-9], [0.25, 2.5e-10]], ["hbar", "error"], "Egorov")
  output = capsys.readouterr().out
  assert "Egorov" in output
  assert "hbar" in output
  assert "1.000e-09" in output
  assert "0.250" in output


def test_print_processing_step(capsys):
  print_processing_step(2, "Criteria")
  assert "[2] Criteria" in capsys.readouterr().out


def test_print_progress_bar(capsys):
  print_progress_bar(5, 10, prefix="Progress", suffix="Complete", length=10)
  output = capsys.readouterr().out
  assert "Progress" in output
  assert "50.0%" in output

  print_progress_bar(10, 10, length=10)
  assert "100.0%" in capsys.readouterr().out


def test_setup_logger_single_handler():
  """Test repeated setup does not stack handlers."""
  logger = setup_logger()
  count = len(logger.handlers)
  logger = setup_logger()
  assert len(logger.handlers) == count
  assert logger.name == "semiclab"
  assert logger.level == logging.INFO
