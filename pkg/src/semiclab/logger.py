"""
Logging and terminal presentation for semiclab.
"""

import logging
from typing import Any, Final, List, Optional, Sequence, TextIO

from tabulate import tabulate

from .formatter import format_quantity


# ANSI Color Codes for terminal output
class Colors:
  RED: Final[str] = "\033[91m"
  GREEN: Final[str] = "\033[92m"
  YELLOW: Final[str] = "\033[93m"
  CYAN: Final[str] = "\033[96m"
  ENDC: Final[str] = "\033[0m"
  UNDERLINE: Final[str] = "\033[4m"


def setup_logger() -> logging.Logger:
  """Set up and configure the semiclab logger."""
  logger: logging.Logger = logging.getLogger("semiclab")
  logger.setLevel(logging.INFO)

  # Only one console handler, even if the CLI is entered twice in one process
  if not any(getattr(h, "_semiclab", False) for h in logger.handlers):
    handler: logging.StreamHandler[TextIO] = logging.StreamHandler()  # type: ignore
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(
        logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    )
    handler._semiclab = True  # type: ignore[attr-defined]
    logger.addHandler(handler)

  return logger


def colorize(value: str, status: Optional[str]) -> str:
  """Wrap a value in the colour for a status."""
  if status == "good":
    return f"{Colors.GREEN}{value}{Colors.ENDC}"
  if status == "bad":
    return f"{Colors.RED}{value}{Colors.ENDC}"
  if status == "warning":
    return f"{Colors.YELLOW}{value}{Colors.ENDC}"
  return value


def print_result(label: str, value: str, status: Optional[str] = None) -> None:
  """Print a name-value pair with optional status color."""
  print(f"{label:24} {colorize(value, status)}")


def print_verdict(name: str, passed: bool, detail: str = "") -> None:
  """Print a PASS/FAIL line for one criterion."""
  status: str = "good" if passed else "bad"
  mark: str = "PASS" if passed else "FAIL"
  print_result(name, f"{mark} {detail}".rstrip(), status)


def print_table(rows: Sequence[Sequence[Any]], headers: Sequence[str], title: str = "") -> None:
  """Print a table of numbers with scientific formatting."""
  if title:
    print(f"\n{Colors.UNDERLINE}{title}{Colors.ENDC}")
  formatted: List[List[str]] = [[
      format_quantity(cell) if isinstance(cell, float) else str(cell) for cell in row
  ] for row in rows]
  print(tabulate(formatted, headers=list(headers), tablefmt="simple", disable_numparse=True))


def print_processing_step(step: int, message: str) -> None:
  """Print a processing step with step number."""
  print(f"\n[{step}] {message}")


def print_progress_bar(
    iteration: int,
    total: int,
    prefix: str = "",
    suffix: str = "",
    decimals: int = 1,
    length: int = 40,
    fill: str = "█",
) -> None:
  """Print a progress bar."""
  percent: str = ("{0:." + str(decimals) + "f}").format(100 * (iteration / float(total)))
  filled_length: int = int(length * iteration // total)
  bar: str = fill * filled_length + "-" * (length - filled_length)
  print(f"\r{prefix} |{bar}| {percent}% {suffix}", end="\r")
  if iteration == total:
    print()
