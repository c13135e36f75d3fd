"""
Human-readable summaries of finished runs.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .formatter import format_quantity, format_slope
from .logger import print_result, print_table, print_verdict
from .storage import read_manifest

logger: logging.Logger = logging.getLogger("semiclab")

Table = Tuple[str, List[str], List[List[Any]]]


def criteria_rows(manifest: Dict[str, Any]) -> List[List[Any]]:
  """One row per criterion: name, measured value, threshold, verdict."""
  return [[
      c["name"],
      format_quantity(c.get("value")),
      format_quantity(c.get("threshold")),
      "PASS" if c["passed"] else "FAIL",
  ] for c in manifest["criteria"]]


def sweep_tables(manifest: Dict[str, Any]) -> List[Table]:
  """ħ-against-error tables for every fitted sweep in the summary."""
  summary: Dict[str, Any] = manifest.get("summary", {})
  tables: List[Table] = []
  reports: Any = summary.get("reports")
  # szego keeps a dict of per-observable reports; only Egorov sweeps are lists
  for report in reports if isinstance(reports, list) else []:
    rows: List[List[Any]] = [[h, e] for h, e in zip(report["hbars"], report["errors"])]
    title: str = (f"{report.get('observable', '')} at t={report['t']:g}: "
                  f"slope {format_slope(report.get('slope'), report.get('stderr'))}")
    tables.append((title, ["hbar", "error"], rows))
  if "hbars" in summary and "errors" in summary:
    slope: Optional[float] = summary.get("slope")
    tables.append((f"slope {format_slope(slope)}", ["hbar", "error"],
                   [[h, e] for h, e in zip(summary["hbars"], summary["errors"])]))
  if isinstance(summary.get("slopes"), dict):
    tables.append(("fitted slopes", ["series", "slope"],
                   [[name, format_slope(s)] for name, s in summary["slopes"].items()]))
  return tables


def print_report(directory: Union[str, Path]) -> bool:
  """Print the verdicts and sweep tables of one run; returns whether it passed."""
  manifest: Dict[str, Any] = read_manifest(directory)
  print_result("Experiment:", f"{manifest['kind']} on {manifest['model']}")
  print_result("Version:", str(manifest.get("version", "unknown")))
  print_result("Seed:", str(manifest.get("seed")))
  if manifest.get("wall_time") is not None:
    print_result("Wall time:", f"{manifest['wall_time']:.1f} s")
  print_result("Config hash:", manifest["config_sha256"][:16])
  for title, headers, rows in sweep_tables(manifest):
    print_table(rows, headers, title)
  print_table(criteria_rows(manifest), ["criterion", "value", "threshold", "verdict"], "Criteria")
  passed: bool = all(c["passed"] for c in manifest["criteria"])
  failed: int = sum(1 for c in manifest["criteria"] if not c["passed"])
  print()
  print_verdict("Overall:", passed, f"({failed} of {len(manifest['criteria'])} failed)" if failed else "")
  return passed


def compare_rows(left: Dict[str, Any], right: Dict[str, Any]) -> List[List[Any]]:
  """Criteria of two runs side by side, matched by name."""
  a: Dict[str, Dict[str, Any]] = {c["name"]: c for c in left["criteria"]}
  b: Dict[str, Dict[str, Any]] = {c["name"]: c for c in right["criteria"]}
  names: List[str] = list(a) + [n for n in b if n not in a]

  def cell(side: Dict[str, Dict[str, Any]], name: str) -> Sequence[str]:
    if name not in side:
      return ("-", "-")
    c: Dict[str, Any] = side[name]
    return (format_quantity(c.get("value")), "PASS" if c["passed"] else "FAIL")

  return [[name, *cell(a, name), *cell(b, name)] for name in names]


def print_comparison(first: Union[str, Path], second: Union[str, Path]) -> bool:
  """Side-by-side comparison; returns whether both runs passed."""
  left: Dict[str, Any] = read_manifest(first)
  right: Dict[str, Any] = read_manifest(second)
  if left["kind"] != right["kind"]:
    logger.warning(f"Comparing different experiments: {left['kind']} and {right['kind']}")
  if left["config_sha256"] == right["config_sha256"]:
    print_result("Configs:", "identical", "good")
  else:
    print_result("Configs:", "differ", "warning")
  headers: List[str] = ["criterion", f"value ({Path(first).name})", "verdict", f"value ({Path(second).name})",
                        "verdict"]
  print_table(compare_rows(left, right), headers, "Comparison")
  return all(c["passed"] for c in left["criteria"] + right["criteria"])
