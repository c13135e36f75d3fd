"""
Command-line interface for semiclab.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pyfiglet import Figlet

from .config import KINDS, ExperimentConfig
from .errors import (
    EXIT_CONFIG,
    EXIT_CRITERION,
    EXIT_INTERRUPTED,
    EXIT_NUMERICAL,
    EXIT_OK,
    ConfigError,
    NumericalError,
)
from .experiments import ExperimentResult, run_experiment
from .logger import Colors, print_processing_step, print_result, print_table, print_verdict, setup_logger
from .models import model_catalog
from .reports import print_comparison, print_report
from .storage import RunDirectory
from .utils import parse_number_list

f: Figlet = Figlet(font="slant")


def _parse_params(items: Optional[List[str]]) -> Optional[Dict[str, float]]:
  """['mass=1.0', 'V0=0.5'] -> {'mass': 1.0, 'V0': 0.5}."""
  if not items:
    return None
  params: Dict[str, float] = {}
  for item in items:
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
      raise ConfigError(f"--param expects name=value, got {item!r}")
    try:
      params[key.strip()] = float(value)
    except ValueError:
      raise ConfigError(f"--param {key.strip()}: {value!r} is not a number")
  return params


def build_parser() -> argparse.ArgumentParser:
  # Shared utility flags, accepted before or after the verb
  utility_parent: argparse.ArgumentParser = argparse.ArgumentParser(add_help=False)
  utility = utility_parent.add_argument_group("utility")
  utility.add_argument("--debug", action="store_true", default=argparse.SUPPRESS,
                       help="Enable debug logging and tracebacks")
  utility.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                       help="Minimal output")

  parser: argparse.ArgumentParser = argparse.ArgumentParser(
      prog="semiclab",
      parents=[utility_parent],
      description="Numerical laboratory for semiclassical matrix-valued operators",
      formatter_class=argparse.RawDescriptionHelpFormatter,
      epilog="""
examples:
  %(prog)s run identities                          # Poisson-bracket relations
  %(prog)s run sw-axioms --group su2 --j 0.5       # Stratonovich-Weyl axioms
  %(prog)s run egorov --model pauli --workers 4    # Egorov slopes over the hbar sweep
  %(prog)s run szego --config szego.toml --png     # Szego limit with heat maps
  %(prog)s report semiclab-runs/egorov_pauli_*     # Verdicts of a finished run
  %(prog)s list-models                             # Built-in models
    """,
  )
  parser.add_argument("-v", "--version", action="store_true", help="Show version information")

  verbs = parser.add_subparsers(dest="verb", metavar="VERB")

  run: argparse.ArgumentParser = verbs.add_parser("run", parents=[utility_parent], help="Run an experiment")
  run.add_argument("kind", nargs="?", choices=KINDS, help="Experiment kind (overrides the config file)")
  run.add_argument("-c", "--config", help="TOML experiment config")

  model = run.add_argument_group("model options")
  model.add_argument("-m", "--model", help="Model id (see list-models)")
  model.add_argument("-p", "--param", action="append", metavar="NAME=VALUE", help="Model parameter override")
  model.add_argument("--grid-sizes", help="Comma-separated grid sizes N of the hbar sweep")
  model.add_argument("--hbars", help="Comma-separated hbar values (mapped to grid sizes)")
  model.add_argument("--observables", help="Comma-separated observable names")

  orders = run.add_argument_group("orders and window")
  orders.add_argument("--moyal-order", type=int, help="Moyal truncation order K")
  orders.add_argument("--projection-order", type=int, help="Projection order J")
  orders.add_argument("-E", "--energy", type=float, help="Window centre E")
  orders.add_argument("--omega", type=float, help="Window half-width in units of hbar")
  orders.add_argument("--delta", type=float, help="Quasimode threshold delta")
  orders.add_argument("--branch", type=int, help="Eigenvalue branch index")

  flow = run.add_argument_group("transport options")
  flow.add_argument("-t", "--time", type=float, help="Evolution time T")
  flow.add_argument("--times", help="Comma-separated times")
  flow.add_argument("--dt", type=float, help="Integrator step")
  flow.add_argument("--n-starts", type=int, help="Ensemble size for time averages")
  flow.add_argument("--group", help="Structure group for sw-axioms (su2, u1)")
  flow.add_argument("--j", dest="spin", type=float, help="SU(2) spin")

  output = run.add_argument_group("run options")
  output.add_argument("-o", "--output", help="Output root (default: $SEMICLAB_OUTPUT or ./semiclab-runs)")
  output.add_argument("-s", "--seed", type=int, help="Random seed")
  output.add_argument("-w", "--workers", type=int, help="Worker threads for independent hbar points")
  output.add_argument("--png", action="store_true", default=None, help="Also write PNG heat maps")
  output.add_argument("--non-deterministic", action="store_true", help="Do not seed global random state")

  report: argparse.ArgumentParser = verbs.add_parser("report", parents=[utility_parent],
                                                     help="Summarize one run or compare two")
  report.add_argument("runs", nargs="+", metavar="RUN_DIR", help="Run directory (two to compare)")

  verbs.add_parser("list-models", parents=[utility_parent], help="List built-in models")

  validate = verbs.add_parser("validate-config", parents=[utility_parent], help="Check a TOML config")
  validate.add_argument("path", help="TOML experiment config")
  return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
  """File values first, then command-line overrides."""
  config: ExperimentConfig = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
  overrides: Dict[str, Any] = {
      "kind": args.kind,
      "model": args.model,
      "params": _parse_params(args.param),
      "grid_sizes": parse_number_list(args.grid_sizes, int) if args.grid_sizes else None,
      "hbars": parse_number_list(args.hbars) if args.hbars else None,
      "observables": args.observables,
      "moyal_order": args.moyal_order,
      "projection_order": args.projection_order,
      "energy": args.energy,
      "omega": args.omega,
      "delta": args.delta,
      "branch": args.branch,
      "time": args.time,
      "times": parse_number_list(args.times) if args.times else None,
      "dt": args.dt,
      "n_starts": args.n_starts,
      "group": args.group,
      "spin": args.spin,
      "output_dir": args.output,
      "seed": args.seed,
      "workers": args.workers,
      "png": args.png,
      "deterministic": False if args.non_deterministic else None,
  }
  if overrides["params"] is not None:
    overrides["params"] = {**config.params, **overrides["params"]}
  return config.updated(overrides).validate()


def run_command(args: argparse.Namespace, logger: logging.Logger) -> int:
  config: ExperimentConfig = config_from_args(args)
  quiet: bool = getattr(args, "quiet", False)
  if not quiet:
    print_result("Experiment:", config.kind)
    print_result("Model:", config.model)
    print_result("Seed:", str(config.seed))
    print_processing_step(1, f"Running {config.kind}")
  run: RunDirectory = RunDirectory.create(config)
  result: ExperimentResult = run_experiment(config, run)
  logger.debug(f"Artifacts written to {run.path}")
  if not quiet:
    print_processing_step(2, "Criteria")
    for c in result.criteria:
      print_verdict(c.name, c.passed, c.detail)
    print()
  print_result("Run directory:", str(run.path))
  print_verdict("Overall:", result.passed)
  return EXIT_OK if result.passed else EXIT_CRITERION


def report_command(args: argparse.Namespace) -> int:
  if len(args.runs) > 2:
    raise ConfigError(f"report takes one run directory or two to compare, got {len(args.runs)}")
  if len(args.runs) == 2:
    passed: bool = print_comparison(args.runs[0], args.runs[1])
  else:
    passed = print_report(args.runs[0])
  return EXIT_OK if passed else EXIT_CRITERION


def list_models_command() -> int:
  rows: List[List[Any]] = [[
      spec.id,
      spec.title,
      spec.d,
      spec.n,
      "+".join(str(k) for k in spec.multiplicities),
      spec.group,
      ", ".join(f"{h:.4g}" for h in spec.hbars),
  ] for spec in model_catalog()]
  print_table(rows, ["id", "model", "d", "n", "branches", "group", "hbar sweep"], "Models")
  return EXIT_OK


def validate_config_command(args: argparse.Namespace) -> int:
  config: ExperimentConfig = ExperimentConfig.from_file(args.path).validate()
  print_result("Config:", f"{Path(args.path).name} is valid", "good")
  print_result("Experiment:", f"{config.kind} on {config.model}")
  print_result("Sweep:", ", ".join(str(n) for n in config.resolved_sizes()) or "model default")
  print_result("SHA-256:", config.digest()[:16])
  return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
  """Main entry point for the CLI."""
  logger: logging.Logger = setup_logger()

  parser: argparse.ArgumentParser = build_parser()
  args: argparse.Namespace = parser.parse_args(argv)
  debug: bool = getattr(args, "debug", False)
  quiet: bool = getattr(args, "quiet", False)

  if args.version:
    from . import __version__

    print(f"semiclab v{__version__}")
    return EXIT_OK

  if debug:
    logger.setLevel(logging.DEBUG)
  elif quiet:
    logger.setLevel(logging.WARNING)
  else:
    logger.setLevel(logging.INFO)

  if args.verb is None:
    print(f.renderText("semiclab"))
    parser.print_help()
    return EXIT_OK
  if not quiet:
    print(f"{Colors.CYAN}{f.renderText('semiclab')}{Colors.ENDC}")

  try:
    if args.verb == "run":
      return run_command(args, logger)
    if args.verb == "report":
      return report_command(args)
    if args.verb == "list-models":
      return list_models_command()
    return validate_config_command(args)
  except KeyboardInterrupt:
    logger.warning("Process interrupted by user.")
    return EXIT_INTERRUPTED
  except ConfigError as e:
    logger.error(f"Configuration error: {e}")
    if debug:
      logger.exception("Detailed error information:")
    return EXIT_CONFIG
  except NumericalError as e:
    logger.error(f"Numerical failure: {e}")
    if debug:
      logger.exception("Detailed error information:")
    return EXIT_NUMERICAL
  except Exception as e:
    logger.error(f"Error: {str(e)}")
    if debug:
      logger.exception("Detailed error information:")
    return EXIT_NUMERICAL


if __name__ == "__main__":
  sys.exit(main())
