#!/usr/bin/env python
"""
Command line entry point of the two-mode optomechanics simulator

Commands:
    steady-state  print the solved operating point
    spectrum      probe transmission / reflection spectrum
    delay-sweep   group delay against the left pump power
    figure        run a catalogued figure, one file per panel
    validate      parse the configuration and exit
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, TextIO

from dotenv import load_dotenv

from .experiments import SweepResult, create_experiment_runner
from .logging_config import setup_logging, setup_tracing
from .model import ConvergenceError, OptomechError, OutputError, hz_to_rad
from .steady_state import solve_steady_state
from .tools.config_parser import RunConfig, load_config
from .tools.sweep_writer import FORMATS, emit_sweep, figure_filename

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_IO = 3
EXIT_INTERRUPTED = 130

OUTPUT_DIR_ENV = "TWOMODE_OUTPUT_DIR"


class UsageError(Exception):
    """Bad command line"""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS, help="Output format (default: output.format of the config)")
    common.add_argument("--output-dir", help=f"Directory for result files (overrides {OUTPUT_DIR_ENV})")
    common.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default=os.getenv("LOG_LEVEL", "INFO").upper(),
        help="Set the logging level",
    )
    common.add_argument("--log-file", help="Also write log records to this file")
    common.add_argument("--workers", type=int, default=1, help="Worker threads for sweeps (default: 1)")

    parser = _ArgumentParser(prog="twomode_optomech", description="Two-mode cavity optomechanics simulator")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    for name, help_text in (
        ("steady-state", "Print the self-consistent steady state"),
        ("spectrum", "Probe spectrum over the configured grid"),
        ("delay-sweep", "Group delay at the cavity resonance against the left pump power"),
        ("validate", "Parse and validate the configuration"),
    ):
        command = commands.add_parser(name, parents=[common], help=help_text)
        command.add_argument("config", nargs="?", help="YAML configuration file (default: packaged profile)")

    figure = commands.add_parser("figure", parents=[common], help="Run a catalogued figure")
    figure.add_argument("figure_id", help="fig2, fig3, fig4 or fig5")
    figure.add_argument("config", nargs="?", help="YAML configuration file (default: packaged profile)")
    return parser


def _output_dir(args: argparse.Namespace, config: RunConfig) -> Optional[Path]:
    directory = args.output_dir or os.getenv(OUTPUT_DIR_ENV) or config.output.directory
    return Path(directory) if directory else None


def _emit(result: SweepResult, fmt: str, directory: Optional[Path], stdout: TextIO) -> None:
    if directory is None:
        emit_sweep(result, fmt, stdout)
        return
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(directory, e.strerror or str(e)) from e
    emit_sweep(result, fmt, directory / figure_filename(result.name, fmt))


def run(args: argparse.Namespace, stdout: TextIO) -> int:
    config = load_config(args.config)
    if args.command == "validate":
        for note in config.provenance:
            logger.warning(note)
        logger.info(f"Configuration {args.config or '<defaults>'} is valid")
        return EXIT_OK

    fmt = args.format or config.output.format
    directory = _output_dir(args, config)
    params = config.to_params()
    drive = config.to_drive(params)
    runner = create_experiment_runner(workers=args.workers, options=config.solver, grid_options=config.grid)

    if args.command == "steady-state":
        steady = solve_steady_state(params, drive, options=config.solver)
        record = steady.model_dump()
        if fmt == "json":
            stdout.write(json.dumps(record, indent=2) + "\n")
        else:
            stdout.write(",".join(record) + "\n")
            stdout.write(",".join(format(float(value), ".17g") if isinstance(value, float) else str(value)
                                  for value in record.values()) + "\n")
        return EXIT_OK

    if args.command == "spectrum":
        results = [runner.spectrum(params, drive)]
    elif args.command == "delay-sweep":
        results = [runner.delay_sweep(params, drive, config.power_axis(), config.sweep.which,
                                      delta_p=hz_to_rad(config.sweep.probe_detuning_hz))]
    else:
        results = runner.run_figure(args.figure_id, params)
        if directory is None:
            directory = Path(".")

    for result in results:
        _emit(result, fmt, directory, stdout)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse the command line, run the command and return the exit code.

    0 success, 1 usage or configuration error, 2 solver failure,
    3 output failure, 130 interrupted.
    """
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_level, args.log_file)
    setup_tracing()
    logger.debug(f"Command: {args.command}, config: {args.config or '<defaults>'}")

    try:
        return run(args, sys.stdout)
    except KeyboardInterrupt:
        logger.warning("Execution interrupted by user")
        return EXIT_INTERRUPTED
    except ConvergenceError as e:
        logger.error(f"Solver failure: {e}")
        return EXIT_SOLVER
    except OutputError as e:
        logger.error(str(e))
        return EXIT_IO
    except (OptomechError, ValueError) as e:
        logger.error(f"Error: {e}")
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"Unexpected error during execution: {str(e)}")
        logger.exception("Full traceback:")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
