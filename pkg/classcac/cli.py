"""Command line interface of ClassCac."""

import argparse
from collections.abc import Callable
import logging
from pathlib import Path
import sys

from classcac import __version__
from classcac.cellmodel.exceptions import CacException, ConfigError, NoSampleError, StateSpaceTooLarge
from classcac.cellmodel.oracle import DEFAULT_STATE_CAP

from .config import ExperimentConfig, load_shipped_config, parse_config, parse_config_obj
from .const import (
    EXIT_CAP_EXCEEDED,
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_FAILURE,
    EXIT_OK,
    EXIT_VALIDATION_FAILURE,
    SHIPPED_CONFIGS,
)
from .evaluators import MetricsRow, Mode
from .helpers import parse_rates, read_manifest, render_csv, write_csv, write_manifest
from .runner import COMMAND_POINT, COMMAND_SWEEP, ExperimentRunner

_LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s.%(msecs)03d %(levelname)-8s %(name)s: %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser with every subcommand."""

    parser = argparse.ArgumentParser(prog="classcac", description="Admission control experiments for adaptive cells.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    def _common(name: str, help_text: str, handler: Callable[[argparse.Namespace], int]) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        source = sub.add_mutually_exclusive_group(required=True)
        source.add_argument("--config", type=Path, help="experiment document (JSON)")
        source.add_argument("--preset", choices=[name.removesuffix(".json") for name in SHIPPED_CONFIGS])
        sub.add_argument("--out", type=Path, help="CSV output; a manifest is written next to it")
        sub.add_argument("--seed", type=int, help="simulation seed (unsigned 64-bit)")
        sub.add_argument("--replications", type=int, help="simulation replications")
        sub.add_argument("--cap", type=int, default=DEFAULT_STATE_CAP, help="exact chain state cap")
        sub.add_argument("--verify-invariants", action="store_true", help="check the cell state at every event")
        sub.add_argument(
            "--mode", type=Mode, choices=list(Mode), help="sweep evaluator; a point command accepts only its own"
        )
        sub.add_argument("--rates", help="start:stop:step (stop included) or a comma list; sweep only")
        sub.add_argument("--verbose", action="store_true", help="debug logging")
        sub.set_defaults(handler=handler)
        return sub

    _common("analytic", "evaluate the configured point with the birth-death chain", _point_handler(Mode.ANALYTIC))
    _common("oracle", "evaluate the configured point with the exact chain", _point_handler(Mode.ORACLE))
    _common("simulate", "evaluate the configured point by simulation", _point_handler(Mode.SIMULATE))
    _common("sweep", "evaluate a grid of total arrival rates", _sweep)
    _common("validate", "cross-check the three evaluators", _validate)

    replay = commands.add_parser("replay", help="re-run the experiment described by a manifest")
    replay.add_argument("--manifest", type=Path, required=True)
    replay.add_argument("--out", type=Path, required=True)
    replay.add_argument("--verbose", action="store_true")
    replay.set_defaults(handler=_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Run the command line and return its exit status."""

    args = build_parser().parse_args(argv)
    logging.basicConfig(format=LOG_FORMAT, datefmt=LOG_DATE_FORMAT, level=logging.WARNING)
    if args.verbose:
        logging.getLogger("classcac").setLevel(logging.DEBUG)

    try:
        return args.handler(args)
    except StateSpaceTooLarge as err:
        _LOGGER.error("%s: %s", err.code, err)
        return EXIT_CAP_EXCEEDED
    except (ConfigError, NoSampleError) as err:
        _LOGGER.error("%s: %s", err.code, err)
        return EXIT_CONFIG_ERROR
    except CacException as err:
        _LOGGER.error("%s: %s", err.code, err)
        return EXIT_NUMERICAL_FAILURE


def _load(args: argparse.Namespace) -> ExperimentConfig:
    if args.preset:
        return load_shipped_config(args.preset)
    return parse_config(args.config)


def _runner(args: argparse.Namespace, config: ExperimentConfig) -> ExperimentRunner:
    return ExperimentRunner(
        config,
        seed=args.seed,
        replications=args.replications,
        cap=args.cap,
        verify_invariants=args.verify_invariants,
        verbose=args.verbose,
    )


def _point_handler(mode: Mode) -> Callable[[argparse.Namespace], int]:
    def _point(args: argparse.Namespace) -> int:
        _point_flags(args, mode)
        config = _load(args)
        runner = _runner(args, config)
        row = runner.run_point(mode)
        _emit([row], config, args.out, runner, mode, COMMAND_POINT, None)
        return EXIT_OK

    return _point


def _point_flags(args: argparse.Namespace, mode: Mode | None) -> None:
    if args.rates is not None:
        raise ConfigError(f"{args.command} evaluates the configured point and takes no --rates")
    if args.mode is not None and args.mode != mode:
        raise ConfigError(f"{args.command} cannot run with --mode {args.mode}")


def _sweep(args: argparse.Namespace) -> int:
    if args.mode is None or args.rates is None:
        raise ConfigError("sweep needs --mode and --rates")
    if args.out is None:
        raise ConfigError("sweep needs --out")
    config = _load(args)
    rates = parse_rates(args.rates)
    runner = _runner(args, config)
    rows = runner.sweep(args.mode, rates)
    _emit(rows, config, args.out, runner, args.mode, COMMAND_SWEEP, rates)
    return _rows_status(rows)


def _validate(args: argparse.Namespace) -> int:
    _point_flags(args, None)
    config = _load(args)
    report = _runner(args, config).validate()
    text = report.render()
    if args.out:
        args.out.write_text(text, encoding="utf-8", newline="\n")
    sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_VALIDATION_FAILURE


def _replay(args: argparse.Namespace) -> int:
    manifest = read_manifest(args.manifest)
    config = parse_config_obj(manifest.config, source=str(args.manifest))
    runner = ExperimentRunner(
        config,
        seed=manifest.seed,
        replications=manifest.replications,
        cap=manifest.cap or DEFAULT_STATE_CAP,
        verbose=args.verbose,
    )
    if manifest.command == COMMAND_SWEEP:
        rows = runner.sweep(manifest.mode, manifest.rates or [])
    else:
        rows = [runner.run_point(manifest.mode)]
    _emit(rows, config, args.out, runner, manifest.mode, manifest.command, manifest.rates)
    return _rows_status(rows)


def _emit(
    rows: list[MetricsRow],
    config: ExperimentConfig,
    out: Path | None,
    runner: ExperimentRunner,
    mode: Mode,
    command: str,
    rates: list[float] | None,
) -> None:
    if out is None:
        sys.stdout.write(render_csv(rows, config))
        return
    write_csv(rows, config, out)
    write_manifest(runner.manifest(mode, command, rates), out)


def _rows_status(rows: list[MetricsRow]) -> int:
    return EXIT_CAP_EXCEEDED if any(row.error for row in rows) else EXIT_OK
