"""Command-line entry point: ``coshflows run|fixtures|check``."""

import argparse
import logging
import sys
from pathlib import Path

from coshflows import __version__
from coshflows.checks import run_checks
from coshflows.fixtures import fixture_filename, list_fixtures, load_fixture
from coshflows.runner import EXIT_INVALID, ExperimentRunner, write_atomic

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def _run(args: argparse.Namespace) -> int:
    return ExperimentRunner().run(args.config)


def _fixtures(args: argparse.Namespace) -> int:
    for name, schema, description in list_fixtures():
        print(f"{name:<22} {schema:<14} {description}")
    if args.dump is not None:
        target = Path(args.dump)
        for name, _, _ in list_fixtures():
            spec = load_fixture(name)
            write_atomic(target / fixture_filename(name), spec.model_dump_json(indent=2) + "\n")
        logger.info("fixtures written to %s", target)
    return 0


def _check(args: argparse.Namespace) -> int:
    results = run_checks(args.seed)
    for result in results:
        status = "ok  " if result.passed else "FAIL"
        print(
            f"{status} {result.name:<36} worst {result.worst:.3e} "
            f"(tolerance {result.tolerance:.0e}, {result.runtime_s:.2f}s)"
        )
    return 0 if all(result.passed for result in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coshflows", description="Cosh gradient systems: experiments and invariant checks."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log solver diagnostics")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="path to the JSON experiment config")
    run.set_defaults(handler=_run)

    fixtures = commands.add_parser("fixtures", help="list the bundled fixtures")
    fixtures.add_argument("--dump", metavar="DIR", help="also write every fixture as JSON into DIR")
    fixtures.set_defaults(handler=_fixtures)

    check = commands.add_parser("check", help="run the invariant suite")
    check.add_argument("--seed", type=int, default=0, help="seed of the sampled inputs")
    check.set_defaults(handler=_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return EXIT_INVALID if exit_.code else 0
    _configure_logging(args.verbose, args.quiet)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
