"""Command-line entry point: ``simdm recover|sweep|verify``."""

import argparse
import logging
import sys
from typing import Optional

from simdm import __version__
from simdm.commands.recover import cmd_recover
from simdm.commands.sweep import cmd_sweep
from simdm.commands.verify import VERIFIERS, cmd_verify
from simdm.config import load_config
from simdm.errors import SimDMError, ToleranceError
from simdm.settings import Settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", required=True, help="Experiment config (TOML or flat key=value)"
    )
    common.add_argument("--seed", type=int, default=None, help="Override run.base_seed")
    common.add_argument(
        "--jobs", type=int, default=None, help="Worker processes (default: SIMDM_JOBS or CPU count)"
    )
    common.add_argument("--out", default=None, help="Override run.output (CSV path)")

    parser = argparse.ArgumentParser(
        prog="simdm",
        description="Single-index-model recovery with diffusion sampling and inversion.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subcommands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("recover", "Run the configured estimators over all trials"),
        ("sweep", "Full-factorial sweep over C_s, C_s_prime and step counts"),
    ):
        sub = subcommands.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("--x-star-file", default=None, help="Ground-truth vector file")
        sub.add_argument(
            "--dump-vectors", action="store_true", help="Write every x_hat next to the CSV"
        )

    verify = subcommands.add_parser("verify", parents=[common], help="Run an analysis check")
    verify.add_argument("which", choices=sorted(VERIFIERS))
    return parser


def handle_error(e: Exception) -> int:
    """Report an error on stderr and return the process exit code for it."""
    if isinstance(e, ToleranceError):
        print(str(e), file=sys.stderr)
        return e.exit_code
    if isinstance(e, SimDMError):
        print(f"Error: {e.message}", file=sys.stderr)
        return e.exit_code
    logger.exception("Unexpected error")
    print(f"Unexpected error: {e}", file=sys.stderr)
    return EXIT_UNEXPECTED


def run(args: argparse.Namespace) -> int:
    settings = Settings.from_env()
    settings.configure_logging()
    overrides = {"run.base_seed": args.seed, "run.output": args.out}
    if args.command != "verify":
        overrides["run.x_star_file"] = args.x_star_file
        overrides["run.dump_vectors"] = True if args.dump_vectors else None
    config = load_config(args.config, overrides)
    jobs = args.jobs if args.jobs is not None else settings.jobs

    if args.command == "recover":
        cmd_recover(config, jobs)
    elif args.command == "sweep":
        cmd_sweep(config, jobs)
    else:
        cmd_verify(args.which, config)
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    """
    Parse arguments and dispatch.

    Exit codes: 0 success, 1 failed tolerance, 2 invalid config or arguments,
    3 numerical or unexpected failure.
    """
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except Exception as e:
        return handle_error(e)


if __name__ == "__main__":
    sys.exit(main())
