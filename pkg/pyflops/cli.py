"""Command line entry point."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from pyflops.bench import RunManifest, run_order_study, run_sweep
from pyflops.config import ExperimentConfig, validate_config
from pyflops.const import EXIT_CONFIG_ERROR, EXIT_OK, LOG, PYFLOPS_VERSION
from pyflops.exceptions import ConfigError
from pyflops.plot import emit_plots


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pyflops", description="Flow-path sampler benchmarks on analytic targets"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {PYFLOPS_VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--log-traces", action="store_true", help="per-step sampler traces")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "sweep samplers x steps x seeds x targets"),
        ("order-study", "fit convergence orders against the RK4 oracle"),
    ):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True)
        sub.add_argument("--out", default=None, help="output directory")
        sub.add_argument("--workers", type=int, default=None)

    plot = commands.add_parser("plot", help="write SVG plots for a sweep manifest")
    plot.add_argument("--manifest", required=True)

    validate = commands.add_parser("validate", help="check a config file")
    validate.add_argument("--config", required=True)
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    return validate_config(args.config).with_overrides(output=args.out, workers=args.workers)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose or args.log_traces else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "validate":
            config = validate_config(args.config)
            print(f"{args.config}: ok, config hash {config.config_hash}")
            return EXIT_OK
        if args.command == "plot":
            manifest = RunManifest.load(args.manifest)
            for path in emit_plots(manifest):
                print(path)
            return EXIT_OK
        runner = run_sweep if args.command == "run" else run_order_study
        manifest = runner(_load(args), log_traces=args.log_traces)
    except ConfigError as err:
        LOG.error(f"Configuration error: {err}")
        return EXIT_CONFIG_ERROR
    LOG.info(f"Finished in {manifest.elapsed or 0.0:.1f}s")
    print(manifest.path)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
