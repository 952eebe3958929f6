"""
Command-line front end.

    cgmarkov run --config exp.json [--paper-scale] [--threads k] [--out dir]
    cgmarkov validate-config exp.json
    cgmarkov list

Exit status: 0 on success, 2 for an invalid config, 3 for a numerical
failure inside the library.
"""

import argparse
import logging
import os
import sys
import time

from cg_errors import CoarseGrainingError, ConfigError
from cg_experiments import EXPERIMENTS, RunContext, load_experiment_config, run_experiment
from cg_io import (
    emit_manifest,
    ensure_output_dir,
    log_success,
    setup_logging,
    write_csv,
    write_curve_csv,
    write_ensemble_summary,
)

logger = logging.getLogger(__name__)

VERSION = "1.0.0"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def write_outputs(output, out_dir):
    """Write every table, curve and ensemble summary of an ExperimentOutput"""
    written = []
    for name, frame in output.tables.items():
        written.append(write_csv(frame, os.path.join(out_dir, name)))
        logger.info("wrote %s (%d rows)", written[-1], len(frame))
    for name, curve in output.curves.items():
        written.append(write_curve_csv(curve, os.path.join(out_dir, name)))
        logger.debug("wrote curve %s", written[-1])
    for name, (curve, stderr) in output.ensembles.items():
        written.append(write_ensemble_summary(curve, stderr, os.path.join(out_dir, name)))
        logger.info("wrote ensemble summary %s", written[-1])
    return written


def run(config, ctx):
    """
    Run one experiment and write its CSV files plus manifest.json.

    Returns (exit_status, written_paths). A manifest is written for failed
    runs as well, recording the error.
    """
    created = ensure_output_dir(config.output_path)
    started = time.perf_counter()
    logger.info("running %s -> %s", config.experiment, config.output_path)
    written = []
    metadata = {
        "experiment": config.experiment,
        "config": config.raw,
        "paper_scale": ctx.full_scale,
        "threads": ctx.workers,
        "output_dir_created": created,
        "base_seed": config.params.get("base_seed", config.params.get("seed")),
    }
    try:
        output = run_experiment(config, ctx)
        written.extend(write_outputs(output, config.output_path))
        if output.base_seed is not None:
            metadata["base_seed"] = output.base_seed
        metadata.update(status="completed", summary=output.summary)
        status = EXIT_OK
    except ConfigError as e:
        logger.error("%s", e)
        metadata.update(status="failed", error=str(e))
        status = EXIT_CONFIG
    except CoarseGrainingError as e:
        logger.error("[%s] %s", type(e).__module__, e)
        metadata.update(status="failed", error=f"{type(e).__name__}: {e}")
        status = EXIT_NUMERICAL
    metadata["wall_time_s"] = round(time.perf_counter() - started, 3)
    manifest = emit_manifest(config.output_path, metadata, written)
    if status == EXIT_OK:
        log_success(
            "%s finished in %.2f s, manifest %s",
            config.experiment,
            metadata["wall_time_s"],
            manifest,
        )
    return status, written + [manifest]


def _cmd_run(args):
    try:
        config = load_experiment_config(args.config, output_override=args.out)
    except ConfigError as e:
        logger.error("%s: %s", args.config, e)
        return EXIT_CONFIG
    ctx = RunContext(workers=args.threads, full_scale=args.full_scale)
    status, _ = run(config, ctx)
    return status


def _cmd_validate(args):
    try:
        config = load_experiment_config(args.config)
    except ConfigError as e:
        logger.error("%s: %s", args.config, e)
        return EXIT_CONFIG
    log_success("%s: valid %s config", args.config, config.experiment)
    return EXIT_OK


def _cmd_list(args):
    for name, (defaults, _) in sorted(EXPERIMENTS.items()):
        print(f"{name}: {', '.join(sorted(defaults))}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cgmarkov",
        description="Markovian coarse-graining of linear overdamped Langevin dynamics",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="Run an experiment from a JSON config")
    run_p.add_argument("--config", required=True, help="Experiment config (JSON)")
    run_p.add_argument(
        "--paper-scale",
        "--full-scale",
        action="store_true",
        dest="full_scale",
        help="Use the full trajectory count (5000)",
    )
    run_p.add_argument("--threads", type=int, default=1, help="Worker threads for Monte Carlo")
    run_p.add_argument("--out", help="Output directory (overrides output_path)")
    run_p.set_defaults(func=_cmd_run)

    val_p = sub.add_parser("validate-config", help="Check a config without running it")
    val_p.add_argument("config", help="Experiment config (JSON)")
    val_p.set_defaults(func=_cmd_validate)

    list_p = sub.add_parser("list", help="List experiments and their parameters")
    list_p.set_defaults(func=_cmd_list)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
