"""Command line entry point.

    gapforge <config.json> [--out DIR] [--threads N] [--seed S]
    gapforge compare <report_a.json> <report_b.json> [--tol KEY=VALUE ...]

Exit codes: 0 completed (including failing certificates), 1 comparison
violation, 2 configuration error, 3 numerical non-convergence.
"""
import argparse
import json
import logging
import os
import sys

from .analyses import RUNNERS
from .config import load_config
from .errors import BracketError, ConfigError, ConvergenceError
from .report import build_report, compare_reports, write_outputs

OUT_ENV = "GAPFORGE_OUT"
EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NONCONV = 0, 1, 2, 3

log = logging.getLogger("gapforge")


def resolve_out_dir(cfg_dir, cli_dir=None, env=None):
    """--out beats the environment variable, which beats the config file."""
    env = os.environ if env is None else env
    return cli_dir or env.get(OUT_ENV) or cfg_dir


def run(config_path, out=None, threads=None, seed=None):
    """Run one analysis; returns (exit code, output directory or None)."""
    try:
        cfg = load_config(config_path, {"threads": threads, "seed": seed})
        out_dir = resolve_out_dir(cfg.output_dir, out)
        cfg = cfg.model_copy(update={"output_dir": out_dir})
        kernel, grid = cfg.model.kernel(), cfg.grid.radial()
    except (ConfigError, ValueError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG, None
    runner = RUNNERS[cfg.analysis.kind]
    try:
        results, tables = runner(cfg)
    except (ConfigError, BracketError, ValueError) as exc:
        # DomainError and invalid control choices surface as ValueError
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG, None
    except ConvergenceError as exc:
        log.error("no convergence: %s", exc)
        err = {"type": "ConvergenceError", "message": str(exc),
               "residual": exc.residual, "iterations": exc.iterations}
        write_outputs(out_dir, build_report(cfg, kernel, grid, {}, "non_convergence", err), {})
        return EXIT_NONCONV, out_dir
    write_outputs(out_dir, build_report(cfg, kernel, grid, results), tables)
    return EXIT_OK, out_dir


def _parse_tols(items):
    tols = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"tolerance {item!r} is not KEY=VALUE")
        tols[key] = float(val)
    return tols or None


def compare_main(argv):
    ap = argparse.ArgumentParser(prog="gapforge compare",
                                 description="Compare two gapforge reports.")
    ap.add_argument("report_a")
    ap.add_argument("report_b")
    ap.add_argument("--tol", action="append", metavar="KEY=VALUE",
                    help="relative tolerance for a quantity (repeatable; KEY may be 'default')")
    args = ap.parse_args(argv)
    try:
        diff = compare_reports(args.report_a, args.report_b, _parse_tols(args.tol))
    except (ConfigError, OSError, json.JSONDecodeError, KeyError) as exc:
        log.error("cannot compare: %s", exc)
        return EXIT_CONFIG
    print(json.dumps(diff, indent=2, sort_keys=True))
    return EXIT_OK if diff["ok"] else EXIT_VIOLATION


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if argv and argv[0] == "compare":
        return compare_main(argv[1:])
    ap = argparse.ArgumentParser(prog="gapforge",
                                 description="Rainbow-ladder gap equation analyses.")
    ap.add_argument("config", help="JSON run configuration")
    ap.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    ap.add_argument("--threads", type=int, help="worker threads for scans")
    ap.add_argument("--seed", type=int, help="seed for randomized trials")
    args = ap.parse_args(argv)
    code, out_dir = run(args.config, args.out, args.threads, args.seed)
    if code in (EXIT_OK, EXIT_NONCONV):
        log.info("outputs in %s", out_dir)
    return code


if __name__ == "__main__":
    sys.exit(main())
