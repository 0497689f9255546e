"""Command-line driver.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .config import PipelineConfig, load_config
from .errors import (CGNoConvergence, ConfigError, LineSearchFailed, MissingArtifacts,
                     NonDescentDirection, TooLarge)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("hessapprox")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hessapprox", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (defaults apply when omitted)")
    common.add_argument("--output", help="override [run] output_dir")
    common.add_argument("--seed", type=int, help="override [run] global_seed")
    common.add_argument("--grid-scale", type=float, help="uniform scaling of nx and nz")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("approx", parents=[common], help="probe the misfit Hessian and build symbols")
    inv = sub.add_parser("invert", parents=[common], help="L-BFGS with a chosen preconditioner")
    inv.add_argument("--precond", choices=pipeline.PRECONDS, default="psfplus")
    smp = sub.add_parser("sample", parents=[common], help="run a pCN or gpCN chain")
    smp.add_argument("--method", choices=pipeline.SAMPLERS, default="gpcn")
    smp.add_argument("--hessian", choices=pipeline.HESSIANS, default="psfplus")
    sub.add_parser("diagnose", parents=[common], help="autocorrelation, ESS and histograms")
    sub.add_parser("oracle", parents=[common], help="dense reference artifacts (small grids)")
    sub.add_parser("report", parents=[common], help="summary tables")
    return p


def _load(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    return cfg.with_overrides(args.output, args.seed, args.grid_scale)


def run(args) -> dict:
    cfg = _load(args)
    cmd = args.command
    if cmd == "approx":
        return pipeline.cmd_approx(cfg)
    if cmd == "invert":
        return pipeline.cmd_invert(cfg, args.precond)
    if cmd == "sample":
        return pipeline.cmd_sample(cfg, args.method, args.hessian)
    if cmd == "diagnose":
        return pipeline.cmd_diagnose(cfg)
    if cmd == "oracle":
        return pipeline.cmd_oracle(cfg)
    return pipeline.cmd_report(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run(args)
    except (ConfigError, MissingArtifacts, TooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CGNoConvergence, LineSearchFailed, NonDescentDirection, FloatingPointError,
            ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
