"""Command line entry point: ``dickeqfr run|validate|print-defaults``."""
from __future__ import annotations

import argparse
import logging
import sys

from .cache import CACHE_ENV, default_cache_dir
from .config import DEFAULT_CONFIG_TEXT, load_config
from .errors import (ChargeNotConserved, ConfigError, InfeasibleTarget, InvalidArgument, NumericFailure,
                     TruncationGuardViolation)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4
EXIT_TRUNCATION = 5


def _parser():
    ap = argparse.ArgumentParser(prog="dickeqfr", description="Work statistics and fluctuation relations "
                                 "for quenches in the Dicke model.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("config")
    run.add_argument("--output-dir", default=None, help="overrides outputs.directory")
    run.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    run.add_argument("--no-cache", action="store_true", help=f"skip the spectrum cache (location: ${CACHE_ENV})")
    val = sub.add_parser("validate", help="validate a config file")
    val.add_argument("config")
    sub.add_parser("print-defaults", help="print the default configuration")
    return ap


def _num(x):
    # non-finite values are serialized as null
    return "nan" if x is None else f"{x:.3e}"


def _report(msg, code):
    print(f"dickeqfr: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "print-defaults":
        sys.stdout.write(DEFAULT_CONFIG_TEXT)
        return EXIT_OK

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(f"{args.config}: ok")
        return EXIT_OK

    from .experiment import run_experiment

    cache_dir = None if args.no_cache else default_cache_dir()
    try:
        result = run_experiment(cfg, args.output_dir, cache_dir=cache_dir, threads=args.threads)
    except InfeasibleTarget as exc:
        return _report(f"infeasible fit: {exc}", EXIT_INFEASIBLE)
    except TruncationGuardViolation as exc:
        return _report(f"truncation guard: {exc}", EXIT_TRUNCATION)
    except (NumericFailure, ChargeNotConserved) as exc:
        return _report(f"numeric failure: {exc}", EXIT_NUMERIC)
    except InvalidArgument as exc:
        return _report(f"config error: {exc}", EXIT_CONFIG)
    s = result.summary
    fitted = ", ".join(f"{k}: " + " ".join(f"{n}={v:.6g}" for n, v in b.items()) for k, b in s["fitted"].items())
    print(f"fitted {fitted}")
    for k, c in s["crooks"].items():
        print(f"crooks[{k}] max_rel_deviation={_num(c['max_rel_deviation'])}")
    for k, j in s["jarzynski"].items():
        print(f"jarzynski[{k}] residual={_num(j['residual'])}")
    print(f"outputs written to {result.output_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
