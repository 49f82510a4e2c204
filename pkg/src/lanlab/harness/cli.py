"""``lanlab`` command line.

Exit codes: 0 success, 2 configuration error, 3 a checked condition or
identity failed, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from ..errors import ConditionAViolation, ConditionHViolation, ConfigError, LanlabError
from .config import load_config
from .runners import EXIT_CONDITION, EXIT_CONFIG, EXIT_RUNTIME, RUNNERS, run

log = logging.getLogger("lanlab")

DESCRIPTIONS = {
    "check-h": "check the Levy measure regularity conditions",
    "check-a": "check drift growth and dissipativity conditions",
    "chain-oracle": "exact identity suite on a finite chain",
    "lan": "replicated LAN experiment",
    "conditions": "decay of the sufficient-condition statistics",
    "ergodic": "invariant measure, long-run variance, mixing and Fisher growth",
    "simulate": "simulate paths or observations to CSV",
    "report": "regenerate plots from CSVs in the output directory",
}


def _threads(value):
    k = int(value)
    if k < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return k


def build_parser():
    parser = argparse.ArgumentParser(prog="lanlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name, help=DESCRIPTIONS[name])
        p.add_argument("--config", required=name != "chain-oracle" and name != "report",
                       help="experiment configuration (JSON)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--threads", type=_threads,
                       help="worker threads (default: $LANLAB_THREADS or 1)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--no-plots", action="store_true", help="skip SVG figures")
    return parser


def _default_chain_config():
    from .config import parse_config

    return parse_config(b'{"model": {"type": "chain", "chain": {"name": "symmetric_two_state"}},'
                        b' "theta0": 0.3, "scheme": {"h": 1.0, "n": 6, "x0": 0}}', "<built-in>")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.command == "chain-oracle" or args.command == "report":
            cfg = _default_chain_config()
        threads = args.threads
        if threads is None:
            env = os.environ.get("LANLAB_THREADS")
            try:
                threads = int(env) if env else 1
            except ValueError:
                raise ConfigError(f"LANLAB_THREADS must be an integer, got {env!r}") from None
            if threads < 1:
                raise ConfigError("LANLAB_THREADS must be >= 1")
        seed = args.seed if args.seed is not None else cfg["seed"]
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        out = args.out or cfg["output_dir"]
        code, files = run(args.command, cfg, out, seed, threads, not args.no_plots)
    except ConfigError as exc:
        print(f"lanlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConditionHViolation, ConditionAViolation) as exc:
        print(f"lanlab: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except (LanlabError, ValueError, ArithmeticError, OSError) as exc:
        print(f"lanlab: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for f in files:
        print(f)
    if code == EXIT_CONDITION:
        print(f"lanlab: {args.command}: checked condition failed; see the summary JSON", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
