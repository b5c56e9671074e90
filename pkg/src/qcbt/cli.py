"""``qcbt <scenario> --config PATH --seed N --out DIR [--keep-events]``

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import SCENARIOS, ConfigError, parse_config
from .optics import InvalidParameter

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qcbt", description="Run a beam-tracking simulation scenario.")
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--seed", required=True, type=_seed, help="master seed (u64)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--keep-events", action="store_true", help="also write raw binary event files")
    ap.add_argument("--workers", type=int, default=None, help="trial threads (overrides [run] workers)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on bad usage, which is also our config-error code
        return int(e.code or 0)
    try:
        cfg = parse_config(args.config, scenario=args.scenario, seed=args.seed)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg.workers = args.workers
    except (ConfigError, InvalidParameter, OSError) as e:
        print(f"qcbt: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for w in cfg.warnings:
        print(f"qcbt: warning: {w}", file=sys.stderr)

    from .scenarios import ScenarioError, run_scenario, write_report
    try:
        rep = run_scenario(cfg, keep_events=args.keep_events)
        path = write_report(rep, args.out)
    except ScenarioError as e:
        print(f"qcbt: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"qcbt: cannot write output: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{cfg.scenario}: wrote {os.path.dirname(path)} ({rep.wall_clock:.1f} s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
