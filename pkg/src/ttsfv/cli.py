"""Command line driver: ``ttsfv run|convergence|presets``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError
from .experiments import (
    EXIT_CONFIG,
    PRESETS,
    config_from_dict,
    parse_config,
    run_convergence,
    run_experiment,
)


def _load(arg: str, overrides: dict):
    # a bare preset name is accepted in place of a file
    if not Path(arg).exists() and arg in PRESETS:
        return config_from_dict({"problem": arg}, overrides)
    return parse_config(arg, overrides)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ttsfv", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run one experiment"),
                        ("convergence", "L1 errors against the exact Burgers shock over nx_list")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="JSON configuration file or preset name")
        p.add_argument("--output-dir")
        p.add_argument("--format", choices=["hybrid", "full_tt", "both"])
        p.add_argument("--seed", type=int)
    p = sub.add_parser("presets", help="print preset defaults as JSON")
    p.add_argument("name", nargs="?", choices=sorted(PRESETS))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        shown = {args.name: PRESETS[args.name]} if args.name else PRESETS
        print(json.dumps(shown, indent=2, sort_keys=True))
        return 0
    overrides = {"output_dir": args.output_dir, "format": args.format, "seed": args.seed}
    try:
        cfg = _load(args.config, overrides)
        runner = run_experiment if args.command == "run" else run_convergence
        code, summary = runner(cfg)
    except ConfigurationError as e:
        print("configuration error:", file=sys.stderr)
        for v in e.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG
    if code:
        print(f"{summary.get('status')}: {summary.get('error')}", file=sys.stderr)
    else:
        print(f"wrote {cfg.output_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
