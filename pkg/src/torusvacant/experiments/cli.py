"""The `torus-vacant` command line.

    torus-vacant <command> --config <file> [--out <dir>] [--jobs <k>] [--seed <n>]

Commands: survival, scan-u, segments, largest-ball, excursions, coupling,
constants, qnu, validate. Config files are JSON against the published
schemas (`CONFIG_SCHEMAS`). Exit codes: 0 ok, 1 invariant failure, 2 config
or format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..walk_engine import GridFormatError
from . import commands
from .config import CONFIG_SCHEMAS, ConfigError, config_hash, validate_config
from .validate import format_report, run_validation

_COMMANDS = {
    "survival": commands.cmd_survival,
    "scan-u": commands.cmd_scan_u,
    "segments": commands.cmd_segments,
    "largest-ball": commands.cmd_largest_ball,
    "excursions": commands.cmd_excursions,
    "coupling": commands.cmd_coupling,
    "constants": commands.cmd_constants,
    "qnu": commands.cmd_qnu,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="torus-vacant",
                                 description="vacant-set experiments for random walk on a torus")
    ap.add_argument("command", choices=sorted(list(_COMMANDS) + ["validate"]))
    ap.add_argument("--config", type=Path, help="JSON config file")
    ap.add_argument("--out", type=Path, default=None, help="output directory")
    ap.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--witness", action="store_true", help="print failure witnesses")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    try:
        if args.command == "validate":
            cfg = {}
            if args.config:
                cfg = json.loads(args.config.read_text())
            validate_config("validate", cfg)
            if args.config and "grid_file" in cfg:
                from ..walk_engine import OccupancyGrid
                OccupancyGrid.load(cfg["grid_file"])     # format gate before the suite
            results = run_validation(seed=args.seed if args.seed is not None else cfg.get("seed", 0),
                                     n_grids=cfg.get("n_grids", 12))
            print(format_report(results))
            return 0 if all(r.ok for r in results) else 1

        if args.config is None:
            raise ConfigError(f"{args.command} requires --config")
        config = json.loads(args.config.read_text())
        if args.seed is not None:
            config["seed"] = args.seed
        validate_config(args.command, config)
        out = args.out or Path("runs") / f"{args.command}-{config_hash(config)}"
        _COMMANDS[args.command](config, out, jobs=args.jobs)
        print(f"wrote {out}")
        return 0
    except (ConfigError, GridFormatError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
