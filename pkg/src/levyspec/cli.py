"""Command line entry point: `levyspec <mode> --config cfg.json [options]`."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import MODES, ConfigError, load_config_file, run


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="levyspec",
        description="Fractional-order estimation experiments for Levy models")
    ap.add_argument("mode", choices=MODES,
                    help="experiment mode (overrides the config's mode field)")
    ap.add_argument("--config", required=True, help="path to the JSON config")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="master seed override")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker processes for trial replication")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config_file(args.config)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    updates = {"mode": args.mode}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.threads is not None:
        updates["threads"] = args.threads
    if updates:
        from dataclasses import replace
        raw = dict(cfg.raw)
        raw.update({k: v for k, v in updates.items() if k != "threads"})
        cfg = replace(cfg, raw=raw, **updates)
    return run(cfg, out_dir=args.out)


if __name__ == "__main__":
    raise SystemExit(main())
