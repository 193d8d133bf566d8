"""Command-line entry point: ``lmscausal <subcommand> --config PATH``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from threadpoolctl import threadpool_limits

from .config import ConfigError, load_config
from .data import CohortError
from .pipeline import StageError, run_pipeline, run_stage

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_STAGE = 0, 2, 3, 4

SUBCOMMANDS = {
    "generate": "generate", "extract": "extract", "cluster": "cluster", "train": "train",
    "explain": "explain", "cca": "cca", "discover": "discover", "sem": "sem", "report": "report",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lmscausal", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ["run", *SUBCOMMANDS]:
        help_ = "run every stage in order" if name == "run" else f"run the {name} stage"
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="YAML pipeline config")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out-dir", default=None, help="override the config output directory")
        s.add_argument("--threads", type=int, default=None, help="cap worker threads")
        s.add_argument("--force", action="store_true", help="rerun even when up to date")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out_dir is not None:
            cfg = replace(cfg, out_dir=args.out_dir, base_dir=".")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg.validate()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with threadpool_limits(limits=args.threads):
            if args.command == "run":
                run_pipeline(cfg, force=args.force)
            else:
                run_stage(SUBCOMMANDS[args.command], cfg, force=args.force)
    except CohortError as e:
        print(f"data validation error: {e}", file=sys.stderr)
        return EXIT_DATA
    except StageError as e:
        print(f"stage failed: {e}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK



if __name__ == "__main__":
    sys.exit(main())
