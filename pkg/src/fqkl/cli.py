"""Command line entry point: ``fqkl gen|run|sweep <config>``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from typing import List, Optional

import numpy as np

from .datagen import ConfigError
from .harness import cmd_gen, cmd_run, cmd_sweep, load_config, rows_to_csv

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fqkl", description="Federated quantum kernel benchmarks")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("gen", "generate and write a dataset"),
                       ("run", "evaluate every method at one configuration"),
                       ("sweep", "evaluate every method over the sweep grid")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="INI experiment file")
        s.add_argument("--seed", type=int, default=None,
                       help="override the base seed (gen: the dataset seed itself)")
        s.add_argument("--out", default=None, help="output path; CSV goes to stdout if unset")
        s.add_argument("--threads", type=int, default=None, help="client worker threads")
        if name != "gen":
            s.add_argument("--timing", action="store_true", help="record wall_ms per row")
    return p


def _write_text(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg = dataclasses.replace(cfg, threads=args.threads)
        if args.seed is not None and args.command != "gen":
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(cfg.sweep, base_seed=args.seed))
        if getattr(args, "timing", False):
            cfg = dataclasses.replace(cfg, record_timing=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "gen":
            out = args.out or cfg.output
            if out is None:
                raise ConfigError("gen needs --out or [output] path")
            series = cmd_gen(cfg, out, args.seed)
            print(f"wrote {out}: shape {series.values.shape[0]}x{series.values.shape[1]} "
                  f"label fraction {float(np.mean(series.labels)):.4f}")
            return EXIT_OK
        runner = cmd_run if args.command == "run" else cmd_sweep
        rows = runner(cfg, cfg.threads)
        _write_text(args.out or cfg.output, rows_to_csv(rows))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 surfaced with context, not swallowed
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
