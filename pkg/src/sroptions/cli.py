"""Command line entry point: ``sroptions run|tasks|render|compare``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .env_grid import MapError, load_map
from .harness import ConfigError, compare, generate_tasks, load_config, run_experiment, substream
from .heatmap import render_heatmap

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PARTIAL = 4
EXIT_IO = 5


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    records, out = run_experiment(cfg, args.output)
    failed = [r for r in records if r.error]
    print(f"wrote {out}")
    for r in failed:
        print(f"FAILED {r.method} seed {r.seed}: {r.error}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def _cmd_tasks(args) -> int:
    grid = load_map(args.map)
    tasks = generate_tasks(grid, args.n, substream(args.seed, "tasks"))
    print("start,goal")
    for t in tasks:
        print(f"{t.start},{t.goal}")
    return EXIT_OK


def _cmd_render(args) -> int:
    grid = load_map(args.map)
    counts = np.loadtxt(args.counts, delimiter="," if str(args.counts).endswith(".csv") else None, ndmin=1)
    out = args.output or Path(args.counts).with_suffix(".pgm")
    render_heatmap(counts.ravel(), grid, out, binary=args.binary)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    rows = compare(args.record_dir)
    print(f"{'method':<12} {'auc':>10} {'stderr':>10} {'seeds':>6}")
    for method, auc, se, n in rows:
        print(f"{method:<12} {auc:>10.4f} {se:>10.4f} {n:>6}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sroptions", description="Successor-option experiments on grid worlds")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output root (overrides output_dir)")
    r.set_defaults(func=_cmd_run)

    t = sub.add_parser("tasks", help="print random start/goal tasks")
    t.add_argument("map")
    t.add_argument("n", type=int)
    t.add_argument("seed", type=int)
    t.set_defaults(func=_cmd_tasks)

    h = sub.add_parser("render", help="render a visitation-count file as a PGM heatmap")
    h.add_argument("counts")
    h.add_argument("map")
    h.add_argument("-o", "--output")
    h.add_argument("--binary", action="store_true", help="write P5 instead of P2")
    h.set_defaults(func=_cmd_render)

    c = sub.add_parser("compare", help="AUC table for a finished run directory")
    c.add_argument("record_dir")
    c.set_defaults(func=_cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MapError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
