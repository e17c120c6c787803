"""Command-line entry point: ``sarsim run | batch | validate``."""
from __future__ import annotations

import argparse
import logging
import sys

from ..control import ControllerKind
from ..errors import ConfigError
from .batch import parse_seed_range, run_batch, write_batch
from .engine import run_scenario
from .metrics import summarize
from .records import write_run
from .scenario import resolve_scenario

EXIT_OK = 0
EXIT_CONFIG = 2

log = logging.getLogger("sarsim")


def _controllers(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    if names == ["all"]:
        return [k.value for k in ControllerKind]
    return [ControllerKind.parse(n).value for n in names]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sarsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("--scenario", required=True, help="TOML file or bundled scenario name")
    run.add_argument("--controller")
    run.add_argument("--seed", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--out", required=True)

    batch = sub.add_parser("batch", help="simulate many seeds and controllers")
    batch.add_argument("--scenario", required=True)
    batch.add_argument("--controllers", default="all", help="comma list or 'all'")
    batch.add_argument("--seeds", required=True, help="a..b (inclusive), or a comma list")
    batch.add_argument("--steps", type=int)
    batch.add_argument("--workers", type=int, default=1)
    batch.add_argument("--out", required=True)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("--scenario", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_scenario(args.scenario)
        if args.command == "validate":
            print(f"ok: {cfg.name} ({cfg.width}x{cfg.height}, {len(cfg.robots)} robots)")
            return EXIT_OK
        if args.command == "run":
            cfg = cfg.with_overrides(args.controller, args.seed, args.steps)
            record = run_scenario(cfg)
            paths = write_run(record, args.out)
            s = summarize(record)
            print(f"{cfg.name} {cfg.controller.value} seed={cfg.seed}: coverage "
                  f"{s.final_coverage:.2f}%, found {s.victims_found}, deceased {s.victims_deceased}")
            for p in paths.values():
                log.info("wrote %s", p)
            return EXIT_OK
        controllers = _controllers(args.controllers)
        seeds = parse_seed_range(args.seeds)
        rows, aggs = run_batch(cfg, controllers, seeds, steps=args.steps, workers=args.workers)
        write_batch(rows, aggs, args.out)
        for a in aggs:
            print(f"{a.controller:12s} coverage {a.mean['final_coverage']:.2f}% "
                  f"found {a.mean['victims_found']:.2f} deceased {a.mean['victims_deceased']:.2f}")
        return EXIT_OK
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
