"""Command line entry point: ``conecurv solve|sweep|probe|verify|oracle --config PATH``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import ConfigError, load_config
from .energy import HypothesisError
from .geometry import GeometryError
from .harness import COMMANDS, EXIT_HYPOTHESIS, run


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conecurv", description=__doc__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--seed", type=int, help="RNG seed, 0 <= seed < 2**64 (overrides seed)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print(f"conecurv: --seed {args.seed} is not an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_HYPOTHESIS
    try:
        cfg = load_config(args.config)
    except HypothesisError as exc:
        print(f"conecurv: hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ConfigError, GeometryError, OSError) as exc:
        print(f"conecurv: invalid config: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return run(cfg, args.command)


if __name__ == "__main__":
    sys.exit(main())
