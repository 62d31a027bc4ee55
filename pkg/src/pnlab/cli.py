"""Command-line front end: ``pnlab <subcommand> --config FILE [--out DIR] [--seed N] [--jobs N]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import EXIT_CONFIG, ConfigError, ExperimentConfig, run

SUBCOMMANDS = {
    "solve": "solve",
    "verify": "verify-embeddings",
    "decay": "decay-study",
    "blowup": "blowup-study",
    "regularize": "regularization-study",
    "sweep": "sweep",
}


def _u64(text: str) -> int:
    val = int(text)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", help="output directory (relative paths honour PNLAB_OUTPUT_ROOT)")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--jobs", type=int, help="parallel workers for sweeps (0 = all cores)")
        if name == "verify":
            p.add_argument("--inequality", action="append", metavar="ID",
                           help="run only this inequality id (repeatable)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config, SUBCOMMANDS[args.command])
        cfg = cfg.with_overrides(args.out, args.seed, args.jobs, getattr(args, "inequality", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = run(cfg)
    out = cfg.resolved_output()
    print(f"{cfg.kind}: exit {manifest.exit_code}, outputs in {out}")
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
