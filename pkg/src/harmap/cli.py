"""Command-line entry point: ``harmap <subcommand> [--config PATH] [--out PATH] ...``.

Exit codes: 0 when every non-skipped check passes, 1 when any check fails,
2 for configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checks import run_suite
from .config import ConfigError, fixture_config, load_config
from .decompositions import DECOMPOSITIONS
from .report import dumps

SUBCOMMAND_TASKS = {
    "verify-geometry": lambda cfg, args: ["bianchi", "adjointness", "example1"]
    + (["example2"] if cfg.dim == 3 else []),
    "verify-map": lambda cfg, args: ["energy", "theorem1", "corollary1", "corollary2"],
    "decompose": lambda cfg, args: [args.kind],
    "classify": lambda cfg, args: ["classify"],
    "variations": lambda cfg, args: ["variations", "harmonic-family"],
    "suite": lambda cfg, args: None,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--fixture", default="conformal_t2",
                        help="built-in metric used when no --config is given (default: conformal_t2)")
    common.add_argument("--out", type=Path, help="write the JSON report here")
    common.add_argument("--tol", type=float, help="relative tolerance (overrides the config)")
    common.add_argument("--resolution", type=int, help="grid points per axis (overrides the config)")
    common.add_argument("--seed", type=int, help="seed for random fields (overrides the config)")
    common.add_argument("--timing", action="store_true", help="record runtime_ms (makes reports non-reproducible)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="harmap", description="Harmonic map and symmetric tensor checks on flat tori.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify-geometry", parents=[common], help="curvature identities and operator adjointness")
    sub.add_parser("verify-map", parents=[common], help="energy, Theorem 1 and corollaries for the configured map")
    dec = sub.add_parser("decompose", parents=[common], help="split a seeded random symmetric tensor")
    dec.add_argument("--kind", choices=sorted(DECOMPOSITIONS), default="berger-ebin")
    sub.add_parser("classify", parents=[common], help="classify the covariant derivative of a harmonic tensor")
    sub.add_parser("variations", parents=[common], help="first variations and harmonic metric families")
    sub.add_parser("suite", parents=[common], help="run the configured task list")
    return parser


def _load(args):
    if args.config is not None:
        cfg = load_config(args.config, args.resolution, args.seed)
    else:
        cfg = fixture_config(args.fixture, args.resolution, 1 if args.seed is None else args.seed)
        cfg.validate()
    if args.tol is not None:
        if not 0 < args.tol < 1:
            raise ConfigError(f"--tol must lie in (0, 1), got {args.tol}")
        cfg.rel_tol = args.tol
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    tasks = SUBCOMMAND_TASKS[args.command](cfg, args)
    reports, code = run_suite(cfg, tasks, timing=args.timing)
    for rep in reports:
        print(rep.summary())
        if rep.error:
            print(f"        error: {rep.error}")
        for leg in rep.skipped:
            print(f"        skipped {leg['leg']}: {leg['reason']}")
    if args.out is not None:
        args.out.write_text(dumps(reports), encoding="utf-8")
    return code


if __name__ == "__main__":
    sys.exit(main())
