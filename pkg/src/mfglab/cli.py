"""Command line entry point: ``mfglab <kind> --config <file> --out <dir> [--seed k]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .harness import KINDS, compare, load_spec, run
from .model import ConfigError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfglab", description=__doc__)
    parser.add_argument("kind", choices=KINDS + ("compare",))
    parser.add_argument("--config", help="model and experiment file (INI)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--tol", type=float, default=0.0, help="absolute tolerance for compare")
    parser.add_argument("manifests", nargs="*", help="two manifests (or run directories) for compare")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.kind == "compare":
        if len(args.manifests) != 2:
            print("compare needs two manifests", file=sys.stderr)
            return 2
        report = compare(*args.manifests, default_tol=args.tol)
        sys.stdout.write(report.dumps())
        return 0 if report.empty else 1
    if not args.config or not args.out:
        print("--config and --out are required", file=sys.stderr)
        return 2
    try:
        spec = load_spec(args.config, args.kind, args.out, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run(spec)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for name, ok in manifest.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}\t{name}")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
