"""`export` command: checkpoint in, GAAW archive + config + fixtures out."""

from __future__ import annotations

import argparse
import sys

from gaanet.errors import GaanetError

from .export import ExportError, export_checkpoint


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def main(argv=None) -> int:
    parser = _Parser(prog="export", description=__doc__)
    parser.add_argument("--ckpt", required=True, help="torch checkpoint path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--fp16", action="store_true", help="store payloads as f16")
    parser.add_argument(
        "--no-fold",
        action="store_true",
        help="emit raw batch-norm entries with fold markers instead of fusing",
    )
    parser.add_argument("--seed", type=int, default=0, help="reference input seed")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        paths = export_checkpoint(
            args.ckpt,
            args.out,
            fold=not args.no_fold,
            fp16=args.fp16,
            seed=args.seed,
        )
    except (ExportError, GaanetError, OSError) as exc:
        print(f"export: {exc}", file=sys.stderr)
        return 2
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
