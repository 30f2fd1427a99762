"""Command-line front end for the export tools.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures
(missing files, malformed sources, manifest problems).  Runtime failures
print diagnostics to stderr; manifest problems are listed one per line.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from sketchexport.fixture import write_fixture
from sketchexport.manifest import make_manifest
from sketchexport.zoo import ZOO_MEANS, ZOO_SCALE, export_vgg

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sketchexport", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-vgg", help="export a pretrained conv stack to a tensor file")
    p.add_argument("source", help="source model (.npz archive or .pt/.pth state dict)")
    p.add_argument("out", help="output tensor file")
    p.add_argument(
        "--means",
        default=",".join(str(m) for m in ZOO_MEANS),
        help="per-channel input means R,G,B recorded in the header",
    )
    p.add_argument(
        "--scale",
        type=float,
        default=ZOO_SCALE,
        help="input scale recorded in the header",
    )

    p = sub.add_parser("make-manifest", help="pair photos with sketches and eye annotations")
    p.add_argument("photo_dir", help="directory of photos")
    p.add_argument("sketch_dir", help="directory of ground-truth sketches")
    p.add_argument("annotations", help="eye annotation file (stem lx ly rx ry per line)")
    p.add_argument("out", help="output manifest path")

    p = sub.add_parser("make-fixture", help="regenerate the committed extractor test fixture")
    p.add_argument("out", help="output tensor file")

    return parser


def _cmd_export_vgg(args) -> int:
    means = tuple(float(v) for v in args.means.split(","))
    if len(means) != 3:
        raise ValueError(f"--means needs three comma-separated values, got {args.means!r}")
    count = export_vgg(args.source, args.out, means=means, scale=args.scale)
    print(f"wrote {count} records to {args.out}")
    return 0


def _cmd_make_manifest(args) -> int:
    report = make_manifest(args.photo_dir, args.sketch_dir, args.annotations, args.out)
    if not report.ok:
        for problem in report.problems:
            print(f"error: {problem}", file=sys.stderr)
        return RUNTIME_ERROR
    print(f"wrote {len(report.records)} records to {args.out}")
    return 0


def _cmd_make_fixture(args) -> int:
    write_fixture(args.out)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "export-vgg": _cmd_export_vgg,
    "make-manifest": _cmd_make_manifest,
    "make-fixture": _cmd_make_fixture,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
