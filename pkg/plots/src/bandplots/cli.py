"""Command line: plot <kind> <manifest> -o <png>."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, PlotError, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plot",
        description="render figures from thin-band run directories",
    )
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("manifest",
                        help="run directory or path to its manifest.json")
    parser.add_argument("-o", "--out", required=True,
                        help="output image path (png)")
    parser.add_argument("--limit", default=None,
                        help="limit-run directory for the zeta overlay")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    options = {}
    if args.limit is not None:
        options["limit"] = args.limit
    try:
        info = render(FigureSpec(manifest=args.manifest, kind=args.kind,
                                 out=args.out, options=options))
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out} ({info})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
