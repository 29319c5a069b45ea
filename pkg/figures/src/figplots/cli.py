"""Command line for the figure renderer.

Usage: render --family <id> --in <csv> [--in <csv> ...] --out <img>
              --summary <json> [--xlabel L] [--ylabel L]

Exit codes: 0 success, 2 bad input data or arguments, 4 I/O failure.
"""

import argparse
import sys

from .render import FAMILIES, FigureDataError, FigureSpec, render


def build_parser():
    parser = argparse.ArgumentParser(prog="render")
    parser.add_argument("--family", required=True, choices=FAMILIES)
    parser.add_argument(
        "--in", dest="inputs", action="append", required=True, metavar="CSV"
    )
    parser.add_argument("--out", required=True)
    parser.add_argument("--summary", required=True)
    parser.add_argument("--xlabel", default="")
    parser.add_argument("--ylabel", default="")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            family=args.family,
            inputs=args.inputs,
            output=args.out,
            summary=args.summary,
            xlabel=args.xlabel,
            ylabel=args.ylabel,
        )
        render(spec)
        return 0
    except FigureDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
