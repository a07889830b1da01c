"""Command-line front end: one figure kind per invocation.

Exit codes: 0 success, 1 input or schema error, 2 unexpected failure.
"""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .render import FIGURE_KINDS, FigureError, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render charts from blocks-sim result directories.")
    parser.add_argument("kind", choices=FIGURE_KINDS,
                        help="which chart to draw")
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="result directory (cache_qos also accepts a "
                             "directory of per-policy result directories)")
    parser.add_argument("--out", dest="output_path", required=True,
                        help="output PNG path")
    parser.add_argument("--title", default=None, help="override the chart title")
    parser.add_argument("--dpi", type=int, default=150)
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, input_dir=args.input_dir,
                          output_path=args.output_path, title=args.title,
                          dpi=args.dpi)
        written = render(spec)
    except FigureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print(f"wrote {written}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
