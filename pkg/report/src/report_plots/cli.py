"""Command-line entry point: sgl-report --in <dir> --out <dir> --format svg."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import FIGURES, ReportSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgl-report",
        description="Render figures from an sgl run directory",
    )
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="run directory with CSV/JSON artifacts")
    parser.add_argument("--out", dest="out_dir", required=True,
                        help="output directory for figures")
    parser.add_argument("--format", dest="fmt", default="svg",
                        choices=["svg", "png"])
    parser.add_argument("--figures", nargs="*", default=None,
                        choices=list(FIGURES),
                        help="subset of figures (default: all)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    input_dir = Path(args.input_dir)
    if not input_dir.is_dir():
        print(f"input directory not found: {input_dir}", file=sys.stderr)
        return 1
    figures = tuple(args.figures) if args.figures is not None else FIGURES
    spec = ReportSpec(input_dir=input_dir, figures=figures, fmt=args.fmt)
    report = render(spec, args.out_dir)
    for name, reason in sorted(report.skipped.items()):
        print(f"skipped {name}: {reason}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
