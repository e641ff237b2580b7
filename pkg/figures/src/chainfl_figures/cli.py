"""Command-line figure generation from a sweep's index.csv."""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, render
from .schema import FIGURE_IDS, SchemaError, SelectionError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainfl-figures",
        description="Render publication-style figures (SVG + companion data "
                    "CSV) from simulation sweep artifacts.",
    )
    parser.add_argument("--index", required=True, help="path to a sweep's index.csv")
    parser.add_argument("--figure", required=True, choices=FIGURE_IDS,
                        help="which figure style to render")
    parser.add_argument("--filter", default=None,
                        help="boolean expression over index columns, "
                             "e.g. \"c_link_bps == 1e6 and n_clients == 100\"")
    parser.add_argument("--out", required=True, help="output SVG path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        figure_id=args.figure, index_path=args.index,
        out_path=args.out, filter_expr=args.filter,
    )
    try:
        image_path, table_path = render(spec)
    except (SchemaError, SelectionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {image_path} and {table_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
