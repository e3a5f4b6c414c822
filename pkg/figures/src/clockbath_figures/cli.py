"""render --kind K --in PATHS --out FILE [--style FILE]"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from .render import FIGURE_KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="render", description=__doc__)
    parser.add_argument("--kind", required=True, choices=sorted(FIGURE_KINDS))
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="input artifact file(s)")
    parser.add_argument("--out", required=True, help="output image file")
    parser.add_argument("--style", default=None,
                        help="YAML options file (cmap, color_by, dpi, title, ...)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    style = {}
    if args.style is not None:
        style = yaml.safe_load(Path(args.style).read_text()) or {}
    try:
        spec = FigureSpec(kind=args.kind, inputs=args.inputs, output=args.out,
                          style=style)
        path = render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
