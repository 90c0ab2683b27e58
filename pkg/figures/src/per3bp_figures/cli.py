"""Batch renderer: one subprocess-free pass over the requested kinds."""

from __future__ import annotations

import argparse
import os
import sys

from .errors import FiguresError
from .render import KINDS, FigureSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="per3bp-figures",
                                     description=__doc__)
    parser.add_argument("--artifacts", default="artifacts",
                        help="directory holding the exported files")
    parser.add_argument("--out", default="figures-out",
                        help="directory for the rendered images")
    parser.add_argument("--kinds", default=",".join(KINDS),
                        help="comma list of figure kinds")
    parser.add_argument("--grid", default="uu", help="grid name to draw")
    parser.add_argument("--formats", default="png",
                        help="comma list of image formats")
    args = parser.parse_args(argv)

    inputs = {
        "homoclinic": os.path.join(args.artifacts, "homoclinic.csv"),
        "grids": os.path.join(args.artifacts, "grids.json"),
        "paths": os.path.join(args.artifacts, "paths.csv"),
    }
    style = {"grid": args.grid, "formats": tuple(args.formats.split(","))}
    code = 0
    for kind in args.kinds.split(","):
        kind = kind.strip()
        try:
            out = render(FigureSpec(kind, inputs,
                                    os.path.join(args.out,
                                                 kind.replace("-", "_")),
                                    style))
            print(f"{kind}: {', '.join(out['files'])}")
        except (FiguresError, ValueError) as exc:
            print(f"{kind}: {type(exc).__name__}: {exc}", file=sys.stderr)
            code = 1
    return code


if __name__ == "__main__":
    sys.exit(main())
