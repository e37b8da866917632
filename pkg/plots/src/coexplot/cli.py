"""Command line for rendering trade-off figures.

Exit codes: 0 success, 1 I/O failure, 2 bad arguments or schema error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .render import PlotSpec, SchemaError, render_tradeoff

EXIT_OK = 0
EXIT_IO = 1
EXIT_SCHEMA = 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="coexplot",
        description="Plot goal effectiveness vs total DL power from sweep "
                    "tradeoff.csv files; pass two files to overlay, e.g. two "
                    "sensing-accuracy budgets.")
    ap.add_argument("--version", action="version",
                    version=f"coexplot {__version__}")
    ap.add_argument("csv", nargs="+", help="tradeoff.csv file(s)")
    ap.add_argument("--out", default="tradeoff.svg",
                    help="output image; suffix picks the format (default svg)")
    ap.add_argument("--tag", action="append", default=[],
                    help="label suffix for the matching CSV, repeatable")
    ap.add_argument("--gflops", action="append", default=[],
                    metavar="MODEL=VALUE",
                    help="annotate a model's legend entry with its compute "
                         "cost, repeatable")
    ap.add_argument("--pareto-only", action="store_true",
                    help="draw only the non-dominated frontier of each curve")
    ap.add_argument("--title", default="")
    ap.add_argument("--xlim", nargs=2, type=float, default=None,
                    metavar=("LO", "HI"))
    ap.add_argument("--ylim", nargs=2, type=float, default=None,
                    metavar=("LO", "HI"))
    ap.add_argument("--dpi", type=int, default=150,
                    help="raster resolution (ignored for vector output)")
    return ap


def entrypoint(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    gflops: dict[str, float] = {}
    for item in args.gflops:
        name, sep, value = item.partition("=")
        try:
            if not sep or not name:
                raise ValueError
            gflops[name] = float(value)
        except ValueError:
            print(f"bad --gflops entry {item!r}: expected MODEL=VALUE",
                  file=sys.stderr)
            return EXIT_SCHEMA
    try:
        spec = PlotSpec(csv_paths=tuple(Path(p) for p in args.csv),
                        out_path=Path(args.out), tags=tuple(args.tag),
                        gflops=gflops, pareto_only=args.pareto_only,
                        title=args.title,
                        xlim=tuple(args.xlim) if args.xlim else None,
                        ylim=tuple(args.ylim) if args.ylim else None,
                        dpi=args.dpi)
        out = render_tradeoff(spec)
    except SchemaError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except FileNotFoundError as e:
        print(f"cannot read input: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"cannot write figure: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {out}")
    return EXIT_OK


def main():
    sys.exit(entrypoint())


if __name__ == "__main__":
    main()
