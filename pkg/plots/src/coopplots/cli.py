"""Plot CLI: `plot battery <csv> <out>` and `plot pon <csv> <app_id> <out>`.

Output format follows the file extension; vector (SVG/PDF) is the intended
default, `--format png` forces raster regardless of extension.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import CsvSchemaError, plot_battery_timeseries, plot_completion_vs_pon


def _resolve_out(out: str, fmt: str | None) -> Path:
    path = Path(out)
    if fmt:
        path = path.with_suffix(f".{fmt}")
    elif not path.suffix:
        path = path.with_suffix(".svg")
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plot", description="Render figures from simulator CSVs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_batt = sub.add_parser("battery", help="battery level over time with completion markers")
    p_batt.add_argument("csv")
    p_batt.add_argument("out")

    p_pon = sub.add_parser("pon", help="completion time vs channel availability")
    p_pon.add_argument("csv")
    p_pon.add_argument("app_id", type=int)
    p_pon.add_argument("out")

    for p in (p_batt, p_pon):
        p.add_argument("--format", choices=("svg", "pdf", "png"), default=None,
                       help="override the output format implied by the extension")

    args = parser.parse_args(argv)
    out = _resolve_out(args.out, args.format)
    try:
        if args.command == "battery":
            plot_battery_timeseries(args.csv, out)
        else:
            plot_completion_vs_pon(args.csv, args.app_id, out)
    except (CsvSchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
