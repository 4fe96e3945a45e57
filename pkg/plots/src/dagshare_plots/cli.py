"""The `plots` command: render figures (or their data tables) from run manifests."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import RenderError, load_run, render, write_dry_run


def _cmd_render(args) -> int:
    manifest = Path(args.manifest)
    run_dir = manifest.parent if manifest.is_file() else manifest
    data = load_run(run_dir)
    if args.dry_run:
        path = write_dry_run(data, args.out)
    else:
        path = render(data, args.out)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plots", description="figure rendering for simulation runs")
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render one run directory")
    p_render.add_argument("--manifest", required=True,
                          help="run manifest.json (or the run directory)")
    p_render.add_argument("--out", required=True, help="output directory")
    p_render.add_argument("--dry-run", action="store_true",
                          help="emit the plotted-data table instead of an image")
    p_render.set_defaults(func=_cmd_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
