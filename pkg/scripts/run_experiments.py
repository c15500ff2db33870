"""Run every packaged simulation study with its default config.

    python scripts/run_experiments.py [--out DIR] [--replicates N] [--workers N] [--svg]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from arealinterp.cli import main as cli_main
from arealinterp.experiments import EXPERIMENTS


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default="out", help="parent output directory (one subdirectory per study)")
    parser.add_argument("--replicates", type=int, help="override the replicate count of every study")
    parser.add_argument("--workers", type=int, help="worker processes")
    parser.add_argument("--svg", action="store_true", help="also write SVG heatmaps")
    args = parser.parse_args(argv)
    for name in sorted(EXPERIMENTS):
        cmd = ["experiment", name, "--out", str(Path(args.out) / name)]
        if args.replicates is not None:
            cmd += ["--replicates", str(args.replicates)]
        if args.workers is not None:
            cmd += ["--workers", str(args.workers)]
        if args.svg:
            cmd.append("--svg")
        print(f"== {name}")
        code = cli_main(cmd)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
