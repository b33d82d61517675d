"""Run every config in scripts/configs through the CLI and summarise exit codes.

Usage: python3 scripts/run_all.py [--out out] [--jobs 2] [names ...]
"""

import argparse
import sys
from pathlib import Path

from ergoproc.cli import main as cli_main
from ergoproc.experiments import load_config

HERE = Path(__file__).resolve().parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", help="config stems (default: all)")
    ap.add_argument("--out", default="out")
    ap.add_argument("--jobs", type=int, default=2)
    args = ap.parse_args(argv)
    paths = sorted((HERE / "configs").glob("*.json"))
    if args.names:
        paths = [p for p in paths if p.stem in args.names]
    codes = {}
    for p in paths:
        exp = load_config(p).experiment
        codes[p.stem] = cli_main([exp, "--config", str(p), "--out", str(Path(args.out) / p.stem), "--jobs", str(args.jobs)])
    print()
    for name, code in codes.items():
        print(f"{name:32s} exit {code}")
    return max(codes.values(), default=0)


if __name__ == "__main__":
    sys.exit(main())
