#!/usr/bin/env python3
"""Run every experiment config in scripts/configs through the CLI.

    python3 scripts/run_all.py                  # desk scale, all configs
    python3 scripts/run_all.py ann-qps kde-window --full-scale
"""

import argparse
import os
import sys

from streamsketch.bench.cli import main as cli

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIGS = os.path.join(HERE, "configs")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", help="config names (default: all except file datasets)")
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--full-scale", action="store_true")
    args = ap.parse_args()

    names = args.names or sorted(
        f[:-5] for f in os.listdir(CONFIGS) if f.endswith(".json") and f != "sift1m-slice.json"
    )
    status = 0
    for name in names:
        path = os.path.join(CONFIGS, f"{name}.json")
        kind = name if name != "sift1m-slice" else "ann-compare"
        argv = [kind, "--config", path, "--out", os.path.join(args.out, name)]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        if args.full_scale:
            argv.append("--full-scale")
        print(f"== {name}", flush=True)
        code = cli(argv)
        if code:
            print(f"   {name} exited with {code}", file=sys.stderr)
            status = status or code
    return status


if __name__ == "__main__":
    sys.exit(main())
