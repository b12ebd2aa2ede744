#!/usr/bin/env python3
"""Average each metric over seeds and print one table per results.csv.

    python3 scripts/summarize.py results/*/results.csv
"""

import csv
import json
import statistics
import sys
from collections import defaultdict


def summarize(path: str) -> None:
    groups = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            params = json.loads(row["params"])
            key = (json.dumps(params, sort_keys=True), row["metric"])
            groups[key].append(float(row["value"]))
    print(f"# {path}")
    last = None
    for (params, metric), vals in sorted(groups.items()):
        if params != last:
            print(params)
            last = params
        spread = f" +- {statistics.stdev(vals):.4g}" if len(vals) > 1 else ""
        print(f"    {metric:<24} {statistics.fmean(vals):.6g}{spread}")
    print()


if __name__ == "__main__":
    for p in sys.argv[1:] or ["results/ann-compare/results.csv"]:
        summarize(p)
