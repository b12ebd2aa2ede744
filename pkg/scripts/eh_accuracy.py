#!/usr/bin/env python3
"""Worst observed relative error and peak bucket count of the Exponential Histogram.

Streams random 0/1 sequences through one histogram per (eps', N) pair and
compares against an exact windowed count at every step.
"""

import argparse

import numpy as np

from streamsketch.eh import ExpHistogram, space_bound


def run(eps: float, N: int, length: int, rng) -> tuple[float, int, float]:
    h = ExpHistogram(eps, N)
    bits = rng.uniform(size=length) < rng.uniform()
    prefix = np.concatenate(([0], np.cumsum(bits)))
    worst, peak = 0.0, 0
    for t, b in enumerate(bits.tolist()):
        if b:
            h.add(t)
        exact = prefix[t + 1] - prefix[max(0, t + 1 - N)]
        est = h.estimate(t)
        if exact:
            worst = max(worst, abs(est - exact) / exact)
        peak = max(peak, h.bucket_count())
    return worst, peak, space_bound(h.k, N)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--length", type=int, default=20_000)
    ap.add_argument("--streams", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'eps':>6} {'N':>6} {'worst rel err':>14} {'peak buckets':>13} {'bound':>8}")
    for eps in (0.5, 0.2, 0.1, 0.01):
        for N in (8, 64, 1024, 8192):
            runs = [run(eps, N, args.length, rng) for _ in range(args.streams)]
            worst = max(r[0] for r in runs)
            peak = max(r[1] for r in runs)
            print(f"{eps:>6} {N:>6} {worst:>14.5f} {peak:>13} {runs[0][2]:>8.2f}")


if __name__ == "__main__":
    main()
