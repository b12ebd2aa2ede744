#!/usr/bin/env python3
"""Empirical S-ANN failure rate against the Poisson-model bounds.

For each eta the stream is a homogeneous Poisson process tuned so that an
r-ball holds m = C n^eta points on average; queries sit at least r from the
boundary. With ``--deletions`` an adversary removes the d retained points
closest to each query before it is answered.
"""

import argparse
import math

import numpy as np

from streamsketch.oracle import (
    ann_failure_bound,
    classify_crann,
    distances,
    gen_poisson_stream,
    poisson_layout,
    turnstile_failure_bound,
)
from streamsketch.sann import SannParams, SannSketch


def trial(n, eta, C, dim, r, c, queries, seed, deletions):
    m = C * n**eta
    lam, side = poisson_layout(n, dim, r, m)
    s = gen_poisson_stream(dim, lam, side, r, n_cap=n, seed=seed, n_queries=4 * queries)
    Q = s.queries[s.planted][:queries]
    sketch = SannSketch(dim, SannParams(n=n, eta=eta, r=r, c=c, seed=seed).resolved(dim))
    sketch.insert_many(s.ids, s.points)
    d = math.floor(m * n**-eta / 2) if deletions else 0
    fails = 0
    for q in Q:
        alive = np.ones(len(s.points), dtype=bool)
        removed = []
        if d:
            ids, pts = sketch.stored_points()
            for i in ids[np.argsort(distances(pts, q), kind="stable")[:d]].tolist():
                sketch.delete(i)
                removed.append(i)
                alive[i] = False
        fails += classify_crann(q, sketch.query(q), s.points[alive], r, c) == "FAIL"
        for i in removed:
            sketch.reinsert(i, s.points[i])
    bound = turnstile_failure_bound(n, eta, m, d) if d else ann_failure_bound(n, eta, m)
    return fails / len(Q), bound, d, sketch.params


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--etas", type=float, nargs="+", default=[0.2, 0.3, 0.4])
    ap.add_argument("--C", type=float, default=4.0, help="m = C n^eta")
    ap.add_argument("--dim", type=int, default=4)
    ap.add_argument("--r", type=float, default=1.0)
    ap.add_argument("--c", type=float, default=1.5)
    ap.add_argument("--queries", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--deletions", action="store_true")
    args = ap.parse_args()
    print(f"{'eta':>5} {'k':>4} {'L':>6} {'d':>3} {'failure':>8} {'bound':>7}")
    for eta in args.etas:
        rate, bound, d, p = trial(args.n, eta, args.C, args.dim, args.r, args.c,
                                  args.queries, args.seed, args.deletions)
        print(f"{eta:>5} {p.k:>4} {p.L:>6} {d:>3} {rate:>8.3f} {bound:>7.3f}")


if __name__ == "__main__":
    main()
