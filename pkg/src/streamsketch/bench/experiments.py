"""Experiment runners. Each returns a list of ``ResultRow``."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, SketchError
from ..lsh import FamilySpec, derive_seed
from ..oracle import CounterTwin, exact_kde, gen_gaussian_mixture_stream, jl_build, jl_search, knn_ids
from ..sann import SannParams, SannSketch, collision_probs
from ..swakde import RaceGrid, SwakdeParams
from . import metrics
from .config import ExperimentConfig
from .io import read_vectors

HEADER = ("experiment", "params", "metric", "value", "runtime_s", "seed")
WARMUP = 10


@dataclass
class ResultRow:
    experiment: str
    params: dict
    metric: str
    value: float
    runtime_s: float
    seed: int

    def as_csv(self) -> list:
        return [
            self.experiment,
            json.dumps(self.params, sort_keys=True),
            self.metric,
            repr(float(self.value)),
            f"{self.runtime_s:.6f}",
            self.seed,
        ]


def _rows(kind, params, values: dict, runtime, seed) -> list[ResultRow]:
    return [ResultRow(kind, dict(params), name, float(v), runtime, seed) for name, v in values.items()]


# -- data --------------------------------------------------------------------


def load_data(cfg: ExperimentConfig, seed: int, store: int | None = None):
    """Return ``(stream, queries)`` as float32 arrays."""
    default_store, nq = cfg.resolved_counts()
    store = store or default_store
    ds = cfg.dataset
    rng = np.random.default_rng(derive_seed(seed, 0xDA7A))
    if ds.kind == "synthetic":
        if ds.generator == "uniform":
            A = rng.uniform(0.0, 1.0, size=(store + nq, ds.dim))
            return A[:store].astype(np.float32), A[store:].astype(np.float32)
        X, means = gen_gaussian_mixture_stream(
            ds.dim, store, min(ds.components, store), seed, return_means=True
        )
        comp = rng.integers(0, len(means), nq)
        Q = means[comp] + rng.standard_normal((nq, ds.dim))
        return X.astype(np.float32), Q.astype(np.float32)
    A = read_vectors(ds.path)
    if ds.queries_path:
        Q = read_vectors(ds.queries_path)[:nq]
        X = A[:store]
    else:
        if len(A) < store + nq:
            store = len(A) - nq
        X, Q = A[:store], A[store : store + nq]
    if len(X) < 2 or len(Q) < 1:
        raise ConfigError(f"dataset {ds.path} has too few rows ({len(A)})")
    if Q.shape[1] != X.shape[1]:
        raise ConfigError("stream and query files differ in dimension")
    return X.astype(np.float32), Q.astype(np.float32)


def resolve_radius(cfg: ExperimentConfig, nn_dist: np.ndarray) -> float:
    """A numeric ``r`` as given, or the median query-to-nearest-point distance."""
    if cfg.r != "auto":
        return float(cfg.r)
    r = float(np.median(nn_dist))
    if not r > 0:
        raise ConfigError("automatic radius came out as zero; set r explicitly")
    return r


def _ground_truth(X, Q, k=50):
    knn = knn_ids(X, Q, k)
    nn_dist = np.linalg.norm(X[knn[:, 0]].astype(np.float64) - Q, axis=1)
    return knn, nn_dist


# -- ANN ---------------------------------------------------------------------


def _sann_params(n, eta, r, c, w, seed, cache, dim) -> SannParams:
    key = (r, c, w, dim)
    if key not in cache:
        base = SannParams(n=max(n, 2), eta=eta, r=r, c=c, w=w, seed=0)
        cache[key] = collision_probs(base, dim)
    p1, p2 = cache[key]
    return SannParams(n=n, eta=eta, r=r, c=c, w=w, p1=p1, p2=p2, seed=seed).resolved(dim)


def _labels(outcomes, nn_dist, r) -> list[str]:
    # Result distances already satisfy the c*r guard, so a query fails only
    # when it had a neighbor within r and nothing came back.
    return ["FAIL" if d <= r and o.result is None else "SUCCESS" for o, d in zip(outcomes, nn_dist)]


def _time_sann(sketch: SannSketch, Q, workers):
    sketch.query_batch(Q[:WARMUP])
    t0 = time.perf_counter()
    outs = [sketch.query(q) for q in Q] if workers <= 1 else sketch.query_batch(Q, workers)
    return outs, time.perf_counter() - t0


def _time_jl(store, Q, topk):
    for q in Q[:WARMUP]:
        jl_search(store, q, topk)
    t0 = time.perf_counter()
    found = [jl_search(store, q, topk)[0] for q in Q]
    return found, time.perf_counter() - t0


def _sann_run(X, Q, knn, nn_dist, eta, r, c, cfg, seed, cache):
    n, dim = X.shape
    params = _sann_params(n, eta, r, c, cfg.w_factor * r, seed, cache, dim)
    t0 = time.perf_counter()
    sketch = SannSketch(dim, params)
    sketch.insert_many(np.arange(n), X)
    outs, seconds = _time_sann(sketch, Q, cfg.workers)
    rep = sketch.memory_report()
    vals = {
        "recall@50": metrics.recall_at_k([o.candidates for o in outs], knn, 50),
        "crann_accuracy": metrics.crann_accuracy(_labels(outs, nn_dist, r)),
        "compression": metrics.compression(rep["bytes_estimate"], n, dim),
        "qps": metrics.qps(len(Q), seconds),
        "points_stored": rep["points_stored"],
        "bytes_estimate": rep["bytes_estimate"],
        "mean_candidates": float(np.mean([o.candidates_examined for o in outs])),
    }
    info = {"k": params.k, "L": params.L, "p1": round(params.p1, 6), "p2": round(params.p2, 6)}
    return vals, info, time.perf_counter() - t0


def _jl_run(X, Q, knn, nn_dist, k, r, c, seed):
    n, dim = X.shape
    t0 = time.perf_counter()
    store = jl_build(X, k, seed)
    found, seconds = _time_jl(store, Q, 1)
    top = jl_search(store, Q, 50)
    dist = np.linalg.norm(X[[int(f[0]) for f in found]].astype(np.float64) - Q, axis=1)
    labels = ["FAIL" if d0 <= r and d > c * r else "SUCCESS" for d0, d in zip(nn_dist, dist)]
    vals = {
        "recall@50": metrics.recall_at_k(list(top), knn, 50),
        "crann_accuracy": metrics.crann_accuracy(labels),
        "compression": store.compression,
        "qps": metrics.qps(len(Q), seconds),
        "bytes_estimate": store.bytes_estimate(),
    }
    return vals, time.perf_counter() - t0


def _jl_dims(cfg, dim):
    return cfg.jl_dims or [max(1, dim // 4)]


def run_ann(cfg: ExperimentConfig) -> list[ResultRow]:
    kind = cfg.experiment
    out: list[ResultRow] = []
    cache: dict = {}
    for seed in cfg.seeds:
        if kind == "ann-scaling":
            out += _ann_scaling(cfg, seed, cache)
            continue
        X, Q = load_data(cfg, seed)
        knn, nn_dist = _ground_truth(X, Q)
        r = resolve_radius(cfg, nn_dist)
        for eps in cfg.epsilons:
            c = 1 + eps
            for eta in cfg.etas:
                try:
                    vals, info, rt = _sann_run(X, Q, knn, nn_dist, eta, r, c, cfg, seed, cache)
                except SketchError as e:
                    e.args = (f"[eps={eps}, eta={eta}] {e}",)
                    raise
                if kind == "ann-qps":
                    vals = {m: vals[m] for m in ("qps", "points_stored")}
                params = {"method": "s-ann", "eps": eps, "eta": eta, "r": r, "n": len(X), **info}
                out += _rows(kind, params, vals, rt, seed)
            for k in _jl_dims(cfg, X.shape[1]):
                vals, rt = _jl_run(X, Q, knn, nn_dist, k, r, c, seed)
                if kind == "ann-qps":
                    vals = {"qps": vals["qps"]}
                params = {"method": "jl", "eps": eps, "jl_dim": k, "r": r, "n": len(X)}
                out += _rows(kind, params, vals, rt, seed)
    return out


def _ann_scaling(cfg, seed, cache) -> list[ResultRow]:
    kind = cfg.experiment
    sizes = sorted(cfg.stream_sizes)
    X_all, Q = load_data(cfg, seed, store=sizes[-1])
    if cfg.r == "auto":
        _, nn_dist = _ground_truth(X_all[: sizes[0]], Q[:100], 1)
    else:
        nn_dist = None
    r = resolve_radius(cfg, nn_dist)
    out = []
    for eps in cfg.epsilons:
        for n in sizes:
            X = X_all[:n]
            for eta in cfg.etas:
                t0 = time.perf_counter()
                params = _sann_params(len(X), eta, r, 1 + eps, cfg.w_factor * r, seed, cache, X.shape[1])
                sketch = SannSketch(X.shape[1], params)
                sketch.insert_many(np.arange(len(X)), X)
                rep = sketch.memory_report()
                vals = {
                    "bytes_estimate": rep["bytes_estimate"],
                    "points_stored": rep["points_stored"],
                    "compression": metrics.compression(rep["bytes_estimate"], len(X), X.shape[1]),
                }
                p = {"method": "s-ann", "eps": eps, "eta": eta, "r": r, "n": len(X), "k": params.k, "L": params.L}
                out += _rows(kind, p, vals, time.perf_counter() - t0, seed)
    return out


# -- KDE ---------------------------------------------------------------------


def kde_queries(X, window: int, count: int, rng, jitter: float = 0.5) -> np.ndarray:
    """Perturbed copies of random points from the final window."""
    tail = X[-window:]
    pick = tail[rng.integers(0, len(tail), count)]
    return pick + jitter * rng.standard_normal(pick.shape)


def run_kde(cfg: ExperimentConfig) -> list[ResultRow]:
    """Stream through the largest grid and its exact twin; smaller row counts use row prefixes.

    Rows are seeded independently by index, so the first ``R`` rows of the
    largest grid are exactly an ``R``-row grid built with the same seed.
    """
    kind = cfg.experiment
    out: list[ResultRow] = []
    _, nq = cfg.resolved_counts()
    for seed in cfg.seeds:
        X, _ = load_data(cfg, seed)
        dim = X.shape[1]
        rng = np.random.default_rng(derive_seed(seed, 0x0E57))
        for window in cfg.windows:
            Q = kde_queries(X, window, nq, rng)
            if cfg.kde_family == "srp":
                family = FamilySpec("srp", 1)
            else:
                _, nn_dist = _ground_truth(X[-window:], Q, 1)
                family = FamilySpec("pstable", 1, resolve_radius(cfg, nn_dist), 100)
            t0 = time.perf_counter()
            top = max(cfg.rows)
            params = SwakdeParams(top, window, cfg.eps_prime, family, seed)
            grid, twin = RaceGrid(dim, params), CounterTwin(dim, params)
            grid.update_many(X)
            twin.update_many(X)
            Y = grid.query_many(Q)
            T = twin.query_many(Q)
            K = np.array([exact_kde(X[-window:], q, family) for q in Q])
            build = time.perf_counter() - t0
            for rows in sorted(cfg.rows):
                t1 = time.perf_counter()
                vals = _kde_metrics(grid, twin, Y[:, :rows], T[:, :rows], K, rows)
                p = {"rows": rows, "window": window, "eps_prime": cfg.eps_prime, "family": family.kind, "n": len(X)}
                out += _rows(kind, p, vals, build + time.perf_counter() - t1, seed)
    return out


def _kde_metrics(grid, twin, Y, T, K, rows) -> dict:
    est, truth = Y.mean(1), T.mean(1)
    okK, okT = K > 0, truth > 0
    rel_kde = np.abs(est[okK] - K[okK]) / K[okK]
    rel_twin = np.abs(est[okT] - truth[okT]) / truth[okT]
    row_ok = T > 0
    row_err = np.abs(Y - T)[row_ok] / T[row_ok]
    buckets = sum(h.bucket_count() for row in grid.cells[:rows] for h in row.values())
    entries = sum(len(c.arrivals) for row in twin.cells[:rows] for c in row.values())
    mean_kde = float(rel_kde.mean()) if len(rel_kde) else float("nan")
    return {
        "mean_rel_err_kde": mean_kde,
        "log10_mean_rel_err_kde": math.log10(mean_kde) if mean_kde > 0 else float("-inf"),
        "mean_rel_err_twin": float(rel_twin.mean()) if len(rel_twin) else float("nan"),
        "max_row_rel_err_twin": float(row_err.max()) if len(row_err) else 0.0,
        "excluded_queries": int((~okK).sum()),
        "cells_allocated": sum(len(row) for row in grid.cells[:rows]),
        "total_eh_buckets": buckets,
        "twin_counter_entries": entries,
    }


# -- driver ------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    if cfg.experiment.startswith("ann"):
        return run_ann(cfg)
    return run_kde(cfg)


def write_results(out_dir, cfg: ExperimentConfig, rows: list[ResultRow]) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    res = os.path.join(out_dir, "results.csv")
    side = os.path.join(out_dir, "config.json")
    with open(res, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for row in rows:
            w.writerow(row.as_csv())
    with open(side, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    return res, side
