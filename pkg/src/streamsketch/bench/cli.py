"""Command-line entry point: ``python -m streamsketch.bench.cli <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from ..errors import ConfigError, FormatError, ParameterError
from ..oracle import gen_gaussian_mixture_stream, gen_poisson_stream
from .config import KINDS, load_config
from .experiments import run_experiment, write_results
from .io import write_csv, write_fvecs

EXIT_OK, EXIT_CONFIG, EXIT_FORMAT = 0, 2, 3
log = logging.getLogger("streamsketch.bench")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streamsketch", description="Streaming sketch benchmarks.")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind, help=f"run the {kind} experiment")
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--out", default=os.path.join("results", kind), help="output directory")
        s.add_argument("--seed", type=int, help="replace the config's seed list with this seed")
        s.add_argument("--full-scale", action="store_true", help="50,000 stored / 5,000 queries")
    g = sub.add_parser("gen-synthetic", help="write a synthetic dataset to fvecs or CSV")
    g.add_argument("--config", help="JSON with keys of this subcommand's flags")
    g.add_argument("--out", default="data", help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--full-scale", action="store_true", help="generate 50,000 points")
    g.add_argument("--generator", choices=("poisson", "gaussian-mixture", "uniform"), default="poisson")
    g.add_argument("--n", type=int, default=10_000)
    g.add_argument("--queries", type=int, default=500)
    g.add_argument("--dim", type=int, default=32)
    g.add_argument("--format", choices=("fvecs", "csv"), default="fvecs")
    return p


def _gen_synthetic(args) -> None:
    opts = {
        "generator": args.generator,
        "n": 50_000 if args.full_scale else args.n,
        "queries": args.queries,
        "dim": args.dim,
        "format": args.format,
    }
    if args.config:
        try:
            with open(args.config) as fh:
                extra = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from None
        unknown = set(extra) - set(opts)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        opts.update(extra)
    n, nq, dim = opts["n"], opts["queries"], opts["dim"]
    if n < 1 or nq < 0 or dim < 1:
        raise ConfigError("n and dim must be positive, queries non-negative")
    rng = np.random.default_rng(args.seed)
    if opts["generator"] == "poisson":
        # intensity n on the unit cube: Poisson(n) points, capped at n
        X = gen_poisson_stream(dim, float(n), 1.0, 0.25, n_cap=n, seed=args.seed, n_queries=0).points
        Q = rng.uniform(0.0, 1.0, size=(nq, dim))
    elif opts["generator"] == "gaussian-mixture":
        X = gen_gaussian_mixture_stream(dim, n, min(10, n), args.seed)
        Q = X[rng.integers(0, n, nq)] + rng.standard_normal((nq, dim))
    else:
        X = rng.uniform(0.0, 1.0, size=(n, dim))
        Q = rng.uniform(0.0, 1.0, size=(nq, dim))
    os.makedirs(args.out, exist_ok=True)
    ext = opts["format"]
    writer = write_fvecs if ext == "fvecs" else write_csv
    writer(os.path.join(args.out, f"base.{ext}"), X)
    writer(os.path.join(args.out, f"query.{ext}"), Q)
    with open(os.path.join(args.out, "config.json"), "w") as fh:
        json.dump({**opts, "seed": args.seed, "points_written": len(X)}, fh, indent=2, sort_keys=True)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "gen-synthetic":
            _gen_synthetic(args)
            return EXIT_OK
        overrides = {}
        if args.seed is not None:
            overrides["seeds"] = [args.seed]
        if args.full_scale:
            overrides["full_scale"] = True
        cfg = load_config(args.config, args.command, overrides)
        rows = run_experiment(cfg)
        res, _ = write_results(args.out, cfg, rows)
        log.info("wrote %d rows to %s", len(rows), res)
        return EXIT_OK
    except (ConfigError, ParameterError) as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except FormatError as e:
        log.error("data format error: %s", e)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
