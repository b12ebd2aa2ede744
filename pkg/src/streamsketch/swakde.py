"""Sliding-window kernel density estimation on a RACE grid.

Every row of the grid is one LSH function; an arriving point increments the
cell its hash selects in every row. Cells are Exponential Histograms, so a
cell reports (approximately) how many of the last ``N`` arrivals landed in
it. A query averages, over rows, the windowed count of the cell the query
hashes to, which estimates ``sum_x k(x, q) ** p`` over the window.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .eh import ExpHistogram, space_bound
from .errors import ParameterError
from .lsh import FamilySpec, HashBank, as_matrix


@dataclass(frozen=True)
class SwakdeParams:
    rows: int
    window: int
    eps_prime: float = 0.1
    family: FamilySpec = field(default_factory=FamilySpec)
    seed: int = 0
    batch_mode: bool = False

    def __post_init__(self):
        if self.rows < 1:
            raise ParameterError(f"rows must be >= 1, got {self.rows}")
        if self.window < 1:
            raise ParameterError(f"window must be >= 1, got {self.window}")
        if not 0 < self.eps_prime <= 1:
            raise ParameterError(f"eps_prime must be in (0, 1], got {self.eps_prime}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SwakdeParams":
        d = dict(d)
        d["family"] = FamilySpec(**d["family"])
        return cls(**d)


@dataclass
class KdeEstimate:
    value: float
    per_row: np.ndarray | None = None


class _Grid:
    """Hashing, clock and cell bookkeeping shared by the sketch and its exact twin."""

    def __init__(self, dim: int, params: SwakdeParams):
        if dim < 1:
            raise ParameterError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.params = params
        self.bank = HashBank(params.family, self.dim, params.rows, params.seed)
        self.cells: list[dict] = [{} for _ in range(params.rows)]
        self.clock = 0
        self.max_amount = 1

    def _new_cell(self):
        raise NotImplementedError

    def _add(self, cell, t: int, amount: int):
        raise NotImplementedError

    def _count(self, cell, now: int) -> float:
        raise NotImplementedError

    def _require_mode(self, batch: bool):
        if batch != self.params.batch_mode:
            kind = "batch" if self.params.batch_mode else "single"
            raise ParameterError(f"this grid was built in {kind} mode")

    def _touch(self, ids_row, amounts=None):
        t = self.clock
        for i, (cells, j) in enumerate(zip(self.cells, ids_row)):
            cell = cells.get(j)
            if cell is None:
                cell = cells[j] = self._new_cell()
            self._add(cell, t, 1 if amounts is None else amounts[i])

    def update(self, x) -> None:
        """Insert one point and advance the clock by one tick."""
        self._require_mode(False)
        ids = self.bank.bucket_ids(as_matrix(x, self.dim))[0].tolist()
        self._touch(ids)
        self.clock += 1

    def update_many(self, X) -> None:
        """``update`` for every row of ``X``, in order, hashing them together."""
        self._require_mode(False)
        A = as_matrix(X, self.dim)
        for ids in self.bank.bucket_ids(A).tolist():
            self._touch(ids)
            self.clock += 1

    def update_batch(self, batch) -> None:
        """Insert a batch that shares one tick; each touched cell gets one add."""
        self._require_mode(True)
        B = np.asarray(batch)
        if B.size == 0:
            raise ParameterError("empty batch")
        A = as_matrix(B, self.dim)
        ids = self.bank.bucket_ids(A)
        t = self.clock
        for i, cells in enumerate(self.cells):
            keys, counts = np.unique(ids[:, i], return_counts=True)
            for j, c in zip(keys.tolist(), counts.tolist()):
                cell = cells.get(j)
                if cell is None:
                    cell = cells[j] = self._new_cell()
                self._add(cell, t, c)
                self.max_amount = max(self.max_amount, c)
        self.clock += 1

    @property
    def now(self) -> int:
        # Time of the most recent arrival; queries see the window ending there.
        return self.clock - 1

    def row_values(self, q) -> np.ndarray:
        ids = self.bank.bucket_ids(as_matrix(q, self.dim))[0].tolist()
        return self._row_values(ids)

    def _row_values(self, ids) -> np.ndarray:
        now = self.now
        out = np.zeros(self.params.rows)
        for i, (cells, j) in enumerate(zip(self.cells, ids)):
            cell = cells.get(j)
            if cell is not None:
                out[i] = self._count(cell, now)
        return out

    def query(self, q) -> KdeEstimate:
        per_row = self.row_values(q)
        return KdeEstimate(float(per_row.mean()), per_row)

    def query_many(self, Q) -> np.ndarray:
        """Per-row values for each query, shape ``(len(Q), rows)``."""
        Q = np.asarray(Q)
        if Q.size == 0:
            return np.zeros((0, self.params.rows))
        ids = self.bank.bucket_ids(as_matrix(Q, self.dim)).tolist()
        return np.array([self._row_values(r) for r in ids])

    def cells_allocated(self) -> int:
        return sum(len(c) for c in self.cells)


class RaceGrid(_Grid):
    """``rows`` x ``W**p`` grid of Exponential Histograms, allocated sparsely."""

    def _new_cell(self):
        return ExpHistogram(self.params.eps_prime, self.params.window)

    def _add(self, cell, t, amount):
        cell.add(t, amount)

    def _count(self, cell, now):
        return cell.estimate(now)

    def space_report(self) -> dict:
        p = self.params
        k = math.ceil(1 / p.eps_prime - 1e-12)
        per_eh = space_bound(k, p.window, self.max_amount)
        cells = self.cells_allocated()
        return {
            "cells_allocated": cells,
            "total_eh_buckets": sum(h.bucket_count() for row in self.cells for h in row.values()),
            "theoretical_bound": p.rows * float(p.family.row_range) * per_eh,
            "allocated_bound": cells * per_eh,
        }

    _MAGIC = b"SWKD"
    _VERSION = 1

    def to_bytes(self) -> bytes:
        body = {
            "dim": self.dim,
            "params": self.params.to_dict(),
            "clock": self.clock,
            "max_amount": self.max_amount,
            "cells": [
                [[j, h.time, h.state()] for j, h in row.items()] for row in self.cells
            ],
        }
        raw = json.dumps(body, separators=(",", ":")).encode()
        return self._MAGIC + struct.pack("<HQ", self._VERSION, len(raw)) + raw

    @classmethod
    def from_bytes(cls, blob: bytes) -> "RaceGrid":
        if blob[:4] != cls._MAGIC:
            raise ValueError("not a SW-AKDE snapshot")
        version, size = struct.unpack_from("<HQ", blob, 4)
        if version != cls._VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        body = json.loads(blob[14 : 14 + size])
        params = SwakdeParams.from_dict(body["params"])
        g = cls(body["dim"], params)
        g.clock = body["clock"]
        g.max_amount = body["max_amount"]
        for cells, row in zip(g.cells, body["cells"]):
            for j, time, levels in row:
                cells[j] = ExpHistogram.from_state(params.eps_prime, params.window, levels, time)
        return g

    def snapshot(self) -> "RaceGrid":
        """Independent copy for read-only querying."""
        return RaceGrid.from_bytes(self.to_bytes())


def swakde_new(dim: int, params: SwakdeParams) -> RaceGrid:
    return RaceGrid(dim, params)


@dataclass
class RowSearch:
    rows: int
    iterations: int
    threshold: float
    excluded_queries: int
    history: list[tuple[int, float]] = field(default_factory=list)


def row_threshold(max_count: float, mean_count: float, eps_prime: float, delta: float) -> float:
    """Row count beyond which the mean of rows is within the target error w.p. ``1 - delta``."""
    return 2 * max_count**2 / ((1 + eps_prime) ** 2 * mean_count**2) * math.log(2 / delta)


def find_optimal_rows(
    stream,
    queries,
    eps_prime: float,
    delta: float,
    family: FamilySpec | None = None,
    *,
    window: int | None = None,
    seed: int = 0,
    max_rows: int = 1 << 14,
) -> RowSearch:
    """Double the row count, starting at 1, until it exceeds the worst-case threshold.

    Each round streams the data through an exact-counter grid with single
    base hashes and evaluates ``row_threshold`` at every query, using the
    largest row count and the row mean at that query. Queries whose mean
    is zero are skipped and counted in ``excluded_queries``.
    """
    from .oracle import CounterTwin

    if not 0 < delta < 1:
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    X = np.asarray(stream, dtype=np.float64)
    Q = np.asarray(queries, dtype=np.float64)
    if X.size == 0 or Q.size == 0:
        raise ParameterError("stream and queries must be non-empty")
    X = as_matrix(X)
    Q = as_matrix(Q, X.shape[1])
    family = replace(family or FamilySpec(), concat=1)
    window = window or len(X)

    rows, iterations, history = 1, 0, []
    while True:
        iterations += 1
        twin = CounterTwin(X.shape[1], SwakdeParams(rows, window, eps_prime, family, seed))
        twin.update_many(X)
        vals = twin.query_many(Q)
        means = vals.mean(axis=1)
        ok = means > 0
        if not ok.any():
            raise ParameterError("every query has zero kernel mass; no row count suffices")
        thresholds = [
            row_threshold(mx, mu, eps_prime, delta) for mx, mu in zip(vals[ok].max(axis=1), means[ok])
        ]
        threshold = float(max(thresholds))
        history.append((rows, threshold))
        if rows > threshold:
            return RowSearch(rows, iterations, threshold, int((~ok).sum()), history)
        if rows * 2 > max_rows:
            raise ParameterError(f"row count would exceed max_rows={max_rows}")
        rows *= 2


__all__ = [
    "KdeEstimate",
    "RaceGrid",
    "RowSearch",
    "SwakdeParams",
    "find_optimal_rows",
    "row_threshold",
    "swakde_new",
]
