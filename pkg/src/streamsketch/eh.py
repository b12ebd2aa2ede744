"""Exponential Histogram for counting arrivals over a sliding window.

Buckets have power-of-two sizes and carry the timestamp of the most recent
arrival folded into them. Internally one deque per size class holds the
timestamps (newest on the left); the classes themselves are ordered by size,
so the oldest bucket is always at the right end of the largest class.

Each class below the largest holds between ``ceil(k/2)`` and
``ceil(k/2) + 1`` buckets, with ``k = ceil(1 / eps_prime)``. When a class
overflows, its two oldest buckets merge into one of twice the size, which
keeps the newer timestamp and joins the next class as its newest member.

The estimate is ``TOTAL - (LAST - 1) / 2``. Only the oldest bucket can be
partially expired, and at least one of its arrivals is still in the window,
so the true count lies in ``[TOTAL - LAST + 1, TOTAL]``. The estimate is the
midpoint of that interval.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .errors import OrderingError, ParameterError


@dataclass(frozen=True)
class EhBucket:
    size: int
    timestamp: int


def space_bound(k: int, N: int, R: int = 1) -> float:
    """Largest bucket count a histogram needs: ``(k/2+1)(log2(2NR/k+1)+1)+1``.

    ``R`` is the largest amount added in a single time step.
    """
    return (k / 2 + 1) * (math.log2(2 * N * R / k + 1) + 1) + 1


class ExpHistogram:
    """Windowed counter with relative error at most ``eps_prime``.

    ``N`` is the window length: an arrival at time ``t`` counts for queries
    at times ``now`` with ``now - N < t <= now``.
    """

    __slots__ = ("eps_prime", "N", "k", "_cap", "_levels", "total", "_time")

    def __init__(self, eps_prime: float, N: int):
        if not 0 < eps_prime <= 1:
            raise ParameterError(f"eps_prime must be in (0, 1], got {eps_prime}")
        if N < 1:
            raise ParameterError(f"window N must be >= 1, got {N}")
        self.eps_prime = float(eps_prime)
        self.N = int(N)
        self.k = math.ceil(1 / self.eps_prime - 1e-12)
        self._cap = -(-self.k // 2) + 1
        self._levels: list[deque] = []
        self.total = 0
        self._time = None

    @property
    def last(self) -> int:
        """Size of the oldest bucket, or 0 when empty."""
        return 1 << (len(self._levels) - 1) if self._levels else 0

    @property
    def per_class_bounds(self) -> tuple[int, int]:
        return self._cap - 1, self._cap

    def _advance(self, now: int):
        if self._time is not None and now < self._time:
            raise OrderingError(f"time went backwards: {now} < {self._time}")
        self._time = now

    def add(self, t: int, amount: int = 1) -> None:
        """Record ``amount`` arrivals at time ``t``."""
        if amount < 1:
            raise ParameterError(f"amount must be >= 1, got {amount}")
        self._advance(t)
        self._expire(t)
        self.total += amount
        levels = self._levels
        if not levels:
            levels.append(deque())
        lv = levels[0]
        if amount == 1:
            lv.appendleft(t)
            if len(lv) <= self._cap:
                return
            incoming = None
        else:
            incoming = [t] * amount
        self._cascade(incoming)

    def _cascade(self, incoming):
        # ``incoming`` are new level-0 timestamps ordered oldest to newest,
        # or None when they are already in place.
        levels, cap = self._levels, self._cap
        i = 0
        while True:
            lv = levels[i]
            if incoming:
                lv.extendleft(incoming)
            excess = len(lv) - cap
            if excess <= 0:
                return
            merged = []
            for _ in range((excess + 1) // 2):
                lv.pop()
                merged.append(lv.pop())
            i += 1
            if i == len(levels):
                levels.append(deque())
            incoming = merged

    def _expire(self, now: int):
        levels = self._levels
        cutoff = now - self.N
        while levels:
            top = levels[-1]
            size = 1 << (len(levels) - 1)
            while top and top[-1] <= cutoff:
                top.pop()
                self.total -= size
            if top:
                return
            levels.pop()

    def expire(self, now: int) -> None:
        """Drop every bucket whose timestamp is ``<= now - N``."""
        self._advance(now)
        self._expire(now)

    def estimate(self, now: int) -> float:
        self._advance(now)
        self._expire(now)
        if not self._levels:
            return 0.0
        return self.total - (self.last - 1) / 2

    def bucket_count(self) -> int:
        return sum(len(lv) for lv in self._levels)

    @property
    def buckets(self) -> list[EhBucket]:
        """All buckets, newest first."""
        return [EhBucket(1 << i, ts) for i, lv in enumerate(self._levels) for ts in lv]

    def state(self) -> list[list[int]]:
        """Per-class timestamp lists (newest first), for serialization."""
        return [list(lv) for lv in self._levels]

    @classmethod
    def from_state(cls, eps_prime: float, N: int, levels, time):
        h = cls(eps_prime, N)
        h._levels = [deque(lv) for lv in levels]
        h.total = sum(len(lv) << i for i, lv in enumerate(h._levels))
        h._time = time
        return h

    @property
    def time(self):
        return self._time


def invariant_violations(h: ExpHistogram) -> list[str]:
    """Check the structural invariants; return a description of each failure."""
    problems = []
    bs = h.buckets
    sizes = [b.size for b in bs]
    stamps = [b.timestamp for b in bs]
    if any(s & (s - 1) for s in sizes):
        problems.append(f"non power-of-two size in {sizes}")
    if any(a > b for a, b in zip(sizes, sizes[1:])):
        problems.append(f"sizes decrease newest->oldest: {sizes}")
    if any(a < b for a, b in zip(stamps, stamps[1:])):
        problems.append(f"timestamps increase newest->oldest: {stamps}")
    if sum(sizes) != h.total:
        problems.append(f"cached total {h.total} != {sum(sizes)}")
    if bs and sizes[-1] != h.last:
        problems.append(f"cached last {h.last} != {sizes[-1]}")
    lo, hi = h.per_class_bounds
    for i, lv in enumerate(h._levels):
        top = i == len(h._levels) - 1
        if len(lv) > hi or (not top and len(lv) < lo) or (top and not lv):
            problems.append(f"class of size {1 << i} holds {len(lv)} buckets, band [{lo}, {hi}]")
    if len(bs) >= 2:
        rest = h.total - h.last
        if (h.last - 1) / (2 * (1 + rest)) > 1 / h.k + 1e-12:
            problems.append(f"oldest bucket too large: last={h.last}, rest={rest}, k={h.k}")
    return problems
