"""Streaming (c, r)-approximate near neighbor sketch with sampling.

Each arriving point is kept with probability ``n ** -eta``. Kept points are
indexed in ``L`` hash tables, each keyed by a concatenation of ``k`` base
hashes. A query scans the tables in order, appending whole buckets to a
candidate list until it holds at least ``3L`` entries, then returns the
closest candidate if it lies within ``c * r``.

The ``L`` tables live in one multimap from ``(table, bucket key)`` to point
slots: a sorted array of 64-bit keys for bulk-loaded entries plus a small
dict for recent single inserts. Deletions are tombstones on the slot.
"""

from __future__ import annotations

import io
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CapacityError, ParameterError, ShapeError, UniquenessError
from .lsh import FamilySpec, HashBank, as_matrix, derive_seed, estimate_collision_prob

_SAMPLER_STREAM = 0x5A4E4E


def _ceil(x: float) -> int:
    return math.ceil(x - 1e-9)


def derive_params(n: int, p1: float, p2: float) -> tuple[float, int, int]:
    """Return ``(rho, k, L)`` with ``k = ceil(log_{1/p2} n)`` and ``L = ceil(n**rho / p1)``."""
    if not 0 < p2 < p1 < 1:
        raise ParameterError(f"need 0 < p2 < p1 < 1, got p1={p1}, p2={p2}")
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    rho = math.log(1 / p1) / math.log(1 / p2)
    k = max(1, _ceil(math.log(n) / math.log(1 / p2)))
    L = max(1, _ceil(n**rho / p1))
    return rho, k, L


@dataclass
class SannParams:
    """Sketch parameters. ``k``/``L``/``p1``/``p2`` are derived when left as None.

    ``w`` is the p-stable bucket width; it defaults to ``r``. For the SRP
    family distances are angles in radians.
    """

    n: int
    eta: float
    r: float
    c: float = 1.5
    p1: float | None = None
    p2: float | None = None
    k: int | None = None
    L: int | None = None
    seed: int = 0
    family: str = "pstable"
    w: float | None = None
    mc_trials: int = 100_000

    def resolved(self, dim: int) -> "SannParams":
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")
        if not 0 <= self.eta <= 1:
            raise ParameterError(f"eta must be in [0, 1], got {self.eta}")
        if not self.r > 0 or not self.c > 1:
            raise ParameterError(f"need r > 0 and c > 1, got r={self.r}, c={self.c}")
        if self.family not in ("pstable", "srp"):
            raise ParameterError(f"unknown family {self.family!r}")
        out = SannParams(**asdict(self))
        if out.family == "pstable" and out.w is None:
            out.w = out.r
        if out.p1 is None or out.p2 is None:
            out.p1, out.p2 = collision_probs(out, dim)
        if out.k is None or out.L is None:
            _, k, L = derive_params(max(2, out.n), out.p1, out.p2)
            out.k = out.k or k
            out.L = out.L or L
        if out.k < 1 or out.L < 1:
            raise ParameterError("k and L must be >= 1")
        return out

    @property
    def rho(self) -> float:
        return math.log(1 / self.p1) / math.log(1 / self.p2)


def collision_probs(params: SannParams, dim: int) -> tuple[float, float]:
    """Base collision probabilities at distances ``r`` and ``c*r``."""
    if params.family == "srp":
        if params.c * params.r >= math.pi:
            raise ParameterError("angular radius c*r must be below pi")
        return 1 - params.r / math.pi, 1 - params.c * params.r / math.pi
    spec = FamilySpec("pstable", 1, params.w or params.r, None)
    seed = derive_seed(params.seed, 0xC011)
    p1 = estimate_collision_prob(spec, params.r, dim, params.mc_trials, seed)
    p2 = estimate_collision_prob(spec, params.c * params.r, dim, params.mc_trials, seed + 1)
    return p1, p2


@dataclass
class QueryOutcome:
    result: tuple[int, float] | None
    candidates_examined: int
    candidates: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64), repr=False)

    @property
    def id(self) -> int | None:
        return None if self.result is None else self.result[0]

    @property
    def distance(self) -> float | None:
        return None if self.result is None else self.result[1]

    def same_as(self, other: "QueryOutcome") -> bool:
        return (
            self.result == other.result
            and self.candidates_examined == other.candidates_examined
            and np.array_equal(self.candidates, other.candidates)
        )


class _BucketIndex:
    """Multimap ``(table, key) -> slots``, with table folded into the key."""

    def __init__(self, tables: int):
        self.tables = tables
        self.keys = np.empty(0, dtype=np.uint64)
        self.slots = np.empty(0, dtype=np.int64)
        self.pending: list[tuple[np.ndarray, np.ndarray]] = []
        self.buffer: dict[int, list[int]] = {}
        self.buffered = 0

    def add(self, keys: np.ndarray, slot: int):
        buf = self.buffer
        for key in keys.tolist():
            bucket = buf.get(key)
            if bucket is None:
                buf[key] = [slot]
            else:
                bucket.append(slot)
        self.buffered += len(keys)
        if self.buffered > max(1 << 16, len(self.keys) // 2):
            self.compact()

    def add_many(self, keys: np.ndarray, slots: np.ndarray):
        # keys (m, L), slots (m,)
        self.pending.append((keys.ravel(), np.repeat(slots, keys.shape[1])))

    def compact(self, alive: np.ndarray | None = None):
        parts_k, parts_s = [self.keys], [self.slots]
        for k, s in self.pending:
            parts_k.append(k)
            parts_s.append(s)
        if self.buffer:
            bk = np.fromiter(
                (key for key, b in self.buffer.items() for _ in b), dtype=np.uint64, count=self.buffered
            )
            bs = np.fromiter((s for b in self.buffer.values() for s in b), dtype=np.int64, count=self.buffered)
            parts_k.append(bk)
            parts_s.append(bs)
        keys = np.concatenate(parts_k)
        slots = np.concatenate(parts_s)
        if alive is not None and len(slots):
            keep = alive[slots]
            keys, slots = keys[keep], slots[keep]
        order = np.lexsort((slots, keys))
        self.keys, self.slots = keys[order], slots[order]
        self.pending, self.buffer, self.buffered = [], {}, 0

    def lookup(self, qkeys: np.ndarray, alive: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Live ``(table, slot)`` pairs matching ``qkeys``, grouped by table order."""
        if self.pending:
            self.compact()
        L = self.tables
        lo = np.searchsorted(self.keys, qkeys, side="left")
        hi = np.searchsorted(self.keys, qkeys, side="right")
        counts = hi - lo
        total = int(counts.sum())
        if total:
            starts = np.repeat(lo - np.cumsum(counts) + counts, counts)
            slots = self.slots[starts + np.arange(total)]
            tables = np.repeat(np.arange(L), counts)
        else:
            slots = np.empty(0, dtype=np.int64)
            tables = np.empty(0, dtype=np.int64)
        if self.buffer:
            extra_t, extra_s = [], []
            buf = self.buffer
            for j, key in enumerate(qkeys.tolist()):
                b = buf.get(key)
                if b:
                    extra_t.extend([j] * len(b))
                    extra_s.extend(b)
            if extra_s:
                tables = np.concatenate([tables, np.asarray(extra_t, dtype=np.int64)])
                slots = np.concatenate([slots, np.asarray(extra_s, dtype=np.int64)])
                order = np.argsort(tables, kind="stable")
                tables, slots = tables[order], slots[order]
        if len(slots):
            live = alive[slots]
            tables, slots = tables[live], slots[live]
        return tables, slots

    def entries(self) -> int:
        return len(self.keys) + sum(len(k) for k, _ in self.pending) + self.buffered


class SannSketch:
    """Sampled LSH index over a stream of at most ``params.n`` points."""

    def __init__(self, dim: int, params: SannParams):
        if dim < 1:
            raise ParameterError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.params = params.resolved(self.dim)
        p = self.params
        self.sample_rate = float(p.n) ** (-p.eta) if p.eta > 0 else 1.0
        spec = FamilySpec(p.family, p.k, p.w if p.family == "pstable" else 1.0, None)
        self.bank = HashBank(spec, self.dim, p.L, p.seed)
        self.rng = np.random.default_rng(derive_seed(p.seed, _SAMPLER_STREAM))
        self.seen = 0
        self._index = _BucketIndex(p.L)
        self._ids = np.empty(0, dtype=np.int64)
        self._vecs = np.empty((0, self.dim), dtype=np.float32)
        self._alive = np.empty(0, dtype=bool)
        self._nslots = 0
        self._slot_of: dict[int, int] = {}

    # -- storage -----------------------------------------------------------

    def _grow(self, extra: int):
        need = self._nslots + extra
        if need <= len(self._ids):
            return
        cap = max(need, 2 * len(self._ids), 64)
        ids = np.empty(cap, dtype=np.int64)
        vecs = np.empty((cap, self.dim), dtype=np.float32)
        alive = np.zeros(cap, dtype=bool)
        n = self._nslots
        ids[:n], vecs[:n], alive[:n] = self._ids[:n], self._vecs[:n], self._alive[:n]
        self._ids, self._vecs, self._alive = ids, vecs, alive

    def _store(self, ids: np.ndarray, X32: np.ndarray) -> np.ndarray:
        m = len(ids)
        self._grow(m)
        start = self._nslots
        slots = np.arange(start, start + m)
        self._ids[start : start + m] = ids
        self._vecs[start : start + m] = X32
        self._alive[start : start + m] = True
        self._nslots += m
        for i, s in zip(ids.tolist(), slots.tolist()):
            self._slot_of[i] = s
        return slots

    def _check_new(self, ids):
        for i in ids:
            if i in self._slot_of:
                raise UniquenessError(f"point id {i} is already stored")
        if self.seen + len(ids) > self.params.n:
            raise CapacityError(f"stream exceeds declared size n={self.params.n}")

    # -- updates -----------------------------------------------------------

    def insert(self, id: int, x) -> bool:
        """Offer one point; return True if it was sampled into the sketch."""
        X32 = np.asarray(as_matrix(x, self.dim), dtype=np.float32)
        id = int(id)
        self._check_new([id])
        self.seen += 1
        if self.rng.random() >= self.sample_rate:
            return False
        slot = int(self._store(np.array([id], dtype=np.int64), X32)[0])
        self._index.add(self.bank.keys64(X32)[0], slot)
        return True

    def insert_many(self, ids, X) -> np.ndarray:
        """Offer a block of points in stream order; return the retained mask.

        Consumes the sampler exactly as the same sequence of ``insert`` calls.
        """
        ids = np.asarray(ids, dtype=np.int64).ravel()
        X32 = np.asarray(as_matrix(X, self.dim), dtype=np.float32)
        if len(ids) != len(X32):
            raise ShapeError("ids and points differ in length")
        if len(np.unique(ids)) != len(ids):
            raise UniquenessError("duplicate ids within the block")
        self._check_new(ids.tolist())
        self.seen += len(ids)
        keep = self.rng.random(len(ids)) < self.sample_rate
        if keep.any():
            kept = X32[keep]
            slots = self._store(ids[keep], kept)
            self._index.add_many(self._keys(kept), slots)
        return keep

    def _keys(self, X: np.ndarray) -> np.ndarray:
        # hash in chunks so the (points x L*k) projection stays near 64 MB
        step = max(1, (1 << 23) // (self.params.L * self.params.k))
        if len(X) <= step:
            return self.bank.keys64(X)
        return np.concatenate([self.bank.keys64(X[i : i + step]) for i in range(0, len(X), step)])

    def reinsert(self, id: int, x) -> None:
        """Store a point unconditionally, bypassing the sampler.

        Used to restore a previously retained point after a deletion.
        """
        X32 = np.asarray(as_matrix(x, self.dim), dtype=np.float32)
        id = int(id)
        if id in self._slot_of:
            raise UniquenessError(f"point id {id} is already stored")
        slot = int(self._store(np.array([id], dtype=np.int64), X32)[0])
        self._index.add(self.bank.keys64(X32)[0], slot)

    def delete(self, id: int) -> bool:
        slot = self._slot_of.pop(int(id), None)
        if slot is None:
            return False
        self._alive[slot] = False
        return True

    # -- queries -----------------------------------------------------------

    def _distances(self, slots: np.ndarray, q: np.ndarray) -> np.ndarray:
        V = self._vecs[slots].astype(np.float64)
        if self.params.family == "srp":
            nv = np.linalg.norm(V, axis=1)
            nq = np.linalg.norm(q)
            denom = np.where(nv * nq > 0, nv * nq, 1.0)
            return np.arccos(np.clip(V @ q / denom, -1.0, 1.0))
        return np.sqrt(((V - q) ** 2).sum(axis=1))

    def _answer(self, q: np.ndarray, qkeys: np.ndarray) -> QueryOutcome:
        L = self.params.L
        tables, slots = self._index.lookup(qkeys, self._alive)
        if len(slots) == 0:
            return QueryOutcome(None, 0)
        counts = np.bincount(tables, minlength=L)
        cum = np.cumsum(counts)
        hit = np.flatnonzero(cum >= 3 * L)
        if len(hit):
            examined = int(cum[hit[0]])
            slots = slots[:examined]
        else:
            examined = len(slots)
        uniq = np.unique(slots)
        ids = self._ids[uniq]
        order = np.argsort(ids, kind="stable")
        uniq, ids = uniq[order], ids[order]
        dist = self._distances(uniq, q)
        best = int(np.argmin(dist))
        limit = self.params.c * self.params.r
        result = (int(ids[best]), float(dist[best])) if dist[best] <= limit else None
        return QueryOutcome(result, examined, ids)

    def query(self, q) -> QueryOutcome:
        Q = np.asarray(as_matrix(q, self.dim), dtype=np.float32)
        return self._answer(Q[0].astype(np.float64), self.bank.keys64(Q)[0])

    def query_batch(self, Q, workers: int = 1) -> list[QueryOutcome]:
        """Answer each query independently; identical to calling ``query`` per row."""
        if len(Q) == 0:
            return []
        Q32 = np.asarray(as_matrix(Q, self.dim), dtype=np.float32)
        keys = self.bank.keys64(Q32)
        if self._index.pending:
            self._index.compact()
        Q64 = Q32.astype(np.float64)
        if workers <= 1:
            return [self._answer(Q64[i], keys[i]) for i in range(len(Q32))]
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda i: self._answer(Q64[i], keys[i]), range(len(Q32))))

    # -- accounting --------------------------------------------------------

    def stored_count(self) -> int:
        return len(self._slot_of)

    def __contains__(self, id) -> bool:
        return int(id) in self._slot_of

    def stored_ids(self) -> np.ndarray:
        return np.fromiter(self._slot_of.keys(), dtype=np.int64, count=len(self._slot_of))

    def stored_points(self) -> tuple[np.ndarray, np.ndarray]:
        slots = np.fromiter(self._slot_of.values(), dtype=np.int64, count=len(self._slot_of))
        return self._ids[slots], self._vecs[slots]

    def bucket(self, table: int, key: int) -> list[int]:
        """Ids stored in bucket ``key`` of ``table``, in no particular order."""
        qkeys = np.zeros(self.params.L, dtype=np.uint64)
        qkeys[:] = np.uint64(key) ^ np.uint64(1)  # a value guaranteed != key
        qkeys[table] = np.uint64(key)
        tables, slots = self._index.lookup(qkeys, self._alive)
        return self._ids[slots[tables == table]].tolist()

    def memory_report(self) -> dict:
        stored = self.stored_count()
        entries = self.params.L * stored
        return {
            "points_stored": stored,
            "bucket_entries": entries,
            "bytes_estimate": 4 * self.dim * stored + 8 * entries,
        }

    # -- serialization -----------------------------------------------------

    _MAGIC = b"SANN"
    _VERSION = 1

    def to_bytes(self) -> bytes:
        """Self-describing snapshot; ``from_bytes(b).to_bytes() == b``."""
        self._index.compact(self._alive)
        live = np.fromiter(self._slot_of.values(), dtype=np.int64, count=len(self._slot_of))
        live.sort()
        remap = np.full(max(self._nslots, 1), -1, dtype=np.int64)
        remap[live] = np.arange(len(live))
        meta = {
            "dim": self.dim,
            "params": asdict(self.params),
            "seen": self.seen,
            "rng": self.rng.bit_generator.state,
        }
        out = io.BytesIO()
        head = json.dumps(meta, sort_keys=True).encode()
        out.write(self._MAGIC + struct.pack("<HI", self._VERSION, len(head)) + head)
        out.write(struct.pack("<QQ", len(live), len(self._index.keys)))
        out.write(self._ids[live].astype("<i8").tobytes())
        out.write(self._vecs[live].astype("<f4").tobytes())
        out.write(self._index.keys.astype("<u8").tobytes())
        out.write(remap[self._index.slots].astype("<i8").tobytes())
        return out.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SannSketch":
        if blob[:4] != cls._MAGIC:
            raise ValueError("not an S-ANN snapshot")
        version, hlen = struct.unpack_from("<HI", blob, 4)
        if version != cls._VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        pos = 10
        meta = json.loads(blob[pos : pos + hlen])
        pos += hlen
        n_live, n_entries = struct.unpack_from("<QQ", blob, pos)
        pos += 16
        dim = meta["dim"]

        def take(dtype, count):
            nonlocal pos
            arr = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
            pos += arr.nbytes
            return arr

        s = cls(dim, SannParams(**meta["params"]))
        s.rng.bit_generator.state = meta["rng"]
        s.seen = meta["seen"]
        ids = take("<i8", n_live).astype(np.int64)
        vecs = take("<f4", n_live * dim).reshape(n_live, dim).astype(np.float32)
        s._store(ids, vecs)
        s._index.keys = take("<u8", n_entries).astype(np.uint64)
        s._index.slots = take("<i8", n_entries).astype(np.int64)
        return s


def sann_new(dim: int, params: SannParams) -> SannSketch:
    return SannSketch(dim, params)
