"""Locality-sensitive hash families.

Two families are provided:

* ``SrpFamily``: signed random projections (angular LSH). Bit ``j`` of a
  bucket id is ``[hyperplane_j . x >= 0]``, so ids live in ``[0, 2**p)``.
* ``PStableFamily``: Gaussian p-stable hashes ``floor((a.x + b) / w)``.
  Each base value is range-bounded by a 64-bit mix modulo ``W`` and the
  bounded values are packed base-``W``, so ids live in ``[0, W**count)``.
  With ``W=None`` the family is unbounded and ids are 64-bit keys.

Every family can also emit 64-bit *keys*: a hashed digest of the raw,
unbounded base values. Hash tables that do not need a bounded range
(the S-ANN tables) use these.

``HashBank`` stacks many independent families so that one matrix product
hashes a point under every row at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DomainError, ParameterError, ShapeError

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MAX_ID = 1 << 63


def splitmix64(x: int) -> int:
    """One step of the splitmix64 generator, on Python ints."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Seed for row ``index`` of a structure whose root seed is ``seed``.

    The root is mixed before the index is added, so structures with nearby
    root seeds do not share rows.
    """
    return splitmix64((splitmix64(int(seed) & MASK64) + int(index)) & MASK64)


def mix64(values: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over a uint64 array. ``mix64(0) == 0``."""
    z = np.asarray(values, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def as_matrix(X, dim: int | None = None) -> np.ndarray:
    """Validate a point or a batch of points and return a 2-D float64 array."""
    try:
        A = np.asarray(X, dtype=np.float64)
    except ValueError:
        raise ShapeError("points have inconsistent dimensions") from None
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2 or A.shape[1] < 1:
        raise ShapeError(f"expected points of shape (n, dim), got {np.shape(X)}")
    if dim is not None and A.shape[1] != dim:
        raise ShapeError(f"point dimension {A.shape[1]} != family dimension {dim}")
    if not np.all(np.isfinite(A)):
        raise ShapeError("points must have finite coordinates")
    return A


def _key_weights(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.integers(0, 1 << 63, size=count, dtype=np.uint64) * np.uint64(2) + np.uint64(1)


def _fold_keys(raw: np.ndarray, weights: np.ndarray, salt: np.ndarray) -> np.ndarray:
    # raw (..., k) int64; weights (..., k) uint64; multiplicative hash mod 2**64
    with np.errstate(over="ignore"):
        acc = (raw.astype(np.uint64) * weights).sum(axis=-1, dtype=np.uint64) + salt
    return mix64(acc)


def _rehash(raw: np.ndarray, salts: np.ndarray, W: int) -> np.ndarray:
    """Salted 64-bit mix of raw base values, reduced modulo ``W``."""
    with np.errstate(over="ignore"):
        mixed = mix64(raw.view(np.uint64) + salts)
    return (mixed % np.uint64(W)).astype(np.int64)


class SrpFamily:
    """Concatenation of ``p`` signed-random-projection bits."""

    kind = "srp"

    def __init__(self, dim: int, p: int, seed: int = 0):
        if dim < 1:
            raise ParameterError(f"dim must be >= 1, got {dim}")
        if not 1 <= p <= 62:
            raise ParameterError(f"p must be in [1, 62], got {p}")
        self.dim = int(dim)
        self.p = int(p)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.hyperplanes = rng.standard_normal((self.p, self.dim))
        self.key_weights = _key_weights(rng, self.p)
        self.key_salt = np.uint64(int(rng.integers(0, 1 << 63)))
        self._powers = np.left_shift(np.int64(1), np.arange(self.p, dtype=np.int64))

    @property
    def count(self) -> int:
        return self.p

    @property
    def range(self) -> int:
        return 1 << self.p

    def base_values(self, X) -> np.ndarray:
        A = as_matrix(X, self.dim)
        return (A @ self.hyperplanes.T >= 0).astype(np.int64)

    def hash_many(self, X) -> np.ndarray:
        return self.base_values(X) @ self._powers

    def keys64(self, X) -> np.ndarray:
        return _fold_keys(self.base_values(X), self.key_weights, self.key_salt)

    def hash(self, x) -> int:
        return int(self.hash_many(x)[0])


class PStableFamily:
    """Concatenation of ``count`` Gaussian p-stable hashes of width ``w``."""

    kind = "pstable"

    def __init__(self, dim: int, count: int, w: float, W: int | None = 100, seed: int = 0):
        _check_pstable(dim, count, w, W)
        self.dim = int(dim)
        self.count = int(count)
        self.w = float(w)
        self.W = None if W is None else int(W)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.projections = rng.standard_normal((self.count, self.dim))
        self.offsets = rng.uniform(0.0, self.w, size=self.count)
        self.key_weights = _key_weights(rng, self.count)
        self.key_salt = np.uint64(int(rng.integers(0, 1 << 63)))
        self.rehash_salts = rng.integers(0, 1 << 63, size=self.count).astype(np.uint64)
        self._finish()

    @classmethod
    def from_arrays(cls, projections, offsets, w: float, W: int | None = 100, seed: int = 0, rehash_salts=None):
        """Build a family with explicit projection vectors and offsets.

        Rehash salts default to zero, so a raw value of 0 maps to bucket 0.
        """
        projections = np.atleast_2d(np.asarray(projections, dtype=np.float64))
        offsets = np.atleast_1d(np.asarray(offsets, dtype=np.float64))
        count, dim = projections.shape
        if offsets.shape != (count,):
            raise ParameterError("need one offset per projection")
        self = cls.__new__(cls)
        _check_pstable(dim, count, w, W)
        self.dim, self.count, self.w = dim, count, float(w)
        self.W = None if W is None else int(W)
        self.seed = int(seed)
        self.projections, self.offsets = projections, offsets
        rng = np.random.default_rng(self.seed)
        self.key_weights = _key_weights(rng, count)
        self.key_salt = np.uint64(int(rng.integers(0, 1 << 63)))
        if rehash_salts is None:
            rehash_salts = np.zeros(count)
        self.rehash_salts = np.asarray(rehash_salts).astype(np.uint64)
        self._finish()
        return self

    def _finish(self):
        if self.W is not None:
            self._powers = np.array([self.W**j for j in range(self.count)], dtype=np.int64)

    @property
    def range(self) -> int:
        return (1 << 64) if self.W is None else self.W**self.count

    def base_values(self, X) -> np.ndarray:
        """Raw ``floor((a.x + b) / w)`` values, before range bounding."""
        A = as_matrix(X, self.dim)
        return np.floor((A @ self.projections.T + self.offsets) / self.w).astype(np.int64)

    def bounded_values(self, X) -> np.ndarray:
        if self.W is None:
            raise ParameterError("family is unbounded (W=None)")
        raw = self.base_values(X)
        return _rehash(raw, self.rehash_salts, self.W)

    def keys64(self, X) -> np.ndarray:
        return _fold_keys(self.base_values(X), self.key_weights, self.key_salt)

    def hash_many(self, X) -> np.ndarray:
        if self.W is None:
            return self.keys64(X)
        return self.bounded_values(X) @ self._powers

    def hash(self, x) -> int:
        return int(self.hash_many(x)[0])


def _check_pstable(dim, count, w, W):
    if dim < 1 or count < 1:
        raise ParameterError(f"dim and count must be >= 1, got dim={dim} count={count}")
    if not w > 0:
        raise ParameterError(f"bucket width must be positive, got {w}")
    if W is not None:
        if W < 2:
            raise ParameterError(f"range bound W must be >= 2, got {W}")
        if W**count >= _MAX_ID:
            raise ParameterError(f"W**count = {W}**{count} does not fit in a signed 64-bit id")


def srp_family_new(dim: int, p: int, seed: int) -> SrpFamily:
    return SrpFamily(dim, p, seed)


def pstable_family_new(dim: int, count: int, w: float, W: int, seed: int) -> PStableFamily:
    return PStableFamily(dim, count, w, W, seed)


def hash_point(family, x) -> int:
    return family.hash(x)


@dataclass(frozen=True)
class FamilySpec:
    """Recipe for building independent hash functions of one family.

    ``concat`` is the number of base hashes per function (``p`` for SRP,
    ``count`` for p-stable). ``w`` and ``W`` only matter for p-stable.
    """

    kind: str = "srp"
    concat: int = 1
    w: float = 1.0
    W: int | None = 100

    def __post_init__(self):
        if self.kind not in ("srp", "pstable"):
            raise ParameterError(f"unknown family kind {self.kind!r}")
        if self.concat < 1:
            raise ParameterError("concat must be >= 1")

    @property
    def row_range(self) -> int:
        if self.kind == "srp":
            return 1 << self.concat
        return (1 << 64) if self.W is None else self.W**self.concat

    def make(self, dim: int, seed: int):
        if self.kind == "srp":
            return SrpFamily(dim, self.concat, seed)
        return PStableFamily(dim, self.concat, self.w, self.W, seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "concat": self.concat, "w": self.w, "W": self.W}


class HashBank:
    """``rows`` independent functions of one family evaluated together.

    Row ``i`` is exactly ``spec.make(dim, derive_seed(seed, i))``.
    """

    def __init__(self, spec: FamilySpec, dim: int, rows: int, seed: int = 0):
        if rows < 1:
            raise ParameterError(f"rows must be >= 1, got {rows}")
        self.spec, self.dim, self.rows, self.seed = spec, int(dim), int(rows), int(seed)
        self.families = [spec.make(dim, derive_seed(seed, i)) for i in range(rows)]
        k = spec.concat
        if spec.kind == "srp":
            self._matrix = np.vstack([f.hyperplanes for f in self.families])
            self._offsets = None
        else:
            self._matrix = np.vstack([f.projections for f in self.families])
            self._offsets = np.concatenate([f.offsets for f in self.families])
        self._weights = np.stack([f.key_weights for f in self.families])
        self._salts = np.array([f.key_salt for f in self.families], dtype=np.uint64)
        if spec.kind == "pstable":
            self._rehash_salts = np.stack([f.rehash_salts for f in self.families])
        self._k = k

    def base_values(self, X) -> np.ndarray:
        """Raw base values, shape ``(n, rows, concat)``."""
        A = as_matrix(X, self.dim)
        proj = A @ self._matrix.T
        if self._offsets is None:
            raw = (proj >= 0).astype(np.int64)
        else:
            raw = np.floor((proj + self._offsets) / self.spec.w).astype(np.int64)
        return raw.reshape(A.shape[0], self.rows, self._k)

    def bucket_ids(self, X) -> np.ndarray:
        """Range-bounded bucket ids, shape ``(n, rows)``."""
        raw = self.base_values(X)
        if self.spec.kind == "srp":
            powers = np.left_shift(np.int64(1), np.arange(self._k, dtype=np.int64))
            return raw @ powers
        if self.spec.W is None:
            return _fold_keys(raw, self._weights, self._salts)
        W = self.spec.W
        bounded = _rehash(raw, self._rehash_salts, W)
        return bounded @ np.array([W**j for j in range(self._k)], dtype=np.int64)

    def keys64(self, X) -> np.ndarray:
        """Unbounded 64-bit keys, shape ``(n, rows)``."""
        return _fold_keys(self.base_values(X), self._weights, self._salts)


def srp_collision_prob(x, y, p: int = 1) -> float:
    """``(1 - angle(x, y) / pi) ** p``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise DomainError("collision probability undefined for a zero vector")
    cos = np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0)
    return float((1.0 - math.acos(cos) / math.pi) ** p)


def srp_collision_probs(X, q, p: int = 1) -> np.ndarray:
    """Vectorized ``srp_collision_prob`` of every row of ``X`` against ``q``."""
    X = np.asarray(X, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    nx = np.linalg.norm(X, axis=1)
    nq = np.linalg.norm(q)
    if nq == 0 or np.any(nx == 0):
        raise DomainError("collision probability undefined for a zero vector")
    cos = np.clip(X @ q / (nx * nq), -1.0, 1.0)
    return (1.0 - np.arccos(cos) / np.pi) ** p


def pstable_collision_prob(dist, w: float) -> np.ndarray | float:
    """Closed-form collision probability of one Gaussian p-stable hash.

    For ``u = dist / w > 0``:
    ``1 - 2 Phi(-1/u) - 2u / sqrt(2 pi) * (1 - exp(-1 / (2 u^2)))``.
    """
    d = np.asarray(dist, dtype=np.float64)
    u = d / w
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(u > 0, 1.0 / np.where(u > 0, u, 1.0), np.inf)
        val = 1 - 2 * norm.cdf(-inv) - 2 * u / math.sqrt(2 * math.pi) * (1 - np.exp(-0.5 * inv**2))
    val = np.where(u > 0, val, 1.0)
    return float(val) if np.ndim(val) == 0 else val


def estimate_collision_prob(spec: FamilySpec, dist: float, dim: int, trials: int, seed: int = 0) -> float:
    """Monte Carlo collision rate of a single freshly drawn base hash.

    For p-stable, ``dist`` is a Euclidean distance and the pair is a random
    point plus a random unit direction scaled by ``dist``. Range bounding is
    not applied. For SRP, ``dist`` is the angle in radians between two unit
    vectors.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if dist < 0:
        raise ParameterError("dist must be non-negative")
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    chunk = max(1, (1 << 21) // dim)
    while done < trials:
        m = min(chunk, trials - done)
        u = _unit_rows(rng, m, dim)
        a = rng.standard_normal((m, dim))
        if spec.kind == "srp":
            if dim < 2 and dist not in (0.0, math.pi):
                raise ParameterError("angles other than 0 or pi need dim >= 2")
            if dim < 2:
                y = math.cos(dist) * u
            else:
                v = rng.standard_normal((m, dim))
                v -= (v * u).sum(axis=1, keepdims=True) * u
                v /= np.linalg.norm(v, axis=1, keepdims=True)
                y = math.cos(dist) * u + math.sin(dist) * v
            hits += int(np.count_nonzero(((a * u).sum(1) >= 0) == ((a * y).sum(1) >= 0)))
        else:
            x = rng.standard_normal((m, dim))
            y = x + dist * u
            b = rng.uniform(0.0, spec.w, size=m)
            hx = np.floor(((a * x).sum(1) + b) / spec.w)
            hy = np.floor(((a * y).sum(1) + b) / spec.w)
            hits += int(np.count_nonzero(hx == hy))
        done += m
    return hits / trials


def _unit_rows(rng, m, dim):
    u = rng.standard_normal((m, dim))
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return u / norms
