"""Ground truth, synthetic streams, failure bounds and the JL baseline."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, ParameterError
from .lsh import FamilySpec, as_matrix, pstable_collision_prob, srp_collision_probs
from .swakde import SwakdeParams, _Grid

SUCCESS = "SUCCESS"
FAIL = "FAIL"


# -- exact nearest neighbor ----------------------------------------------------


def distances(X, q, metric: str = "euclidean") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[1] != q.shape[0]:
        raise ParameterError("points and query have different dimensions")
    if metric == "angular":
        nx = np.linalg.norm(X, axis=1)
        nq = np.linalg.norm(q)
        denom = np.where(nx * nq > 0, nx * nq, 1.0)
        return np.arccos(np.clip(X @ q / denom, -1.0, 1.0))
    return np.sqrt(((X - q) ** 2).sum(axis=1))


def exact_nn(ids, X, q, metric: str = "euclidean") -> tuple[int, float] | None:
    """Linear-scan nearest neighbor; ties go to the smallest id."""
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        return None
    d = distances(X, q, metric)
    best = d.min()
    return int(ids[d == best].min()), float(best)


def knn_ids(X, Q, k: int) -> np.ndarray:
    """Row indices of the ``k`` nearest points to each query (Euclidean)."""
    X = np.asarray(X, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    k = min(k, len(X))
    sq = (X**2).sum(1)
    out = np.empty((len(Q), k), dtype=np.int64)
    for s in range(0, len(Q), 256):
        D = sq[None, :] - 2 * Q[s : s + 256] @ X.T
        part = np.argpartition(D, k - 1, axis=1)[:, :k]
        order = np.take_along_axis(D, part, 1).argsort(axis=1, kind="stable")
        out[s : s + 256] = np.take_along_axis(part, order, 1)
    return out


def classify_crann(q, outcome, X, r: float, c: float, metric: str = "euclidean") -> str:
    """Label a query outcome against the (c, r) contract.

    A query with no point within ``r`` succeeds whatever is returned.
    Otherwise it succeeds iff a point within ``c * r`` was returned.
    """
    X = np.asarray(X)
    if len(X) == 0 or distances(X, q, metric).min() > r:
        return SUCCESS
    result = getattr(outcome, "result", outcome)
    if result is not None and result[1] <= c * r:
        return SUCCESS
    return FAIL


# -- exact counter twin ---------------------------------------------------------


class _Counter:
    __slots__ = ("arrivals", "total")

    def __init__(self):
        self.arrivals = deque()
        self.total = 0


class CounterTwin(_Grid):
    """The RACE grid with exact windowed counters in place of histograms.

    Built from the same parameters, it hashes exactly like the ``RaceGrid``
    it mirrors, so its row values are the true counts the sketch estimates.
    """

    def _new_cell(self):
        return _Counter()

    def _add(self, cell, t, amount):
        cell.arrivals.append((t, amount))
        cell.total += amount

    def _count(self, cell, now):
        cutoff = now - self.params.window
        arr = cell.arrivals
        while arr and arr[0][0] <= cutoff:
            cell.total -= arr.popleft()[1]
        return float(cell.total)


def counter_race(dim: int, params: SwakdeParams) -> CounterTwin:
    return CounterTwin(dim, params)


# -- kernel values ----------------------------------------------------------------


def collision_kernel(X, q, family: FamilySpec) -> np.ndarray:
    """Per-point probability that ``x`` and ``q`` share a cell of one grid row."""
    X = as_matrix(X)
    q = np.asarray(q, dtype=np.float64).ravel()
    if family.kind == "srp":
        return srp_collision_probs(X, q, family.concat)
    base = np.asarray(pstable_collision_prob(distances(X, q), family.w), dtype=np.float64)
    if family.W is not None:
        # Distinct raw values still meet after reduction mod W about 1/W of the time.
        base = base + (1 - base) / family.W
    return base**family.concat


def exact_kde(window, q, family: FamilySpec, *, trials: int | None = None, seed: int = 0) -> float:
    """``sum_x k(x, q) ** p`` over the window.

    SRP uses the closed form. p-stable uses the closed form by default; with
    ``trials`` set it averages that many independently drawn row functions.
    """
    W = np.asarray(window, dtype=np.float64)
    if W.size == 0:
        return 0.0
    W = as_matrix(W)
    if family.kind == "srp" or trials is None:
        return float(collision_kernel(W, q, family).sum())
    from .lsh import HashBank

    bank = HashBank(family, W.shape[1], trials, seed)
    hx = bank.bucket_ids(W)
    hq = bank.bucket_ids(np.asarray(q, dtype=np.float64))[0]
    return float((hx == hq).sum() / trials)


# -- synthetic data ---------------------------------------------------------------


def ball_volume(dim: int, r: float) -> float:
    return math.exp(dim / 2 * math.log(math.pi) - gammaln(dim / 2 + 1) + dim * math.log(r))


@dataclass
class LabeledStream:
    ids: np.ndarray
    points: np.ndarray
    queries: np.ndarray
    planted: np.ndarray
    m: float
    side: float
    dim: int
    r: float
    intensity: float


def poisson_layout(n: int, dim: int, r: float, m: float) -> tuple[float, float]:
    """Intensity and cube side giving about ``n`` points and mean ``m`` per r-ball."""
    lam = m / ball_volume(dim, r)
    side = (n / lam) ** (1 / dim)
    if side <= 2 * r:
        raise ParameterError(
            f"cube side {side:.3g} leaves no interior at margin r={r}; lower dim or m"
        )
    return lam, side


def gen_poisson_stream(
    dim: int,
    intensity: float,
    side: float,
    r: float,
    n_cap: int,
    seed: int = 0,
    n_queries: int = 1000,
) -> LabeledStream:
    """Homogeneous Poisson points in ``[0, side]^dim`` plus interior queries.

    Queries are uniform in the cube shrunk by ``r`` on every side, so each
    query's r-ball lies inside the region. ``planted[i]`` records whether
    some generated point is within ``r`` of query ``i``.
    """
    if intensity <= 0 or side <= 0 or r <= 0:
        raise ParameterError("intensity, side and r must be positive")
    if side <= 2 * r and n_queries:
        raise ParameterError("side must exceed 2r to place interior queries")
    rng = np.random.default_rng(seed)
    count = min(int(rng.poisson(intensity * side**dim)), int(n_cap))
    X = rng.uniform(0.0, side, size=(count, dim))
    Q = rng.uniform(r, side - r, size=(n_queries, dim))
    planted = np.zeros(n_queries, dtype=bool)
    if count:
        sq = (X**2).sum(1)
        for s in range(0, n_queries, 256):
            B = Q[s : s + 256]
            D = sq[None, :] - 2 * B @ X.T + (B**2).sum(1)[:, None]
            planted[s : s + 256] = D.min(axis=1) <= r * r
    return LabeledStream(
        ids=np.arange(count, dtype=np.int64),
        points=X,
        queries=Q,
        planted=planted,
        m=intensity * ball_volume(dim, r),
        side=side,
        dim=dim,
        r=r,
        intensity=intensity,
    )


def gen_gaussian_mixture_stream(
    dim: int = 200,
    n: int = 10_000,
    components: int = 10,
    seed: int = 0,
    *,
    spread: float = 1.0,
    noise: float = 1.0,
    return_means: bool = False,
):
    """Stream whose consecutive blocks of ``n // components`` points share a Gaussian.

    Means are drawn from ``N(0, spread^2 I)``; each point adds ``N(0, noise^2 I)``.
    The last block absorbs any remainder.
    """
    if components < 1 or n < components:
        raise ParameterError("need 1 <= components <= n")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, spread, size=(components, dim))
    block = n // components
    labels = np.minimum(np.arange(n) // block, components - 1)
    X = means[labels] + rng.normal(0.0, noise, size=(n, dim))
    return (X, means) if return_means else X


# -- failure bounds --------------------------------------------------------------


def poisson_tail(d: float, lam: float) -> float:
    """Chernoff bound ``exp(d - lam + d ln(lam / d))`` on ``P(Poisson(lam) <= d)``."""
    if lam <= 0 or d < 0:
        raise DomainError("need lam > 0 and d >= 0")
    if d > lam:
        raise DomainError(f"tail bound needs d <= lam, got d={d}, lam={lam}")
    if d == 0:
        return math.exp(-lam)
    return math.exp(d - lam + d * math.log(lam / d))


def poisson_thin_mean(m: float, p: float) -> float:
    if not 0 <= p <= 1:
        raise DomainError(f"p must be in [0, 1], got {p}")
    return m * p


def ann_failure_bound(n: int, eta: float, m: float) -> float:
    p = n ** (-eta)
    mp = m * p
    # (e^{mp} + e - 1) / e^{mp+1}, rearranged to avoid overflow for large mp
    return 1 / (3 * n**eta) + 1 / math.e + (math.e - 1) * math.exp(-mp - 1)


def turnstile_failure_bound(n: int, eta: float, m: float, d: float) -> float:
    mp = m * n ** (-eta)
    if d < 0 or d > mp:
        raise DomainError(f"need 0 <= d <= m n^-eta = {mp:.4g}, got d={d}")
    return 1 / (3 * n**eta) + 1 / math.e + poisson_tail(d, mp) * (1 - 1 / math.e)


# -- Johnson-Lindenstrauss baseline ----------------------------------------------


@dataclass
class JlStore:
    matrix: np.ndarray  # (k, dim)
    projected: np.ndarray  # (n, k)
    ids: np.ndarray
    sq_norms: np.ndarray

    @property
    def compression(self) -> float:
        return self.matrix.shape[0] / self.matrix.shape[1]

    def bytes_estimate(self) -> int:
        return 4 * self.projected.size + 8 * len(self.ids)


def jl_build(X, k: int, seed: int = 0, *, ids=None, orthonormalize: bool = False) -> JlStore:
    """Project every point with an ``N(0, 1/k)`` matrix and keep all of them."""
    X = as_matrix(X)
    dim = X.shape[1]
    if not 1 <= k <= dim:
        raise ParameterError(f"target dimension must be in [1, {dim}], got {k}")
    rng = np.random.default_rng(seed)
    M = rng.normal(0.0, 1.0 / math.sqrt(k), size=(k, dim))
    if orthonormalize:
        qmat, _ = np.linalg.qr(M.T)
        M = qmat.T * math.sqrt(dim / k)
    P = (X @ M.T).astype(np.float32)
    ids = np.arange(len(X), dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    return JlStore(M, P, ids, (P**2).sum(1, dtype=np.float32))


def jl_search(store: JlStore, Q, topk: int = 1) -> np.ndarray:
    """Row indices of the ``topk`` closest stored points in projected space.

    The scan runs in float32, the precision the projections are stored at.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    PQ = (Q @ store.matrix.T).astype(np.float32)
    D = store.sq_norms[None, :] - 2 * PQ @ store.projected.T
    topk = min(topk, D.shape[1])
    if topk == 1:
        # first minimum, and the ids are ascending by construction
        return D.argmin(axis=1)[:, None]
    part = np.argpartition(D, topk - 1, axis=1)[:, :topk]
    order = np.take_along_axis(D, part, 1).argsort(axis=1, kind="stable")
    return np.take_along_axis(part, order, 1)


def jl_query(store: JlStore, q, original=None) -> tuple[int, float] | None:
    """Nearest stored point in projected space.

    The distance is recomputed against ``original`` (the unprojected points,
    row-aligned with the store) when given, else reported in projected space.
    """
    if len(store.ids) == 0:
        return None
    q = np.asarray(q, dtype=np.float64).ravel()
    row = int(jl_search(store, q)[0, 0])
    if original is not None:
        dist = float(np.linalg.norm(np.asarray(original[row], dtype=np.float64) - q))
    else:
        dist = float(np.linalg.norm(store.projected[row] - store.matrix @ q))
    return int(store.ids[row]), dist
