import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from streamsketch.eh import space_bound
from streamsketch.errors import ParameterError, ShapeError
from streamsketch.lsh import FamilySpec
from streamsketch.oracle import CounterTwin, exact_kde
from streamsketch.swakde import RaceGrid, SwakdeParams, find_optimal_rows, row_threshold


def grid_pair(dim=4, rows=6, window=20, eps=0.1, family=None, seed=0, batch=False):
    p = SwakdeParams(rows, window, eps, family or FamilySpec("srp", 2), seed, batch)
    return RaceGrid(dim, p), CounterTwin(dim, p)


def test_construction_examples():
    g = RaceGrid(5, SwakdeParams(4, 100, family=FamilySpec("srp", 3)))
    assert g.params.family.row_range == 8
    assert g.cells_allocated() == 0 and g.clock == 0
    a, b = grid_pair(seed=3)[0], grid_pair(seed=3)[0]
    X = np.random.default_rng(0).standard_normal((10, 4))
    assert np.array_equal(a.bank.bucket_ids(X), b.bank.bucket_ids(X))
    g.update(np.ones(5))
    assert all(h.k == 10 for row in g.cells for h in row.values())


def test_bad_params():
    for kw in [dict(rows=0, window=5), dict(rows=1, window=0), dict(rows=1, window=5, eps_prime=0)]:
        with pytest.raises(ParameterError):
            SwakdeParams(**kw)


def test_update_examples():
    g, _ = grid_pair(rows=5)
    g.update(np.ones(4))
    assert g.cells_allocated() == 5
    assert all(h.total == 1 for row in g.cells for h in row.values())
    with pytest.raises(ShapeError):
        g.update(np.ones(3))


def test_identical_points_every_row_sees_N():
    g, _ = grid_pair(rows=8, window=64, family=FamilySpec("srp", 1))
    x = np.array([1.0, -2.0, 0.5, 3.0])
    for _ in range(64):
        g.update(x)
    vals = g.query(x).per_row
    assert np.all(np.abs(vals - 64) <= 6.4)


def test_old_elements_expire():
    g, _ = grid_pair(window=5)
    x = np.ones(4)
    g.update(x)
    for _ in range(5):
        g.update(-x)
    assert g.query(x).value == 0


def test_query_examples():
    g, _ = grid_pair()
    assert g.query(np.ones(4)).value == 0
    x = np.array([0.3, -0.2, 1.0, 0.0])
    g.update(x)
    est = g.query(x)
    assert est.value == 1.0 and np.all(est.per_row == 1)


def test_batch_examples():
    g, _ = grid_pair(rows=4, batch=True)
    x = np.array([1.0, 2.0, 3.0, 4.0])
    g.update_batch(np.tile(x, (7, 1)))
    assert g.cells_allocated() == 4
    assert all(h.total == 7 for row in g.cells for h in row.values())
    mixed = np.random.default_rng(0).standard_normal((9, 4))
    g.update_batch(mixed)
    for row in g.cells:
        assert sum(h.total for h in row.values()) == 16
    with pytest.raises(ParameterError):
        g.update_batch(np.zeros((0, 4)))
    with pytest.raises(ParameterError):
        g.update(x)
    single, _ = grid_pair(rows=4)
    with pytest.raises(ParameterError):
        single.update_batch([x])


def test_batch_of_one_matches_update():
    X = np.random.default_rng(1).standard_normal((60, 4))
    a, _ = grid_pair(batch=True, seed=4)
    b, _ = grid_pair(seed=4)
    for x in X:
        a.update_batch(x[None])
        b.update(x)
    Q = X[:10] + 0.1
    assert np.array_equal(a.query_many(Q), b.query_many(Q))


@given(
    st.integers(0, 10_000),
    st.sampled_from([0.5, 0.2, 0.1]),
    st.integers(1, 40),
    st.sampled_from([FamilySpec("srp", 1), FamilySpec("srp", 3), FamilySpec("pstable", 1, 1.5, 10)]),
)
def test_rowwise_sandwich(seed, eps, window, family):
    rng = np.random.default_rng(seed)
    g, t = grid_pair(rows=5, window=window, eps=eps, family=family, seed=seed)
    centers = rng.standard_normal((3, 4))
    X = centers[rng.integers(0, 3, 150)] + 0.3 * rng.standard_normal((150, 4))
    for i, x in enumerate(X):
        g.update(x)
        t.update(x)
        if i % 10 == 0:
            q = X[rng.integers(0, i + 1)]
            Y, T = g.row_values(q), t.row_values(q)
            assert np.all(np.abs(Y - T) <= eps * T + 1e-9)
            assert abs(Y.mean() - T.mean()) <= eps * T.mean() + 1e-9


@given(st.integers(0, 10_000), st.integers(5, 30))
def test_window_ignores_old_prefix(seed, window):
    rng = np.random.default_rng(seed)
    tail = rng.standard_normal((window, 4))
    junk = rng.standard_normal((int(rng.integers(window, 3 * window)), 4))
    a, ta = grid_pair(window=window, seed=1)
    b, tb = grid_pair(window=window, seed=1)
    for x in tail:
        a.update(x)
        ta.update(x)
    for x in np.vstack([junk, tail]):
        b.update(x)
        tb.update(x)
    Q = tail[:5] + 0.2
    assert np.array_equal(ta.query_many(Q), tb.query_many(Q))
    T = ta.query_many(Q)
    for grid in (a, b):
        assert np.all(np.abs(grid.query_many(Q) - T) <= 0.1 * T + 1e-9)


def test_batch_mode_sandwich():
    rng = np.random.default_rng(5)
    g, t = grid_pair(rows=6, window=10, batch=True, seed=2)
    for _ in range(80):
        B = rng.standard_normal((int(rng.integers(1, 40)), 4))
        g.update_batch(B)
        t.update_batch(B)
        q = B[0]
        Y, T = g.row_values(q), t.row_values(q)
        assert np.all(np.abs(Y - T) <= 0.1 * T + 1e-9)
    rep = g.space_report()
    assert rep["total_eh_buckets"] <= rep["allocated_bound"]


def test_space_report():
    g, _ = grid_pair(rows=3, window=100)
    rep = g.space_report()
    assert rep["cells_allocated"] == 0 and rep["total_eh_buckets"] == 0
    X = np.random.default_rng(0).standard_normal((500, 4))
    g.update_many(X)
    rep = g.space_report()
    per_eh = space_bound(10, 100)
    assert rep["theoretical_bound"] == pytest.approx(3 * 4 * per_eh)
    assert rep["total_eh_buckets"] <= rep["allocated_bound"] <= rep["theoretical_bound"]
    # eps' = sqrt(1 + eps) - 1 links the EH error to the kernel error
    assert math.sqrt(1 + 0.21) - 1 == pytest.approx(0.1)


def test_snapshot_round_trip():
    g, _ = grid_pair(family=FamilySpec("pstable", 2, 1.0, 20))
    X = np.random.default_rng(2).standard_normal((200, 4))
    g.update_many(X)
    blob = g.to_bytes()
    h = RaceGrid.from_bytes(blob)
    assert h.to_bytes() == blob
    Q = X[-20:]
    assert np.array_equal(h.query_many(Q), g.query_many(Q))
    # queries expire cells lazily, so take a fresh reference blob
    current = g.to_bytes()
    snap = g.snapshot()
    g.update(X[0])
    assert snap.to_bytes() == current


def test_update_many_matches_update():
    X = np.random.default_rng(3).standard_normal((50, 4))
    a, _ = grid_pair(seed=9)
    b, _ = grid_pair(seed=9)
    a.update_many(X)
    for x in X:
        b.update(x)
    assert a.to_bytes() == b.to_bytes()


# -- row search ----------------------------------------------------------------------


def test_row_search_identical_points():
    X = np.tile([[1.0, 2.0, 3.0]], (40, 1))
    res = find_optimal_rows(X, X[:5], 0.1, 0.1, FamilySpec("srp"))
    assert res.rows == 8 and res.iterations == 4
    assert res.threshold == pytest.approx(2 / 1.21 * math.log(20))
    assert res.threshold == pytest.approx(4.95, abs=0.01)


def test_row_search_monotone_in_delta_and_bounded_iterations():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 6))
    Q = X[rng.choice(300, 20)] + 0.1
    prev = None
    for delta in (0.01, 0.1, 0.5, 0.9):
        res = find_optimal_rows(X, Q, 0.1, delta, FamilySpec("srp"), seed=1)
        assert res.iterations <= math.ceil(math.log2(res.rows)) + 1
        assert res.rows > res.threshold
        if prev is not None:
            assert res.rows <= prev
        prev = res.rows


def test_row_search_excludes_zero_kernel_queries():
    X = np.tile([[1.0, 0.0]], (10, 1))
    Q = np.array([[1.0, 0.0], [500.0, 500.0]])
    res = find_optimal_rows(X, Q, 0.1, 0.1, FamilySpec("pstable", 1, 0.5, None))
    assert res.excluded_queries == 1 and res.rows == 8


def test_row_search_errors():
    X = np.ones((5, 2))
    with pytest.raises(ParameterError):
        find_optimal_rows(X, X, 0.1, 1.0)
    with pytest.raises(ParameterError):
        find_optimal_rows(np.zeros((0, 2)), X, 0.1, 0.1)


def test_row_threshold_formula():
    assert row_threshold(3.0, 1.5, 0.0, 0.5) == pytest.approx(2 * 4 * math.log(4))


def test_twin_unbiased_small():
    rng = np.random.default_rng(7)
    W = rng.standard_normal((30, 5))
    q = rng.standard_normal(5)
    fam = FamilySpec("srp", 2)
    vals = []
    for seed in range(150):
        t = CounterTwin(5, SwakdeParams(1, 30, family=fam, seed=seed))
        t.update_many(W)
        vals.append(t.row_values(q)[0])
    vals = np.array(vals)
    K = exact_kde(W, q, fam)
    assert abs(vals.mean() - K) <= 4 * vals.std(ddof=1) / math.sqrt(len(vals))
