import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare, poisson

from streamsketch.errors import DomainError, ParameterError
from streamsketch.lsh import FamilySpec
from streamsketch.oracle import (
    FAIL,
    SUCCESS,
    CounterTwin,
    ann_failure_bound,
    ball_volume,
    classify_crann,
    exact_kde,
    exact_nn,
    gen_gaussian_mixture_stream,
    gen_poisson_stream,
    jl_build,
    jl_query,
    knn_ids,
    poisson_layout,
    poisson_tail,
    poisson_thin_mean,
    turnstile_failure_bound,
)
from streamsketch.sann import QueryOutcome
from streamsketch.swakde import SwakdeParams


def quadratic_nn(ids, X, q):
    best = None
    for i, x in zip(ids, X):
        d = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, q)))
        if best is None or d < best[1] or (d == best[1] and i < best[0]):
            best = (int(i), d)
    return best


def test_exact_nn_examples():
    assert exact_nn([], np.zeros((0, 3)), np.zeros(3)) is None
    X = np.random.default_rng(0).standard_normal((10, 3))
    assert exact_nn(np.arange(10), X, X[4]) == (4, 0.0)


def test_exact_nn_matches_quadratic_scan():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        X = rng.integers(-3, 4, size=(n, 2)).astype(float)  # integer grid forces ties
        ids = rng.permutation(100)[:n]
        q = rng.integers(-3, 4, size=2).astype(float)
        got, ref = exact_nn(ids, X, q), quadratic_nn(ids, X, q)
        assert got[0] == ref[0] and got[1] == pytest.approx(ref[1])


def test_knn_ids_sorted_by_distance():
    rng = np.random.default_rng(2)
    X, Q = rng.standard_normal((300, 5)), rng.standard_normal((7, 5))
    nn = knn_ids(X, Q, 10)
    for q, row in zip(Q, nn):
        d = np.linalg.norm(X - q, axis=1)
        assert set(row) == set(np.argsort(d)[:10])
        assert np.all(np.diff(d[row]) >= -1e-12)


def test_classify_examples():
    X = np.array([[0.0, 0.0], [5.0, 5.0]])
    q = np.array([0.5, 0.0])
    assert classify_crann(np.array([2.5, 2.5]), QueryOutcome(None, 0), X, 1.0, 1.5) == SUCCESS
    assert classify_crann(q, QueryOutcome(None, 0), X, 1.0, 1.5) == FAIL
    assert classify_crann(q, QueryOutcome((9, 1.3), 1), X, 1.0, 1.5) == SUCCESS
    assert classify_crann(q, QueryOutcome((9, 1.6), 1), X, 1.0, 1.5) == FAIL


@given(st.integers(0, 10_000), st.integers(1, 20))
def test_counter_twin_matches_recount(seed, window):
    rng = np.random.default_rng(seed)
    p = SwakdeParams(4, window, family=FamilySpec("srp", 2), seed=seed)
    twin = CounterTwin(3, p)
    X = rng.standard_normal((300, 3))
    assert twin.query(X[0]).value == 0
    for i, x in enumerate(X):
        twin.update(x)
        if i % 97 == 0 or i == len(X) - 1:
            q = rng.standard_normal(3)
            hq = twin.bank.bucket_ids(q)[0]
            win = X[max(0, i + 1 - window) : i + 1]
            hw = twin.bank.bucket_ids(win)
            expected = (hw == hq).sum(axis=0)
            assert np.array_equal(twin.row_values(q), expected)


def test_twin_single_point():
    twin = CounterTwin(3, SwakdeParams(5, 10))
    x = np.array([1.0, 2.0, 3.0])
    twin.update(x)
    assert np.all(twin.row_values(x) == 1)


def test_exact_kde_examples():
    q = np.array([1.0, 0.0, 0.0])
    fam = FamilySpec("srp", 1)
    assert exact_kde(q[None], q, fam) == pytest.approx(1.0)
    W = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 2.0]])
    assert exact_kde(W, q, fam) == pytest.approx(1.0)
    assert exact_kde(np.zeros((0, 3)), q, fam) == 0.0
    with pytest.raises(DomainError):
        exact_kde(np.zeros((1, 3)), q, fam)


def test_pstable_kde_closed_form_vs_monte_carlo():
    rng = np.random.default_rng(3)
    W = rng.standard_normal((40, 4))
    q = rng.standard_normal(4)
    fam = FamilySpec("pstable", 1, 1.5, 10)
    closed = exact_kde(W, q, fam)
    mc = exact_kde(W, q, fam, trials=10_000, seed=4)
    assert mc == pytest.approx(closed, rel=0.03)


def test_poisson_stream_ball_counts_fit_poisson():
    lam, side = poisson_layout(20_000, 3, 1.0, 6.0)
    s = gen_poisson_stream(3, lam, side, 1.0, n_cap=10**9, seed=5, n_queries=500)
    assert s.m == pytest.approx(6.0)
    counts = np.array([(np.linalg.norm(s.points - q, axis=1) <= 1.0).sum() for q in s.queries])
    top = 14
    obs = np.bincount(np.minimum(counts, top), minlength=top + 1)
    exp = np.append(poisson.pmf(np.arange(top), s.m), poisson.sf(top - 1, s.m)) * len(counts)
    assert chisquare(obs, exp).pvalue > 0.01
    assert np.array_equal(s.planted, counts > 0)
    assert np.all((s.queries >= 1.0) & (s.queries <= side - 1.0))


def test_poisson_stream_edge_cases():
    tiny = gen_poisson_stream(2, 1e-5, 10.0, 1.0, n_cap=100, seed=0, n_queries=3)
    assert len(tiny.points) == 0 and not tiny.planted.any()
    a = gen_poisson_stream(2, 1.0, 10.0, 1.0, 1000, seed=1, n_queries=0)
    b = gen_poisson_stream(2, 2.0, 10.0, 1.0, 1000, seed=1, n_queries=0)
    assert b.m == pytest.approx(2 * a.m)
    capped = gen_poisson_stream(2, 5.0, 10.0, 1.0, n_cap=50, seed=2, n_queries=0)
    assert len(capped.points) == 50
    with pytest.raises(ParameterError):
        gen_poisson_stream(2, 0.0, 10.0, 1.0, 10)
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * math.pi * 8)


def test_gaussian_mixture():
    X, means = gen_gaussian_mixture_stream(seed=3, return_means=True)
    assert X.shape == (10_000, 200)
    for c in range(10):
        block = X[1000 * c : 1000 * (c + 1), :10]
        assert np.all(np.abs(block.mean(0) - means[c, :10]) <= 4 / math.sqrt(1000))
    assert np.array_equal(gen_gaussian_mixture_stream(seed=3), X)


def test_poisson_tail_examples():
    assert poisson_tail(4.0, 4.0) == pytest.approx(1.0)
    assert poisson_tail(0, 3.0) == pytest.approx(math.exp(-3))
    assert poisson_tail(5, 10) == pytest.approx(0.2157, abs=1e-4)
    draws = np.random.default_rng(6).poisson(10, 10**6)
    emp = np.mean(draws <= 5)
    assert emp == pytest.approx(0.067, abs=0.002)
    assert emp <= poisson_tail(5, 10)
    with pytest.raises(DomainError):
        poisson_tail(11, 10)
    assert poisson_thin_mean(400, 0.01) == pytest.approx(4.0)


@given(st.floats(0.1, 50.0), st.floats(0.0, 1.0))
def test_poisson_tail_dominates_cdf(lam, frac):
    d = frac * lam
    assert poisson.cdf(math.floor(d), lam) <= poisson_tail(d, lam) + 1e-12


def test_failure_bounds():
    n, eta, m = 10_000, 0.5, 400
    got = ann_failure_bound(n, eta, m)
    second = 1 / 300 + (math.e**4 + math.e - 1) / math.e**5
    assert got == pytest.approx(second) and got == pytest.approx(0.383, abs=5e-4)
    huge = ann_failure_bound(n, eta, 1e6)
    assert huge == pytest.approx(1 / 300 + 1 / math.e)
    t0 = turnstile_failure_bound(n, eta, m, 0)
    assert t0 == pytest.approx(1 / 300 + 1 / math.e + math.exp(-4) * (1 - 1 / math.e))
    with pytest.raises(DomainError):
        turnstile_failure_bound(n, eta, m, 5)


def test_jl_examples():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((1000, 128))
    store = jl_build(X, 32, seed=1)
    assert store.compression == 0.25
    assert jl_query(store, X[17])[0] == 17
    with pytest.raises(ParameterError):
        jl_build(X, 129)


def test_jl_full_dimension_agrees_with_exact():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((2000, 16))
    ids = np.arange(2000)
    # queries planted next to stored points: a gaussian map at k=dim keeps them nearest
    Q = X[rng.choice(2000, 500, replace=False)] + 0.05 * rng.standard_normal((500, 16))
    store = jl_build(X, 16, seed=2)
    agree = sum(jl_query(store, q)[0] == exact_nn(ids, X, q)[0] for q in Q)
    assert agree >= 0.9 * 500
    # an orthonormal map at k=dim is an isometry, so even random queries agree
    R = rng.standard_normal((200, 16))
    ortho = jl_build(X, 16, seed=2, orthonormalize=True)
    agree = sum(jl_query(ortho, q)[0] == exact_nn(ids, X, q)[0] for q in R)
    assert agree >= 0.98 * 200
    got = jl_query(store, Q[0], original=X)
    assert got[1] == pytest.approx(np.linalg.norm(X[got[0]] - Q[0]))
