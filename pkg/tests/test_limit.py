import numpy as np
import pytest

from drsn import kernels
from drsn.limit import (CACHE_HEADER, WSampleSet, first_node, load_or_simulate,
                        lookup_cache, path_increments, quantile, read_cache,
                        simulate_w, simulate_w_refined, write_cache)


def test_quantile_is_order_statistic():
    ws = WSampleSet(0.1, 4, 1000, 0, np.array([3.0, 1.0, 4.0, 2.0]))
    assert quantile(ws, 0.5) == 2.0
    assert quantile(ws, 0.75) == 3.0
    assert quantile(ws, 0.76) == 4.0
    assert quantile(ws, 0.01) == 1.0
    with pytest.raises(ValueError):
        quantile(ws, 1.0)


def test_sample_set_invariants():
    with pytest.raises(ValueError):
        WSampleSet(0.1, 1, 1000, 0, np.array([np.nan]))
    ws = WSampleSet(0.1, 3, 1000, 0, np.array([2.0, 0.0, 1.0]))
    assert np.all(np.diff(ws.samples) >= 0)


def test_preconditions():
    with pytest.raises(ValueError):
        simulate_w(0.0, 1000, 1000)
    with pytest.raises(ValueError):
        simulate_w(0.1, 999, 1000)
    with pytest.raises(ValueError):
        simulate_w(0.1, 1000, 999)


def test_first_node():
    assert first_node(0.1, 10_000) == 1000
    assert first_node(0.05, 1000) == 50
    assert first_node(0.1234, 1000) == 124


def test_deterministic_and_worker_independent():
    a = simulate_w(0.1, 1500, 1000, seed=3)
    b = simulate_w(0.1, 1500, 1000, seed=3, workers=3)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.denominators, b.denominators)
    c = simulate_w(0.1, 1500, 1000, seed=4)
    assert not np.array_equal(a.samples, c.samples)


def test_paths_are_prefix_stable():
    # path r depends only on (seed, r), not on how many paths are drawn
    a = simulate_w(0.1, 1000, 1000, seed=9).denominators
    b = simulate_w(0.1, 1300, 1000, seed=9).denominators
    assert np.array_equal(a, b[:1000])


def test_symmetric_median():
    ws = simulate_w(0.1, 20_000, 1000, seed=5)
    s = ws.samples
    iqr = np.quantile(s, 0.75) - np.quantile(s, 0.25)
    assert abs(np.median(s)) <= 3 * iqr / np.sqrt(s.size)


def test_denominators_positive():
    ws = simulate_w(0.2, 5000, 1000, seed=6)
    assert np.all(ws.denominators > 0)


@pytest.mark.parametrize("c", [2.0, 0.5, 3.0])
def test_scale_invariance(c):
    xi = path_increments(1, 0, 64, 1000)
    w1, _ = kernels.w_from_increments(xi, 100)
    wc, _ = kernels.w_from_increments(c * xi, 100)
    if c in (2.0, 0.5):
        # powers of two scale every partial sum exactly
        assert np.array_equal(w1, wc)
    else:
        assert np.allclose(w1, wc, rtol=1e-12, atol=0)


def test_numba_matches_numpy():
    xi = path_increments(2, 0, 50, 2000)
    a, da = kernels.w_from_increments_nb(xi, 200)
    b, db = kernels.w_from_increments_np(xi, 200)
    assert np.allclose(a, b, rtol=1e-10)
    assert np.allclose(da, db, rtol=1e-10)


def test_against_direct_formula():
    xi = path_increments(8, 0, 3, 1000)
    N, eps = 1000, 0.1
    w, _ = kernels.w_from_increments(xi, first_node(eps, N))
    for r in range(3):
        B = np.concatenate([[0.0], np.cumsum(xi[r]) / np.sqrt(N)])
        t = np.arange(N + 1) / N
        keep = t >= eps - 1e-12
        g = (B[keep] / t[keep] - B[-1]) ** 2
        den = np.sqrt(np.trapezoid(g, t[keep]) if hasattr(np, "trapezoid") else np.trapz(g, t[keep]))
        assert w[r] == pytest.approx(B[-1] / den, rel=1e-12)


def test_cache_round_trip(tmp_path):
    ws = simulate_w(0.1, 1000, 1000, seed=2)
    path = tmp_path / "q.csv"
    write_cache(path, ws, [0.9, 0.95])
    write_cache(path, ws, [0.99])
    rows = read_cache(path)
    assert open(path).readline().strip() == ",".join(CACHE_HEADER)
    assert [r["level"] for r in rows] == [0.9, 0.95, 0.99]
    assert rows[1]["quantile"] == quantile(ws, 0.95)
    assert lookup_cache(path, 0.1, 1000, 1000, 2, 0.95) == quantile(ws, 0.95)
    assert lookup_cache(path, 0.1, 1000, 1000, 3, 0.95) is None


def test_sample_cache_reuse(tmp_path):
    a = load_or_simulate(str(tmp_path), 0.1, 1000, 1000, 12)
    b = load_or_simulate(str(tmp_path), 0.1, 1000, 1000, 12)
    assert np.array_equal(a.samples, b.samples)


# regression fixtures at the default sizes (2e5 paths, 1e4 steps, default seed)
PINNED = {0.05: 1.559974201756228, 0.1: 1.9366319640347713, 0.2: 2.6463156293416037}


@pytest.mark.slow
@pytest.mark.parametrize("eps", sorted(PINNED))
def test_pinned_quantiles(eps, cache_dir):
    ws = load_or_simulate(cache_dir, eps, 200_000, 10_000, 20240101)
    assert quantile(ws, 0.95) == PINNED[eps]


@pytest.mark.slow
def test_quantile_increases_with_epsilon(cache_dir):
    qs = [quantile(load_or_simulate(cache_dir, e, 200_000, 10_000, 20240101), 0.95)
          for e in (0.05, 0.1, 0.2)]
    assert qs[0] < qs[1] < qs[2]


@pytest.mark.slow
def test_discretization_error_small():
    coarse, fine = simulate_w_refined(0.1, 200_000, 10_000, 4, 20240101)
    assert abs(quantile(coarse, 0.95) - quantile(fine, 0.95)) < 0.01
