import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ks_2samp, spearmanr

from gridtwin.errors import DegenerateColumn, DimensionMismatch, InfeasibleSpatial, LengthError
from gridtwin.scenario_engine import (
    Bundling,
    HistoryTable,
    ScenarioSet,
    disaggregate,
    empirical_quantile,
    energy_distance,
    fit_copula,
    greedy_bundle,
    history_from_csv,
    history_to_csv,
    intermittency_index,
    sample_scenarios,
    scenarios_from_csv,
    scenarios_to_csv,
    support_points,
    support_points_mm,
    variogram_score,
)
from gridtwin.scenario_engine.bundling import set_partitions


# -- oracles ------------------------------------------------------------------

def all_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in all_partitions(rest):
        yield [[first]] + p
        for i in range(len(p)):
            yield p[:i] + [[first] + p[i]] + p[i + 1:]


def best_partition(values, xy, k, radius):
    """Exhaustive minimum of summed bundle index over spatially feasible k-partitions."""
    best = math.inf
    for p in all_partitions(list(range(values.shape[1]))):
        if len(p) != k:
            continue
        if any(np.hypot(*(xy[i] - xy[j])) > radius for g in p for i in g for j in g):
            continue
        total = 0.0
        for g in p:
            d = np.diff(values[:, g].sum(axis=1))
            total += np.mean((d - d.mean()) ** 2)
        best = min(best, total)
    return best


def energy_direct(x, y):
    x = np.asarray(x, float).reshape(len(x), -1)
    y = np.asarray(y, float).reshape(len(y), -1)

    def e(a, b):
        return np.mean([np.linalg.norm(p - q) for p in a for q in b])
    return 2 * e(x, y) - e(x, x) - e(y, y)


def gmm_sample(rng, n=1000):
    means = np.array([[0.0, 0.0], [4.0, 1.0], [1.0, 5.0]])
    comp = rng.integers(0, 3, n)
    return means[comp] + rng.normal(size=(n, 2)) * np.array([0.7, 1.2]) + 10.0


# -- history / CSV --------------------------------------------------------------

def test_history_csv_roundtrip():
    rng = np.random.default_rng(0)
    h = HistoryTable(rng.uniform(0, 100, (40, 3)), ("w1", "w2", "load"))
    again = history_from_csv(history_to_csv(h))
    assert again.assets == h.assets
    np.testing.assert_array_equal(again.values, h.values)


def test_scenario_csv_roundtrip():
    s = ScenarioSet(np.random.default_rng(1).uniform(0, 5, (4, 6, 2)), ("a", "b"), 15)
    text = scenarios_to_csv(s)
    assert text.splitlines()[0] == "scenario,a,b"
    again = scenarios_from_csv(text, 15)
    np.testing.assert_array_equal(again.values, s.values)
    assert scenarios_to_csv(again) == text


def test_history_rejects_bad_input():
    from gridtwin.errors import ValidationError
    with pytest.raises(ValidationError):
        HistoryTable(np.ones((1, 2)), ("a", "b"))
    with pytest.raises(ValidationError):
        HistoryTable(np.ones((3, 2)), ("a", "a"))
    with pytest.raises(ValidationError):
        HistoryTable(np.array([[1.0, np.nan], [1, 2]]), ("a", "b"))


def test_by_day_folding():
    h = HistoryTable(np.arange(48.0).reshape(24, 2), ("a", "b"))
    d = h.by_day(4)
    assert d.values.shape == (6, 8)
    assert d.columns[:3] == ("a@0", "b@0", "a@1")
    np.testing.assert_array_equal(d.series(), h.values)


# -- copula ---------------------------------------------------------------------

def test_independent_columns_uncorrelated():
    rng = np.random.default_rng(7)
    m = fit_copula(HistoryTable(rng.normal(size=(10000, 2)), ("x", "y")))
    assert abs(m.correlation[0, 1]) < 0.05


def test_comonotone_columns():
    x = np.random.default_rng(8).uniform(0, 10, 500)
    m = fit_copula(HistoryTable(np.column_stack([x, 2 * x]), ("x", "y")))
    assert m.correlation[0, 1] == pytest.approx(1.0, abs=1e-9)
    # the regularized factor still reproduces a valid correlation
    c = m.factor @ m.factor.T
    np.testing.assert_allclose(np.diag(c), 1.0, atol=1e-12)


def test_constant_column_rejected():
    h = HistoryTable(np.column_stack([np.arange(40.0), np.full(40, 3.0)]), ("ok", "flat"))
    with pytest.raises(DegenerateColumn, match="flat"):
        fit_copula(h)


def test_short_history_warns():
    with pytest.warns(UserWarning):
        fit_copula(HistoryTable(np.arange(20.0).reshape(10, 2), ("a", "b")))


def test_empirical_median():
    assert empirical_quantile(np.array([1.0, 2.0, 3.0]), 0.5) == pytest.approx(2.0)
    assert empirical_quantile(np.array([1.0, 2.0, 3.0]), 0.999) == 3.0


def test_correlation_is_psd_with_unit_diagonal():
    rng = np.random.default_rng(9)
    base = rng.normal(size=(60, 3))
    x = np.column_stack([base, base[:, 0] + base[:, 1], rng.normal(size=60)]) + 10
    m = fit_copula(HistoryTable(x, tuple("abcde")))
    assert np.all(np.linalg.eigvalsh(m.correlation) > -1e-10)
    np.testing.assert_allclose(m.correlation, m.correlation.T)
    np.testing.assert_allclose(np.diag(m.correlation), 1.0)


def gaussian_history(rho, m=4000, seed=11):
    rng = np.random.default_rng(seed)
    z = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=m)
    return HistoryTable(50 + 10 * z, ("x", "y"))


def test_sampled_rank_correlation_and_marginals():
    h = gaussian_history(0.8)
    model = fit_copula(h)
    s = sample_scenarios(model, 10000, 1, seed=3)
    v = s.values[:, 0, :]
    target = 6 / np.pi * np.arcsin(0.8 / 2)
    assert abs(spearmanr(v[:, 0], v[:, 1])[0] - target) < 0.05
    for j in range(2):
        assert ks_2samp(v[:, j], h.values[:, j]).statistic < 0.05


def test_sampling_is_deterministic():
    model = fit_copula(gaussian_history(0.3, m=200))
    a = sample_scenarios(model, 50, 4, seed=5)
    b = sample_scenarios(model, 50, 4, seed=5)
    assert a.values.tobytes() == b.values.tobytes()
    c = sample_scenarios(model, 50, 4, seed=6)
    assert not np.array_equal(a.values, c.values)


def test_day_folded_model_samples_trajectories():
    rng = np.random.default_rng(2)
    days, T = 200, 4
    level = rng.uniform(20, 80, days)
    series = np.repeat(level, T) + rng.normal(0, 1, days * T)
    h = HistoryTable(series[:, None], ("wind",)).by_day(T)
    s = sample_scenarios(fit_copula(h), 2000, T, seed=1)
    assert s.values.shape == (2000, T, 1)
    # strong within-day persistence survives sampling
    assert spearmanr(s.values[:, 0, 0], s.values[:, 3, 0])[0] > 0.9


# -- intermittency / bundling -----------------------------------------------------

def test_intermittency_examples():
    assert intermittency_index(np.full(10, 3.0)) == 0.0
    a, b = np.array([0, 1, 0, 1.0]), np.array([1, 0, 1, 0.0])
    assert intermittency_index(np.column_stack([a, b])) == 0.0
    assert intermittency_index(a) == pytest.approx(8 / 9)
    with pytest.raises(LengthError):
        intermittency_index([1.0])


def test_anticorrelated_pair_bundled():
    t = np.arange(50.0)
    a = 10 + np.sin(t)
    h = HistoryTable(np.column_stack([a, 20 - a]), ("a", "b"))
    b = greedy_bundle(h, {"a": (0, 0), "b": (0, 0)}, 1, 5.0)
    assert b.bundles == (("a", "b"),)
    assert b.objective == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(40))
def test_bundling_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(60, 4)).cumsum(axis=0) @ rng.normal(size=(4, 4)) + 50
    h = HistoryTable(x, ("a", "b", "c", "d"))
    xy = rng.uniform(0, 100, (4, 2))
    coords = dict(zip(h.assets, map(tuple, xy)))
    radius = float(rng.uniform(30, 150))
    for k in range(1, 5):
        best = best_partition(x, xy, k, radius)
        if not np.isfinite(best):
            with pytest.raises(InfeasibleSpatial):
                greedy_bundle(h, coords, k, radius)
            continue
        b = greedy_bundle(h, coords, k, radius)
        assert b.objective == pytest.approx(best, rel=1e-9, abs=1e-12)


def test_radius_too_small_is_infeasible():
    h = HistoryTable(np.random.default_rng(0).normal(size=(30, 3)), ("a", "b", "c"))
    coords = {"a": (0, 0), "b": (10, 0), "c": (0, 10)}
    with pytest.raises(InfeasibleSpatial):
        greedy_bundle(h, coords, 2, 5.0)


def greedy_instance(seed, n=9):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(80, n)).cumsum(axis=0) @ rng.normal(size=(n, n)) + 100
    h = HistoryTable(x, tuple(f"a{i}" for i in range(n)))
    coords = {a: tuple(rng.uniform(0, 50, 2)) for a in h.assets}
    return h, coords


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_greedy_partition_properties(seed, k):
    h, coords = greedy_instance(seed)
    b = greedy_bundle(h, coords, k, max_radius=1e3)
    assets = [a for g in b.bundles for a in g]
    assert sorted(assets) == sorted(h.assets)
    assert len(b.bundles) == k
    for g in b.bundles:
        assert sum(b.weights[a] for a in g) == pytest.approx(1.0)
        assert all(b.weights[a] >= 0 for a in g)
    # each merge is the cheapest available one, and polishing never hurts
    assert b.objective <= b.trace[-1] + 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(8.0, 60.0))
def test_greedy_respects_radius(seed, radius):
    h, coords = greedy_instance(seed)
    try:
        b = greedy_bundle(h, coords, 5, radius)
    except InfeasibleSpatial:
        return
    for g in b.bundles:
        for p in g:
            for q in g:
                assert np.hypot(*np.subtract(coords[p], coords[q])) <= radius + 1e-9


def test_greedy_merge_is_locally_optimal():
    h, coords = greedy_instance(4)
    b = greedy_bundle(h, coords, 8, 1e3, refine=False)
    # from singletons the chosen merge is the most anti-correlated pair
    cov = np.cov(np.diff(h.values, axis=0), rowvar=False, bias=True)
    i, j = np.unravel_index(np.argmin(cov + np.diag(np.full(9, np.inf))), cov.shape)
    merged = [g for g in b.bundles if len(g) == 2][0]
    assert set(merged) == {h.assets[i], h.assets[j]}
    assert b.trace[1] == pytest.approx(b.trace[0] + 2 * cov[i, j])


def test_set_partitions_counts():
    # Stirling numbers of the second kind
    assert [sum(1 for _ in set_partitions(5, k)) for k in range(1, 6)] == [1, 15, 25, 10, 1]


def test_disaggregate_examples():
    bund = Bundling((("a", "b"), ("c",)), {"a": 0.25, "b": 0.75, "c": 1.0}, {})
    s = ScenarioSet(np.array([[[100.0, 7.0]]]), ("a+b", "c"))
    out = disaggregate(s, bund)
    np.testing.assert_allclose(out.values[0, 0], [25, 75, 7])
    with pytest.raises(DimensionMismatch):
        disaggregate(ScenarioSet(np.ones((1, 1, 3)), ("x", "y", "z")), bund)


def test_disaggregate_reaggregates_exactly():
    h, coords = greedy_instance(3)
    b = greedy_bundle(h, coords, 3, 1e3)
    rng = np.random.default_rng(0)
    s = ScenarioSet(rng.uniform(0, 100, (5, 7, 3)), b.names)
    out = disaggregate(s, b)
    k = 0
    for j, g in enumerate(b.bundles):
        back = out.values[:, :, k:k + len(g)].sum(axis=2)
        np.testing.assert_allclose(back, s.values[:, :, j], rtol=1e-12, atol=1e-12)
        k += len(g)


# -- energy distance / variogram ------------------------------------------------------

def test_energy_distance_examples():
    assert energy_distance(np.array([0.0]), np.array([1.0])) == pytest.approx(2.0)
    x = np.random.default_rng(0).normal(size=(10, 3))
    assert energy_distance(x, x) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DimensionMismatch):
        energy_distance(np.ones((2, 2)), np.ones((2, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(1, 8), st.integers(1, 4))
def test_energy_distance_matches_formula_and_is_symmetric(seed, n, m, d):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(n, d)), rng.normal(size=(m, d))
    ed = energy_distance(x, y)
    assert ed == pytest.approx(max(energy_direct(x, y), 0.0), abs=1e-10)
    assert ed == pytest.approx(energy_distance(y, x), abs=1e-12)
    assert ed >= 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_energy_distance_positive_for_shifted_means(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(20, 2))
    y = rng.normal(size=(20, 2)) + rng.uniform(0.5, 3, 2)
    assert energy_distance(x, y) > 0


def test_variogram_examples():
    actual = np.array([1.0, 4.0, 2.0])
    s = np.tile(actual, (3, 1))
    assert variogram_score(s, actual) == pytest.approx(0.0, abs=1e-20)
    rng = np.random.default_rng(1)
    s = rng.uniform(0, 10, (5, 4))
    a = rng.uniform(0, 10, 4)
    assert variogram_score(s + 3.3, a + 3.3, 0.7) == pytest.approx(variogram_score(s, a, 0.7))
    # two components, two scenarios, p = 1
    s = np.array([[0.0, 2.0], [1.0, 4.0]])
    a = np.array([0.0, 1.0])
    assert variogram_score(s, a, 1.0) == pytest.approx((1 - (2 + 3) / 2) ** 2)
    with pytest.raises(DimensionMismatch):
        variogram_score(s, np.ones(3))


# -- support points --------------------------------------------------------------------

def test_support_points_k_equals_n():
    rng = np.random.default_rng(0)
    s = ScenarioSet(rng.uniform(0, 10, (15, 3, 1)), ("w",))
    sp = support_points(s, 15, seed=1)
    assert energy_distance(sp, s) == pytest.approx(0.0, abs=1e-12)


def test_support_point_one_dimensional_median():
    data = np.array([0.0, 0.0, 10.0])
    grid = np.linspace(-2, 12, 14001)
    oracle = grid[np.argmin([energy_direct([g], data) for g in grid])]
    for seed in range(5):
        res = support_points_mm(data, 1, seed)
        assert res.points[0, 0] == pytest.approx(oracle, abs=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_support_points_monotone_and_beat_seed(seed):
    y = gmm_sample(np.random.default_rng(seed), 300)
    res = support_points_mm(y, 10, seed)
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 1e-12 * h[:-1])
    assert h[-1] <= h[0]
    assert energy_distance(res.points, y) == pytest.approx(h[-1], abs=1e-12)


def test_support_points_preserve_shape():
    rng = np.random.default_rng(4)
    s = ScenarioSet(rng.uniform(0, 10, (40, 6, 2)), ("a", "b"), 30)
    sp = support_points(s, 5, seed=2)
    assert sp.values.shape == (5, 6, 2) and sp.assets == s.assets and sp.step_minutes == 30
    assert support_points(s, 5, seed=2).values.tobytes() == sp.values.tobytes()
