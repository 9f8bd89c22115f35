import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri

from kac_chaos import (
    EmpiricalMeasure,
    QuantileFn,
    RngStream,
    optimal_map_squared_cost,
    squared_pushforward,
    wasserstein_p,
    wasserstein_quantile,
)


def brute_force_wp(xs, ys, p):
    k = len(xs)
    best = math.inf
    for perm in itertools.permutations(range(k)):
        cost = sum(abs(xs[i] - ys[perm[i]]) ** p for i in range(k)) / k
        best = min(best, cost)
    return best


def test_wp_simple_pairing():
    assert wasserstein_p([0.0, 2.0], [1.0, 3.0], 2.0) == pytest.approx(1.0)


def test_wp_identity():
    xs = [0.3, -1.2, 0.3, 7.0]
    assert wasserstein_p(xs, xs, 2.0) == 0.0


def test_wp_order_irrelevant():
    for p in (1.0, 2.0, 4.0):
        assert wasserstein_p([0.0, 1.0], [1.0, 0.0], p) == 0.0


def test_wp_size_mismatch():
    with pytest.raises(ValueError):
        wasserstein_p([1.0], [1.0, 2.0], 2.0)
    with pytest.raises(ValueError):
        wasserstein_p([], [], 2.0)


def test_wp_matches_brute_force():
    gen = RngStream(17).generator()
    for _ in range(300):
        k = int(gen.integers(1, 8))
        p = float(gen.choice([1.0, 2.0, 3.0, 4.0]))
        xs = gen.normal(size=k)
        ys = gen.normal(size=k)
        assert wasserstein_p(xs, ys, p) == pytest.approx(brute_force_wp(xs, ys, p), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=6),
    st.data(),
)
def test_wp_brute_force_property(xs, data):
    ys = data.draw(st.lists(st.floats(-100, 100), min_size=len(xs), max_size=len(xs)))
    assert wasserstein_p(xs, ys, 2.0) == pytest.approx(brute_force_wp(xs, ys, 2.0), abs=1e-9)


def test_triangle_type_decomposition():
    gen = RngStream(18).generator()
    for _ in range(100):
        a, b, c = (gen.normal(size=9) for _ in range(3))
        ab = wasserstein_p(a, b, 2.0)
        bc = wasserstein_p(b, c, 2.0)
        ac = wasserstein_p(a, c, 2.0)
        assert ac <= 2 * ab + 2 * bc + 1e-12


def test_quantile_identity():
    q = QuantileFn.from_callable(lambda u: 2 * u - 1)
    assert wasserstein_quantile(q, q, 2.0, 100) == 0.0


def test_quantile_gaussian_variance_gap():
    mu = QuantileFn.from_callable(lambda u: ndtri(u))
    nu = QuantileFn.from_callable(lambda u: 2.0 * ndtri(u))
    val = wasserstein_quantile(mu, nu, 2.0, 10**4)
    assert val == pytest.approx(1.0, abs=1e-3)


def test_quantile_uniform_translation():
    mu = QuantileFn.from_callable(lambda u: u)
    nu = QuantileFn.from_callable(lambda u: 1.0 + u)
    assert wasserstein_quantile(mu, nu, 1.0, 1000) == pytest.approx(1.0, abs=1e-9)


def test_empirical_quantile_exact_for_matching_grid():
    gen = RngStream(19).generator()
    xs = gen.normal(size=64)
    ys = gen.normal(size=64)
    direct = wasserstein_p(xs, ys, 2.0)
    via_q = wasserstein_quantile(
        EmpiricalMeasure(xs).quantile_fn(), EmpiricalMeasure(ys).quantile_fn(), 2.0, 64
    )
    assert via_q == pytest.approx(direct, abs=1e-12)


def test_squared_pushforward():
    assert squared_pushforward(EmpiricalMeasure([2.0])).atoms.tolist() == [4.0]
    assert squared_pushforward(EmpiricalMeasure([-1.0, 1.0])).atoms.tolist() == [1.0, 1.0]
    gen = RngStream(20).generator()
    mu = EmpiricalMeasure(gen.normal(size=100))
    assert np.mean(squared_pushforward(mu).atoms) == pytest.approx(np.mean(mu.atoms**2))


def test_sorted_is_stable_permutation():
    mu = EmpiricalMeasure([3.0, 1.0, 3.0, -1.0])
    assert mu.sorted.tolist() == [-1.0, 1.0, 3.0, 3.0]
    assert mu.sorted_indices.tolist() == [3, 1, 0, 2]


# --- optimal map for the cost (x^2 - y^2)^2 ---


def _map_cost(atoms, fvals):
    return float(np.mean((np.asarray(atoms) ** 2 - np.asarray(fvals) ** 2) ** 2))


def test_optimal_map_zero_cost_on_matching_quantiles():
    atoms = np.array([1.0, -3.0, 2.0])
    flow_sq = EmpiricalMeasure(atoms**2).quantile_fn()
    f = optimal_map_squared_cost(EmpiricalMeasure(atoms), flow_sq, rng=RngStream(0))
    assert _map_cost(atoms, f) == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(f**2, atoms**2)


def test_optimal_map_two_atom_assignment():
    atoms = np.array([3.0, 1.0])
    flow_sq = QuantileFn.from_sorted(np.array([1.0, 9.0]))
    f = optimal_map_squared_cost(EmpiricalMeasure(atoms), flow_sq, rng=RngStream(1))
    assert f[0] ** 2 == pytest.approx(9.0)
    assert f[1] ** 2 == pytest.approx(1.0)
    # the crossed assignment costs strictly more
    assert _map_cost(atoms, f) < _map_cost(atoms, f[::-1]) - 1e-9


def test_optimal_map_cost_equals_quantile_w2():
    gen = RngStream(21).generator()
    atoms = gen.normal(size=33)
    flow_atoms = gen.normal(size=500)
    flow_sq = EmpiricalMeasure(flow_atoms**2).quantile_fn()
    f = optimal_map_squared_cost(EmpiricalMeasure(atoms), flow_sq, rng=gen)
    expected = wasserstein_quantile(
        EmpiricalMeasure(atoms**2).quantile_fn(), flow_sq, 2.0, 33
    )
    assert _map_cost(atoms, f) == pytest.approx(expected, rel=1e-12)


def test_optimal_map_monotone_in_squares():
    gen = RngStream(22).generator()
    atoms = gen.normal(size=40)
    flow_sq = EmpiricalMeasure(gen.normal(size=200) ** 2).quantile_fn()
    f = optimal_map_squared_cost(EmpiricalMeasure(atoms), flow_sq, rng=gen)
    order = np.argsort(atoms**2, kind="stable")
    assert np.all(np.diff((f**2)[order]) >= -1e-15)


def test_optimal_map_beats_brute_force_matchings():
    gen = RngStream(23).generator()
    for _ in range(50):
        m = int(gen.integers(2, 8))
        atoms = gen.normal(size=m)
        flow_vals = np.sort(gen.normal(size=m) ** 2)
        flow_sq = QuantileFn.from_sorted(flow_vals)
        f = optimal_map_squared_cost(EmpiricalMeasure(atoms), flow_sq, rng=gen)
        best = min(
            float(np.mean((atoms**2 - flow_vals[list(perm)]) ** 2))
            for perm in itertools.permutations(range(m))
        )
        assert _map_cost(atoms, f) == pytest.approx(best, abs=1e-12)


def test_optimal_map_sign_source():
    atoms = np.array([1.0, 2.0, 3.0])
    signed = np.array([-1.0, 2.0, -3.0])  # sorted by square, signs carried
    flow_sq = QuantileFn.from_sorted(signed**2)
    sign_src = QuantileFn.from_sorted(signed)  # not sorted by value: raw rank view
    f = optimal_map_squared_cost(EmpiricalMeasure(atoms), flow_sq, sign_source=sign_src)
    assert np.allclose(f, [-1.0, 2.0, -3.0])


def test_optimal_map_rejects_negative_squares():
    atoms = EmpiricalMeasure([1.0, 2.0])
    bad = QuantileFn.from_callable(lambda u: u - 0.6)
    with pytest.raises(ValueError):
        optimal_map_squared_cost(atoms, bad, rng=RngStream(0))


def test_optimal_map_needs_sign_information():
    atoms = EmpiricalMeasure([1.0, 2.0])
    flow_sq = QuantileFn.from_sorted(np.array([1.0, 4.0]))
    with pytest.raises(ValueError):
        optimal_map_squared_cost(atoms, flow_sq)


def test_iid_empirical_rate_uniform():
    # E W_2^2(empirical_n, U[0,1]) decays at least like n^{-1/2}
    from kac_chaos import fit_loglog_slope

    uniform_q = QuantileFn.from_callable(lambda u: u)
    means = []
    ns = [100, 1000, 10000]
    for k, n in enumerate(ns):
        gen = RngStream(24, k).generator()
        errs = [
            wasserstein_quantile(QuantileFn.from_sorted(np.sort(gen.random(n))), uniform_q, 2.0, n)
            for _ in range(60)
        ]
        means.append(np.mean(errs))
    fit = fit_loglog_slope(ns, means)
    assert fit.slope <= -0.5
