import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmrigid import group_actions as ga
from qmrigid.generators import hyperbolic_disk, random_tree_edges, tree_metric
from qmrigid.hyperbolic_core import (
    BasedSpace, BoundarySample, acu_check, convergence_at_infinity, four_point_delta,
    gromov_products, interval_boundary, quasi_metric_constant, ultrametric_tree_boundary,
    visual_metric, visual_sweep,
)
from qmrigid.metric_core import FiniteMetricSpace


def brute_delta(d, p):
    """Plain loops over ordered triples."""
    n = len(d)
    g = lambda x, y: 0.5 * (d[x][p] + d[y][p] - d[x][y])
    best = 0.0
    for x, y, z in itertools.permutations(range(n), 3):
        best = max(best, min(g(x, z), g(y, z)) - g(x, y))
    return best


def star(arms):
    """Star tree: centre 0, leaf i at distance arms[i-1]."""
    n = len(arms) + 1
    d = np.zeros((n, n))
    for i, a in enumerate(arms, 1):
        d[0, i] = d[i, 0] = a
        for j, b in enumerate(arms, 1):
            if i != j:
                d[i, j] = a + b
    return FiniteMetricSpace(d)


def test_gromov_trivial_cases():
    sp = tree_metric(30, seed=1)
    G = gromov_products(BasedSpace(sp, 4)).products
    assert np.all(G[4] == 0)
    assert np.allclose(np.diag(G), sp.dist[:, 4])
    assert np.all(G >= -1e-12)
    assert np.all(G <= np.minimum.outer(sp.dist[:, 4], sp.dist[:, 4]) + 1e-12)
    with pytest.raises(IndexError):
        BasedSpace(sp, 30)


def test_gromov_on_star_is_distance_to_geodesic():
    arms = [1.0, 2.0, 3.0, 5.0, 0.5]
    sp = star(arms)
    p = 1
    G = gromov_products(BasedSpace(sp, p)).products
    for x, y in itertools.combinations(range(1, len(arms) + 1), 2):
        # geodesic [x, y] passes through the centre; p is a leaf off it unless p in {x, y}
        expect = 0.0 if p in (x, y) else arms[p - 1]
        assert G[x, y] == pytest.approx(expect)


@pytest.mark.parametrize("seed", range(10))
def test_tree_delta_is_zero(seed):
    sp = tree_metric(200, seed=seed)
    rep = four_point_delta(gromov_products(BasedSpace(sp, 0)))
    assert rep.exhaustive and rep.delta == 0.0


def test_small_delta_matches_brute_force():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(9, 2))
    sp = FiniteMetricSpace(np.linalg.norm(pts[:, None] - pts[None], axis=2))
    for p in (0, 4):
        rep = four_point_delta(gromov_products(BasedSpace(sp, p)))
        assert rep.delta == pytest.approx(brute_delta(sp.dist, p), abs=1e-12)


def test_three_point_delta():
    d = np.array([[0, 3, 4], [3, 0, 5], [4, 5, 0.0]])
    sp = FiniteMetricSpace(d)
    assert four_point_delta(gromov_products(BasedSpace(sp, 0))).delta == pytest.approx(brute_delta(d, 0))
    with pytest.raises(ValueError):
        four_point_delta(np.zeros((2, 2)))


def test_delta_monotone_under_restriction():
    sp = hyperbolic_disk(80, 5.0, seed=2)
    full = four_point_delta(gromov_products(BasedSpace(sp, 0))).delta
    sub = four_point_delta(gromov_products(BasedSpace(sp.subspace(np.arange(40)), 0))).delta
    assert sub <= full + 1e-12


def test_sampled_delta_is_lower_bound():
    sp = hyperbolic_disk(120, 5.0, seed=5)
    G = gromov_products(BasedSpace(sp, 0))
    exact = four_point_delta(G).delta
    sampled = four_point_delta(G, sample_above=50, samples=20000, seed=1)
    assert not sampled.exhaustive and sampled.delta <= exact + 1e-12


def test_h2_delta_stable_across_samples():
    ds = [four_point_delta(gromov_products(BasedSpace(hyperbolic_disk(200, 6.0, seed=s), 0))).delta
          for s in range(5)]
    assert max(ds) / min(ds) <= 1.2
    # a sample of H^2 is never more hyperbolic-defective than log 2 + slack
    assert max(ds) <= np.log(2) + 0.05


# -- chain inequality


def test_acu_on_trees():
    sp = tree_metric(120, seed=4)
    G = gromov_products(BasedSpace(sp, 0))
    rep = acu_check(G, -1.0, budget=32, seed=0)
    # trees satisfy the min-inequality with no defect, so c <= 0
    assert rep.c <= 1e-12 and rep.random_c <= rep.c + 1e-12
    assert rep.profile[1] <= 1e-12
    assert not rep.growing
    rep2 = acu_check(G, -1.0, budget=32, seed=7)
    assert abs(rep2.c - rep.c) <= 1e-9


def tree_chains_oracle(G, kappa, max_len):
    """Exhaustive chains of length <= max_len on a tiny table."""
    n = len(G)
    best = -np.inf
    for L in range(1, max_len + 1):
        for chain in itertools.product(range(n), repeat=L + 1):
            if any(a == b for a, b in zip(chain, chain[1:])) or chain[0] == chain[-1]:
                continue
            m = min(G[a, b] for a, b in zip(chain, chain[1:]))
            best = max(best, m - np.log(L) / np.sqrt(-kappa) - G[chain[0], chain[-1]])
    return best


def test_acu_dp_matches_exhaustive_chains():
    sp = tree_metric(7, seed=2)
    G = gromov_products(BasedSpace(sp, 0)).products
    rep = acu_check(G, -1.0, budget=7, max_len=4, random_chains=0)
    assert rep.c == pytest.approx(tree_chains_oracle(G, -1.0, 4), abs=1e-12)
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(6, 2))
    sp = FiniteMetricSpace(np.linalg.norm(pts[:, None] - pts[None], axis=2))
    G = gromov_products(BasedSpace(sp, 0)).products
    rep = acu_check(G, -0.5, budget=6, max_len=4, random_chains=0)
    assert rep.c == pytest.approx(tree_chains_oracle(G, -0.5, 4), abs=1e-12)


def test_acu_interval_counterexample():
    # products (1/eps) log(1/|s - t|): equal steps give (log n)(1/eps - 1/sqrt(-kappa))
    bad = acu_check(interval_boundary(65, 0.5), -1.0, budget=16, max_len=32)
    assert bad.growing and bad.growth_slope == pytest.approx(1.0, abs=0.05)
    good = acu_check(interval_boundary(65, 2.0), -1.0, budget=16, max_len=32)
    assert not good.growing


def test_acu_errors():
    with pytest.raises(ValueError):
        acu_check(np.zeros((3, 3)), 0.0)
    with pytest.raises(ValueError):
        acu_check(np.zeros((3, 3)), -1.0, budget=0)


# -- visual metrics


def test_two_points_direct_chain():
    b = BoundarySample.from_disk(np.array([1, 1j]))
    rep = visual_metric(b, 0.7)
    assert np.array_equal(rep.d_eps, rep.rho)


@pytest.mark.parametrize("eps", [0.3, 1.0, 2.5])
def test_ultrametric_no_shortcut(eps):
    rep = visual_metric(ultrametric_tree_boundary(5, 2), eps)
    assert np.array_equal(rep.d_eps, rep.rho)
    assert rep.K == 1.0


def brute_K(rho):
    n = len(rho)
    return max(rho[x, y] / max(rho[x, z], rho[z, y])
               for x, y, z in itertools.permutations(range(n), 3))


def test_quasi_metric_constant_matches_brute_force():
    rng = np.random.default_rng(1)
    z = np.exp(1j * rng.uniform(0, 2 * np.pi, 12))
    rho = visual_metric(BoundarySample.from_disk(z), 1.3).rho
    assert quasi_metric_constant(rho, chunk=5) == pytest.approx(brute_K(rho), rel=1e-12)


def test_visual_metric_invariants():
    ls = ga.limit_set_sample(ga.schottky(0.9), 3)
    b = BoundarySample.from_disk(ls)
    for eps in (0.2, 0.5, 1.0):
        rep = visual_metric(b, eps)
        d = rep.d_eps
        assert rep.upper_ok
        assert np.all(d[:, :, None] <= d[:, None, :] + d.T[None, :, :] + 1e-12)
        if rep.applicable:
            assert rep.lower_ok


def test_schottky_visual_bracket():
    # chordal = 2 e^{-(xi, eta)}: on a dense sample K(eps) is close to 2^eps,
    # so the sqrt 2 threshold is crossed near eps = 1/2
    ls = ga.limit_set_sample(ga.schottky(0.9), 4)
    sw = visual_sweep(BoundarySample.from_disk(ls), np.linspace(0.1, 1.5, 15))
    lo, hi = sw.bracket
    assert lo is not None and hi is not None and lo < hi
    assert 0.3 <= lo <= 0.6
    assert all(ok for ok, app in zip(sw.lower_ok, sw.applicable) if app)


def test_boundary_sample_validation():
    with pytest.raises(ValueError):
        BoundarySample([0, 1], np.array([[0, 1.0], [2.0, 0]]))
    with pytest.raises(ValueError):
        BoundarySample([0, 1], np.array([[0, -1.0], [-1.0, 0]]))
    b = BoundarySample.from_sphere(np.eye(3))
    assert np.all(np.isinf(np.diag(b.gromov)))
    assert b.gromov[0, 1] == pytest.approx(-np.log(np.sqrt(2) / 2))


# -- convergence at infinity


def orbit_table(model, mats):
    mats = np.concatenate([np.eye(2, dtype=complex)[None], mats])
    d = model.orbit_distances(mats)
    return gromov_products(BasedSpace(FiniteMetricSpace(d, check_triangle=False), 0))


def test_convergence_along_axis():
    m = ga.cyclic()
    g = m.generators[0].matrix
    gi = np.linalg.inv(g)
    fwd = [np.linalg.matrix_power(g, k) for k in range(1, 13)]
    bwd = [np.linalg.matrix_power(gi, k) for k in range(1, 13)]
    T = orbit_table(m, np.array(fwd + bwd))
    a = np.arange(1, 13)
    b = np.arange(13, 25)
    rep = convergence_at_infinity(T, a)
    assert rep.convergent_a
    # every other point of the same ray is an equivalent sequence
    rep = convergence_at_infinity(T, a[::2], a[1::2], window=3)
    assert rep.equivalent
    rep = convergence_at_infinity(T, a, b)
    assert rep.convergent_a and rep.convergent_b and not rep.equivalent


def test_constant_sequence_not_convergent():
    sp = tree_metric(20, seed=0)
    T = gromov_products(BasedSpace(sp, 0))
    assert not convergence_at_infinity(T, [3] * 10).convergent_a
    with pytest.raises(ValueError):
        convergence_at_infinity(T, [1, 2, 3], window=5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(5, 40))
def test_tree_products_ultrametric_like(seed, n):
    child, parent, w = random_tree_edges(n, seed)
    sp = tree_metric(n, seed)
    G = gromov_products(BasedSpace(sp, 0)).products
    # products of integer-weight trees are exact half-integers
    assert np.array_equal(G * 2, np.round(G * 2))
    assert four_point_delta(G).delta == 0.0
