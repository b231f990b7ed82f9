import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmrigid import group_actions as ga
from qmrigid.metric_core import FiniteMetricSpace, box_counts, loglog_slope, net_counts, snowflake


# -- independent formulas


def uhp_act(m, z):
    a, b, c, d = m.ravel()
    return (a * z + b) / (c * z + d)


def uhp_dist(z, w):
    return np.arccosh(1 + np.abs(z - w) ** 2 / (2 * z.imag * w.imag))


def h3_act(m, z, t):
    """Upper half-space action of [[a, b], [c, d]] on (z, t)."""
    a, b, c, d = m.ravel()
    den = np.abs(c * z + d) ** 2 + np.abs(c) ** 2 * t ** 2
    zz = ((a * z + b) * np.conj(c * z + d) + a * np.conj(c) * t ** 2) / den
    return zz, t / den


def h3_dist(z, t, w, s):
    return np.arccosh(1 + (np.abs(z - w) ** 2 + (t - s) ** 2) / (2 * t * s))


def disk_act(m_uhp, xi):
    """Boundary action in the disk picture by conjugating with z -> (z - i)/(z + i)."""
    z = 1j * (1 + xi) / (1 - xi)
    w = uhp_act(m_uhp, z)
    return (w - 1j) / (w + 1j)


def random_word(model, length, rng):
    g = np.eye(2, dtype=complex)
    for k in rng.integers(0, len(model.generators), size=length):
        g = g @ model.gens[k]
    return g


# -- isometries and models


def test_mobius_isometry_normalizes():
    g = ga.MobiusIsometry(np.array([[4.0, 2.0], [2.0, 2.0]]))
    assert abs(g.det - 1) <= 1e-12
    h = ga.MobiusIsometry(-g.matrix)
    assert np.array_equal(h.matrix, g.matrix)
    assert (g @ g.inverse()).is_identity()
    with pytest.raises(ga.GroupError):
        ga.MobiusIsometry(np.array([[1j, 0], [0, -1j]]), dim=1)
    with pytest.raises(ga.GroupError):
        ga.MobiusIsometry(np.zeros((2, 2)))


def test_model_validation():
    with pytest.raises(ga.GroupError):
        ga.GroupActionModel([np.eye(2)])
    with pytest.raises(ga.GroupError):
        ga.GroupActionModel([np.array([[1.0, 1.0], [0.0, 1.0]])])   # inverse missing
    with pytest.raises(ga.GroupError):
        ga.psl2z(base=-1j)
    assert len(ga.psl2z().generators) == 3   # S is its own inverse


def test_translation_length():
    for ell in (0.5, 1.7, 3.0):
        assert ga.MobiusIsometry(ga.translation(ell, 0.3)).translation_length() == pytest.approx(ell)


def test_isometry_check_h2():
    rng = np.random.default_rng(0)
    m = ga.bolza(base=0.3 + 1.4j)
    z = rng.uniform(-2, 2, 10**4) + 1j * rng.uniform(0.1, 3, 10**4)
    w = rng.uniform(-2, 2, 10**4) + 1j * rng.uniform(0.1, 3, 10**4)
    for _ in range(5):
        g = random_word(m, 6, rng).real
        err = np.abs(uhp_dist(uhp_act(g, z), uhp_act(g, w)) - uhp_dist(z, w))
        assert err.max() <= 1e-9


def test_distance_routes_agree_h2():
    rng = np.random.default_rng(1)
    m = ga.schottky(0.8, base=-0.4 + 0.7j)
    mats = np.array([random_word(m, int(rng.integers(1, 9)), rng) for _ in range(30)])
    p = complex(m.base)
    pts = np.array([uhp_act(g.real, p) for g in mats])
    # the point-based oracle rounds like eps e^d (d reaches ~13 here)
    assert np.allclose(m.distance_from_base(mats), uhp_dist(pts, np.full_like(pts, p)), atol=1e-6)
    D = m.orbit_distances(mats)
    assert np.allclose(D, uhp_dist(pts[:, None], pts[None, :]), atol=1e-5)


def test_h3_model():
    lam = 1.6 * np.exp(0.7j)
    m = ga.GroupActionModel.with_inverses([ga.loxodromic_h3(lam)], dim=2, base=(0.2 + 0.1j, 1.3))
    rng = np.random.default_rng(2)
    g = random_word(m, 3, rng) @ np.array([[1, 0.4 + 0.2j], [0, 1]])
    z, t = rng.normal(size=500) + 1j * rng.normal(size=500), rng.uniform(0.2, 2, 500)
    w, s = rng.normal(size=500) + 1j * rng.normal(size=500), rng.uniform(0.2, 2, 500)
    gz, gt = h3_act(g, z, t)
    gw, gs = h3_act(g, w, s)
    assert np.abs(h3_dist(gz, gt, gw, gs) - h3_dist(z, t, w, s)).max() <= 1e-9
    # distance routes
    bz, bt = h3_act(g, 0.2 + 0.1j, 1.3)
    assert m.distance_from_base(g[None])[0] == pytest.approx(h3_dist(bz, bt, 0.2 + 0.1j, 1.3), abs=1e-10)
    # cyclic loxodromic with base on the axis: N(R) = 2 floor(R / ell) + 1
    m0 = ga.GroupActionModel.with_inverses([ga.loxodromic_h3(lam)], dim=2, base=(0, 1.0))
    ell = 2 * np.log(abs(lam))
    ob = ga.orbit_ball(m0, 7.0)
    assert ob.N == 2 * int(7.0 // ell) + 1


def test_spinor_round_trip():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(200, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x[0] = [0, 0, 1]
    x[1] = [0, 0, -1]
    assert np.allclose(ga.from_spinor(ga.to_spinor(x, 2), 2), x, atol=1e-12)
    d = ga.spinor_chordal(ga.to_spinor(x, 2))
    assert np.allclose(d, np.linalg.norm(x[:, None] - x[None], axis=2), atol=1e-12)
    xi = np.exp(1j * rng.uniform(0, 2 * np.pi, 50))
    assert np.allclose(ga.from_spinor(ga.to_spinor(xi, 1), 1), xi)
    with pytest.raises(ValueError):
        ga.to_spinor(np.array([1.1]), 1)
    with pytest.raises(ValueError):
        ga.to_spinor(np.array([[1.0, 0.1, 0]]), 2)


# -- boundary action


def cross_ratio_direct(z, q):
    a, b, c, d = (z[k] for k in q.T)
    return np.abs(a - c) * np.abs(b - d) / (np.abs(a - d) * np.abs(b - c))


def test_boundary_action_matches_direct_mobius():
    rng = np.random.default_rng(4)
    m = ga.schottky(0.7)
    xi = np.exp(1j * rng.uniform(0, 2 * np.pi, 300))
    g = random_word(m, 5, rng)
    img, _ = ga.apply_boundary(m, g, xi)
    assert np.allclose(img, disk_act(g.real, xi), atol=1e-9)
    q = rng.integers(0, 300, size=(20000, 4))
    q = q[np.array([len(set(r)) == 4 for r in q])]
    ratio = cross_ratio_direct(img, q) / cross_ratio_direct(xi, q)
    assert np.abs(ratio - 1).max() <= 1e-9


def test_boundary_action_is_exactly_mobius():
    rng = np.random.default_rng(5)
    m = ga.bolza()
    xi = np.exp(1j * rng.uniform(0, 2 * np.pi, 200))
    _, rep = ga.boundary_action(m, np.eye(2), xi, quadruple_budget=10**4)
    assert rep.linear_constant_C == pytest.approx(1.0, abs=1e-12)
    for length in (1, 4, 8):
        _, rep = ga.boundary_action(m, random_word(m, length, rng), xi, quadruple_budget=10**4)
        assert abs(rep.linear_constant_C - 1) <= 1e-9


def test_boundary_action_s2():
    rng = np.random.default_rng(6)
    m = ga.GroupActionModel.with_inverses([ga.loxodromic_h3(2.0 * np.exp(1j)),
                                           np.array([[1.0, 0.5j], [0.3, 1 + 0.15j]])], dim=2,
                                          base=(0, 1.0))
    x = rng.normal(size=(150, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    _, rep = ga.boundary_action(m, random_word(m, 6, rng), x, quadruple_budget=10**4)
    assert abs(rep.linear_constant_C - 1) <= 1e-9


def test_boundary_action_with_snowflake_target():
    rng = np.random.default_rng(7)
    m = ga.schottky(0.6)
    xi = np.exp(1j * np.sort(rng.uniform(0, 2 * np.pi, 14)))
    img, _ = ga.apply_boundary(m, random_word(m, 3, rng), xi)
    src = ga.boundary_space(xi, 1)
    tgt = snowflake(ga.boundary_space(img, 1), 0.5)
    from qmrigid.metric_core import qm_distortion
    C = qm_distortion(src, tgt, quadruple_budget=10**6).linear_constant_C
    # brute force over all 4-sets: the pair products of a quadruple transform by t -> t^(1/2)
    d, e = src.dist, tgt.dist
    best = 1.0
    import itertools
    for a, b, c, f in itertools.combinations(range(14), 4):
        P = np.array([d[a, b] * d[c, f], d[a, c] * d[b, f], d[a, f] * d[b, c]])
        Q = np.array([e[a, b] * e[c, f], e[a, c] * e[b, f], e[a, f] * e[b, c]])
        u = Q / P
        best = max(best, u.max() / u.min())
    assert C == pytest.approx(best, rel=1e-12)
    assert 1.0 < C < np.inf


# -- orbits and entropy


@pytest.mark.parametrize("ell", [0.7, 1.3, 2.9])
def test_cyclic_orbit_count(ell):
    m = ga.cyclic(ell)
    for R in (0.5, 3.0, 10.0):
        assert ga.orbit_ball(m, R).N == 2 * int(R // ell) + 1


def test_cyclic_trace_three_on_axis():
    m = ga.cyclic()
    ell = ga.MobiusIsometry(np.array([[2.0, 1.0], [1.0, 1.0]])).translation_length()
    ob = ga.orbit_ball(m, 12.0)
    assert ob.N == 2 * int(12 // ell) + 1
    assert not ob.truncated


def lattice_brute(R):
    bound = 2 * np.cosh(R)
    lim = int(np.sqrt(bound)) + 1
    rng = range(-lim, lim + 1)
    return sum(1 for a in rng for b in rng for c in rng for d in rng
               if a * d - b * c == 1 and a * a + b * b + c * c + d * d <= bound) // 4


def test_lattice_oracle_matches_brute_force():
    for R in (1.0, 2.5, 4.0):
        assert ga.lattice_orbit_count(R) == lattice_brute(R)


def test_psl2z_orbit_matches_lattice_count():
    for R in (4.0, 7.0, 10.0):
        ob = ga.orbit_ball(ga.psl2z(), R)
        assert not ob.truncated
        assert ob.N == ga.lattice_orbit_count(R)
    assert ga.lattice_orbit_count(12.0) == 244057    # frozen from the oracle


def test_orbit_ball_invariants():
    ob = ga.orbit_ball(ga.schottky(0.8), 8.0)
    grid = np.linspace(0, 8, 50)
    c = ob.count(grid)
    assert c[0] >= 1 and np.all(np.diff(c) >= 0)
    X = ob.elements
    # dedup is idempotent: no two stored points coincide
    D = ga.schottky(0.8).orbit_distances(X)
    np.fill_diagonal(D, np.inf)
    assert D.min() > 1e-3
    with pytest.raises(ValueError):
        ga.orbit_ball(ga.psl2z(), 0.0)


def test_truncation_flag_and_refusal():
    ob = ga.orbit_ball(ga.psl2z(), 8.0, word_length_cap=5)
    assert ob.truncated
    assert ob.N < ga.lattice_orbit_count(8.0)
    with pytest.raises(ga.TruncatedError):
        ga.entropy(ob, (4, 8))
    with pytest.raises(ValueError):
        ga.entropy(ga.orbit_ball(ga.psl2z(), 5.0), (3, 6))


def test_entropy_psl2z_and_base_change():
    e0 = ga.entropy(ga.orbit_ball(ga.psl2z(), 10.0), (5, 10))
    e1 = ga.entropy(ga.orbit_ball(ga.psl2z(base=0.31 + 1.7j), 10.0), (5, 10))
    assert e0.slope == pytest.approx(1.0, abs=0.15)
    assert abs(e0.slope - e1.slope) <= 0.1
    assert e0.band[0] <= e0.slope <= e0.band[1]


def test_cyclic_entropy_decays():
    ob = ga.orbit_ball(ga.cyclic(), 40.0)
    slopes = [ga.entropy(ob, (R / 2, R)).slope for R in (10, 20, 40)]
    assert slopes[0] > slopes[1] > slopes[2] >= 0
    assert slopes[2] < 0.05


def test_schottky_entropy_sweep():
    slopes = [ga.entropy(ga.orbit_ball(ga.schottky(t), 14.0), (7, 14)).slope for t in (0.5, 0.7, 0.9)]
    assert all(0 < s < 1 for s in slopes)
    # smaller t: smaller, more separated isometric circles, slower growth
    assert slopes[0] < slopes[1] < slopes[2]


def test_schottky_from_circles():
    m = ga.schottky_from_circles([(ga.Circle(-0.6, 0.3), ga.Circle(0.6, 0.3))])
    assert len(m.generators) == 2
    assert np.allclose(m.generators[0].matrix.real, [[2, 0.9], [10 / 3, 2]])
    # the outside of the first circle goes to the inside of the second
    z = uhp_act(m.generators[0].matrix.real, -0.6 + 0.31 * np.exp(1j * np.linspace(0.1, 3, 20)))
    assert np.all(np.abs(z - 0.6) < 0.3)
    with pytest.raises(ga.GroupError):
        ga.schottky_from_circles([(ga.Circle(-0.2, 0.3), ga.Circle(0.2, 0.3))])
    with pytest.raises(ga.GroupError):
        ga.schottky(1.0)


# -- limit sets


def test_cyclic_limit_set_is_axis_endpoints():
    pts = ga.limit_set_sample(ga.cyclic(), 6)
    phi = (1 + np.sqrt(5)) / 2
    ends = np.array([phi, -1 / phi]) + 0j
    expect = (ends - 1j) / (ends + 1j)
    assert len(pts) == 2
    assert np.allclose(np.sort_complex(pts), np.sort_complex(expect))


def test_limit_set_warnings_and_errors():
    with pytest.warns(RuntimeWarning):
        pts = ga.limit_set_sample(ga.psl2z(), 1)
    assert len(pts) == 0
    with pytest.raises(ValueError):
        ga.limit_set_sample(ga.psl2z(), 0)


def test_limit_set_lies_on_circle_and_is_invariant():
    m = ga.schottky(0.8)
    pts = ga.limit_set_sample(m, 6, seed=1)
    assert np.allclose(np.abs(pts), 1)
    assert np.array_equal(np.sort_complex(pts), np.sort_complex(ga.limit_set_sample(m, 6, seed=2)))
    # images of limit points under generators are limit points (up to sampling depth)
    img, _ = ga.apply_boundary(m, m.generators[0], pts)
    deep = ga.limit_set_sample(m, 8)
    gap = np.abs(img[:, None] - deep[None, :]).min(axis=1)
    assert np.median(gap) < 1e-3


def test_schottky_box_dimension_matches_entropy():
    m = ga.schottky(0.8)
    e = ga.entropy(ga.orbit_ball(m, 16.0), (8, 16)).slope
    pts = ga.limit_set_sample(m, 8)
    s = np.geomspace(1e-3, 1e-1, 9)
    dim = loglog_slope(s, box_counts(np.c_[pts.real, pts.imag], s))
    assert abs(dim - e) <= 0.1


def test_cocompact_limit_set_fills_circle():
    pts = ga.limit_set_sample(ga.bolza(), 3)
    sp = ga.boundary_space(pts, 1)
    # depth 3 leaves gaps of a few hundredths, so stay above that scale
    s = np.geomspace(0.05, 0.5, 8)
    assert loglog_slope(s, net_counts(sp, s)) == pytest.approx(1.0, abs=0.15)


# -- triples


def test_separated_triple_identity():
    m = ga.schottky(0.8)
    tri = np.exp(2j * np.pi * np.array([0, 1, 2]) / 3)
    res = ga.separate_triple(m, tri, 3)
    assert res.separation >= res.input_separation - 1e-12
    assert res.input_separation == pytest.approx(np.sqrt(3))
    with pytest.raises(ValueError):
        ga.separate_triple(m, tri, 0)


def clustered_triples(pts, count, rng, spread=0.05):
    out = []
    while len(out) < count:
        x = pts[rng.integers(len(pts))]
        near = pts[(np.abs(pts - x) < spread) & (pts != x)]
        if len(near) < 2:
            continue
        pair = rng.choice(near, size=2, replace=False)
        out.append(np.r_[x, pair])
    return out


def test_schottky_triples_uniformly_separated():
    m = ga.schottky(0.8)
    pts = ga.limit_set_sample(m, 7)
    ball = ga.enumerate_elements(m, max_length=6)
    rng = np.random.default_rng(8)
    res = [ga.separate_triple(m, t, 6, ball=ball) for t in clustered_triples(pts, 100, rng)]
    before = np.array([r.input_separation for r in res])
    after = np.array([r.separation for r in res])
    assert np.all(after >= before)
    # a single delta_0 works for every clustered triple
    assert after.min() >= 0.1
    assert before.min() < 1e-3


def test_tau_separating_words_saturate():
    m = ga.schottky(0.8)
    rng = np.random.default_rng(9)
    tri = clustered_triples(ga.limit_set_sample(m, 6), 1, rng, spread=0.02)[0]
    ball = ga.enumerate_elements(m, max_length=9)
    counts = [ga.separate_triple(m, tri, b, tau=0.3, ball=ball).count_above_tau for b in range(3, 10)]
    assert np.all(np.diff(counts) >= 0)
    assert counts[-1] == counts[-2] == counts[-3] > 0


# -- elevator


def test_elevator_unit_scale():
    m = ga.triangle(2, 3, 7)
    pts = np.exp(2j * np.pi * np.arange(400) / 400)
    res = ga.conformal_elevator(m, pts, 0, 2.0, 2.0, ball=ga.WordBall(
        np.eye(2, dtype=complex)[None], np.zeros(1, int), np.zeros(1), False))
    assert res.C_i == pytest.approx(2.0) and res.C_ii == pytest.approx(2.0)
    assert res.C_iv is None
    with pytest.raises(ValueError, match="r/8"):
        ga.conformal_elevator(m, pts[::40], 0, 0.01, 2.0, word_budget=2)
    with pytest.raises(ValueError):
        ga.conformal_elevator(m, pts, 0, 0.1, 1.5, word_budget=2)


def test_elevator_constants_uniform():
    m = ga.triangle(2, 3, 7)
    ball = ga.elevator_ball(m, 1e-2)
    rng = np.random.default_rng(10)
    rows = []
    for k in range(12):
        p = np.exp(1j * rng.uniform(0, 2 * np.pi))
        r = 10 ** rng.uniform(-2, -1)
        pts = ga.elevator_sample(p, r)
        c = ga.conformal_elevator(m, pts, int(np.argmin(np.abs(pts - p))), r, 8.0, ball=ball)
        rows.append([c.C_i, c.C_ii, c.c_iii, c.C_iv])
    rows = np.array(rows)
    assert np.all(np.isfinite(rows)) and np.all(rows > 0)
    assert np.all(rows.max(axis=0) / rows.min(axis=0) <= 10)


def test_elevator_far_set_shrinks_like_one_over_L():
    m = ga.triangle(2, 3, 7)
    ball = ga.elevator_ball(m, 1e-3)
    p, r = np.exp(0.4j), 2e-3
    pts = ga.elevator_sample(p, r, n_local=80)
    ip = int(np.argmin(np.abs(pts - p)))
    Ls = [2, 4, 8, 16, 32, 64]
    certs = [ga.conformal_elevator(m, pts, ip, r, L, ball=ball) for L in Ls]
    assert len({c.element.tobytes() for c in certs}) == 1    # g does not depend on L
    civ = np.array([c.C_iv for c in certs])
    assert civ.max() / civ.min() <= 4


# -- rough isometries


def test_rough_isometry_trivial_cases():
    sp = FiniteMetricSpace(np.abs(np.subtract.outer(np.arange(10.0), np.arange(10.0))))
    assert ga.rough_isometry_defect(sp, sp) == ga.RoughIsometryDefect(1.0, 0.0)
    rep = ga.rough_isometry_defect(sp, sp.scaled(2.0))
    assert rep.lam == pytest.approx(2.0) and rep.k == 0.0
    with pytest.raises(ValueError):
        ga.rough_isometry_defect(sp, sp, correspondence=[0, 1])


@pytest.mark.parametrize("base,kmax", [(1j, 1e-9), (0.3 + 0.8j, 2.0)])
def test_orbit_map_of_axis_translation(base, kmax):
    ell = 1.1
    m = ga.cyclic(ell, base=base)
    g = m.generators[0].matrix
    ns = np.arange(-10, 11)
    mats = np.array([np.linalg.matrix_power(g if n >= 0 else np.linalg.inv(g), abs(n)) for n in ns])
    orbit = FiniteMetricSpace(m.orbit_distances(mats), check_triangle=False)
    line = FiniteMetricSpace(ell * np.abs(np.subtract.outer(ns, ns)).astype(float))
    rep = ga.rough_isometry_defect(line, orbit)
    assert rep.lam == pytest.approx(1.0, abs=0.05)
    assert rep.k <= kmax
    # Phi(g x) vs g Phi(x): shifting the index by one is the group action on both sides
    pairs = [(i + 1, i + 1) for i in range(len(ns) - 1)]
    assert ga.rough_isometry_defect(line, orbit, equivariance_pairs=pairs).equivariance == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_parse_group_round_trip(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.uniform(0.5, 2, 3)
    d = (1 + b * c) / a
    m = ga.parse_group(f"{a},{b},{c},{d}")
    assert len(m.generators) == 2
    assert ga.parse_group("triangle:2,3,7").name == "triangle:2,3,7"
    with pytest.raises(ga.GroupError):
        ga.parse_group("nonsense")
