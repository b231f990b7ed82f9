import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmrigid import group_actions as ga
from qmrigid.generators import (
    GeneratorError, GeneratorSpec, circle_snowflake, generate, hyperbolic_disk, koch_vertices,
    sphere_snowflake, tree_metric,
)


def test_octagon():
    sp = generate(GeneratorSpec("circle_snowflake", {"N": 8, "eps": 1}))
    # vertices of the regular octagon, distances straight from coordinates
    ang = np.pi / 4 * np.arange(8)
    assert np.allclose(sp.coords, np.c_[np.cos(ang), np.sin(ang)], atol=1e-15)
    direct = np.hypot(*(sp.coords[:, None, :] - sp.coords[None, :, :]).transpose(2, 0, 1))
    assert np.allclose(sp.dist, direct, atol=1e-15)
    assert sp.dist[0, 4] == 2.0
    assert sp.dist[0, 2] == pytest.approx(np.sqrt(2), rel=1e-15)


def test_circle_snowflake_exponent():
    plain = circle_snowflake(50)
    half = circle_snowflake(50, 0.5)
    assert np.allclose(half.dist, plain.dist ** 0.5, rtol=1e-14)


def test_koch_level_one():
    sp = generate(GeneratorSpec("koch_curve", {"level": 1}))
    assert sp.n == 5
    assert sp.dist[0, 4] == pytest.approx(1.0, abs=1e-15)
    steps = [sp.dist[i, i + 1] for i in range(4)]
    assert sum(steps) == pytest.approx(4 / 3, abs=1e-15)
    assert np.allclose(sp.coords[2], [0.5, np.sqrt(3) / 6])


@pytest.mark.parametrize("level", range(6))
def test_koch_polyline(level):
    v = koch_vertices(level)
    seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
    assert len(v) == 4 ** level + 1
    assert np.allclose(seg, 3.0 ** -level, rtol=1e-12)
    assert np.allclose(v[[0, -1]], [[0, 0], [1, 0]], atol=1e-14)


def test_schottky_from_two_circles():
    m = generate(GeneratorSpec("schottky", {"circles": [[[-0.6, 0.3], [0.6, 0.3]]]}))
    assert len(m.generators) == 2
    ga.check_disjoint([ga.Circle(-0.6, 0.3), ga.Circle(0.6, 0.3)])
    with pytest.raises(GeneratorError, match="^circles:"):
        generate(GeneratorSpec("schottky", {"circles": [[[-0.2, 0.3], [0.2, 0.3]]]}))


@pytest.mark.parametrize("kind,params,field", [
    ("circle_snowflake", {"N": 1}, "N"),
    ("circle_snowflake", {}, "N"),
    ("circle_snowflake", {"N": 10, "eps": 0}, "eps"),
    ("sphere_snowflake", {"N": 10, "eps": 1.5}, "eps"),
    ("koch_curve", {"level": 9}, "level"),
    ("koch_curve", {"level": "two"}, "level"),
    ("euclidean_cloud", {"n": 10}, "seed"),
    ("tree_metric", {"n": 1, "seed": 0}, "n"),
    ("hyperbolic_disk", {"n": 10, "seed": 0, "radius": -1}, "radius"),
    ("schottky", {"t": 1.5}, "t"),
    ("schottky", {"circles": "nope"}, "circles"),
    ("cyclic", {"ell": -1}, "ell"),
    ("triangle", {"pqr": [2, 3, 6]}, "pqr"),
])
def test_validation_names_the_field(kind, params, field):
    with pytest.raises(GeneratorError, match=f"^{field}:"):
        generate(GeneratorSpec(kind, params))


def test_unknown_kind():
    with pytest.raises(GeneratorError, match="^kind:"):
        GeneratorSpec("torus", {})


def test_hyperbolic_disk_matches_textbook_formula():
    sp = hyperbolic_disk(60, 3.0, seed=4)
    z = sp.coords[:, 0] + 1j * sp.coords[:, 1]
    a = np.abs(z[:, None] - z[None, :]) ** 2
    b = np.outer(1 - np.abs(z) ** 2, 1 - np.abs(z) ** 2)
    assert np.allclose(sp.dist, np.arccosh(1 + 2 * a / b), atol=1e-9)


def test_sphere_snowflake_is_metric():
    sp = sphere_snowflake(80, 0.6, seed=3)
    assert np.allclose(np.linalg.norm(sp.coords, axis=1), 1)
    d = sp.dist
    assert np.all(d[:, :, None] <= d[:, None, :] + d.T[None, :, :] + 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["euclidean_cloud", "tree_metric", "hyperbolic_disk"]),
       st.integers(0, 2**31), st.integers(3, 40))
def test_seeded_generators_deterministic(kind, seed, n):
    spec = GeneratorSpec(kind, {"n": n, "seed": seed})
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.dist, b.dist)
    if kind == "tree_metric":
        # integer weights give integer path lengths
        assert np.array_equal(a.dist, np.round(a.dist))
        assert np.array_equal(a.dist, tree_metric(n, seed).dist)
