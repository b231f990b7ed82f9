"""Synthetic example spaces and group models, deterministic per seed."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from . import group_actions as ga
from .metric_core import FiniteMetricSpace, euclidean_matrix, snowflake


class GeneratorError(ValueError):
    pass


def circle_snowflake(N: int, eps: float = 1.0) -> FiniteMetricSpace:
    """N equispaced points of the unit circle with the chordal metric raised to eps."""
    t = 2 * np.pi * np.arange(N) / N
    pts = np.c_[np.cos(t), np.sin(t)]
    # chord = 2 sin(|t_i - t_j| / 2) is exact where coordinates would round
    dt = np.abs(t[:, None] - t[None, :])
    d = 2 * np.sin(np.minimum(dt, 2 * np.pi - dt) / 2)
    np.fill_diagonal(d, 0.0)
    space = FiniteMetricSpace(d, pts, f"circle N={N}", check_triangle=False)
    return space if eps == 1 else snowflake(space, eps)


def sphere_points(N: int) -> np.ndarray:
    """Fibonacci lattice on S^2."""
    k = np.arange(N) + 0.5
    z = 1 - 2 * k / N
    phi = np.pi * (1 + np.sqrt(5)) * k
    r = np.sqrt(1 - z * z)
    return np.c_[r * np.cos(phi), r * np.sin(phi), z]


def sphere_snowflake(N: int, eps: float = 1.0, seed: int | None = None) -> FiniteMetricSpace:
    """Points of S^2 (Fibonacci lattice, or uniform random with a seed), chordal^eps."""
    if seed is None:
        pts = sphere_points(N)
    else:
        pts = np.random.default_rng(seed).normal(size=(N, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    space = FiniteMetricSpace(euclidean_matrix(pts), pts, f"sphere N={N}", check_triangle=False)
    return space if eps == 1 else snowflake(space, eps)


def koch_vertices(level: int) -> np.ndarray:
    """Vertices of the level-n Koch polyline from (0,0) to (1,0), in order."""
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    rot = np.array([[0.5, -np.sqrt(3) / 2], [np.sqrt(3) / 2, 0.5]])
    for _ in range(level):
        a, b = pts[:-1], pts[1:]
        v = (b - a) / 3
        p1 = a + v
        p2 = p1 + v @ rot.T
        p3 = a + 2 * v
        out = np.stack([a, p1, p2, p3], axis=1).reshape(-1, 2)
        pts = np.vstack([out, pts[-1:]])
    return pts


def koch_curve(level: int) -> FiniteMetricSpace:
    pts = koch_vertices(level)
    return FiniteMetricSpace(euclidean_matrix(pts), pts, f"koch level={level}", check_triangle=False)


def euclidean_cloud(n: int, dim: int = 2, seed: int = 0) -> FiniteMetricSpace:
    pts = np.random.default_rng(seed).uniform(size=(n, dim))
    return FiniteMetricSpace(euclidean_matrix(pts), pts, f"cloud n={n}", check_triangle=False)


def random_tree_edges(n: int, seed: int, max_weight: int = 5):
    """Random recursive tree with integer edge weights."""
    rng = np.random.default_rng(seed)
    parent = np.array([rng.integers(0, i) for i in range(1, n)], dtype=int)
    w = rng.integers(1, max_weight + 1, size=n - 1)
    return np.arange(1, n), parent, w


def tree_metric(n: int, seed: int = 0, max_weight: int = 5) -> FiniteMetricSpace:
    """Path metric on a random weighted tree (all vertices)."""
    if n < 2:
        raise GeneratorError("n: a tree metric needs at least 2 vertices")
    child, parent, w = random_tree_edges(n, seed, max_weight)
    A = csr_matrix((w.astype(float), (child, parent)), shape=(n, n))
    d = shortest_path(A, directed=False)
    return FiniteMetricSpace(d, None, f"tree n={n}", check_triangle=False)


def hyperbolic_disk_points(n: int, radius: float, seed: int = 0):
    """Hyperbolic polar coordinates (r, theta) uniform by area within the given radius."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=n)
    r = np.arccosh(1 + u * (np.cosh(radius) - 1))
    return r, rng.uniform(0, 2 * np.pi, size=n)


def hyperbolic_disk(n: int, radius: float = 6.0, seed: int = 0) -> FiniteMetricSpace:
    """Random points of the curvature -1 disk with the exact hyperbolic distance.

    d = 2 asinh(|z - w| cosh(r_z/2) cosh(r_w/2)) with z = tanh(r/2) e^{i theta}
    avoids the cancellation in 1 - |z|^2.
    """
    r, th = hyperbolic_disk_points(n, radius, seed)
    z = np.tanh(r / 2) * np.exp(1j * th)
    ch = np.cosh(r / 2)
    d = 2 * np.arcsinh(np.abs(z[:, None] - z[None, :]) * ch[:, None] * ch[None, :])
    np.fill_diagonal(d, 0.0)
    return FiniteMetricSpace(0.5 * (d + d.T), np.c_[z.real, z.imag], f"H2 n={n}",
                             check_triangle=False)


# ---------------------------------------------------------------------------
# declarative generation from a GeneratorSpec

KINDS = ("circle_snowflake", "sphere_snowflake", "koch_curve", "euclidean_cloud", "tree_metric",
         "hyperbolic_disk", "schottky", "psl2z", "cyclic", "bolza", "triangle")


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeneratorError(f"kind: unknown generator {self.kind!r}; choose from {', '.join(KINDS)}")


def _need(params, name, cast, check=None, msg=""):
    if name not in params:
        raise GeneratorError(f"{name}: missing parameter")
    try:
        v = cast(params[name])
    except (TypeError, ValueError) as e:
        raise GeneratorError(f"{name}: {e}") from e
    if check is not None and not check(v):
        raise GeneratorError(f"{name}: {msg or 'invalid value'} (got {v!r})")
    return v


def _eps(params):
    return _need(params, "eps", float, lambda e: 0 < e <= 1, "must lie in (0, 1]") if "eps" in params else 1.0


def _count(params, name="N", lo=2):
    return _need(params, name, int, lambda n: n >= lo, f"must be >= {lo}")


def generate(spec: GeneratorSpec):
    k, p = spec.kind, dict(spec.params)
    if k == "circle_snowflake":
        return circle_snowflake(_count(p), _eps(p))
    if k == "sphere_snowflake":
        return sphere_snowflake(_count(p), _eps(p), p.get("seed"))
    if k == "koch_curve":
        return koch_curve(_need(p, "level", int, lambda v: 0 <= v <= 7, "must lie in 0..7"))
    if k == "euclidean_cloud":
        return euclidean_cloud(_count(p, "n"), int(p.get("dim", 2)), _need(p, "seed", int))
    if k == "tree_metric":
        return tree_metric(_count(p, "n"), _need(p, "seed", int), int(p.get("max_weight", 5)))
    if k == "hyperbolic_disk":
        radius = float(p.get("radius", 6.0))
        if radius <= 0:
            raise GeneratorError("radius: must be positive")
        return hyperbolic_disk(_count(p, "n"), radius, _need(p, "seed", int))
    if k == "schottky":
        if "circles" in p:
            try:
                pairs = [(ga.Circle(*a), ga.Circle(*b)) for a, b in p["circles"]]
            except (TypeError, ValueError) as e:
                raise GeneratorError(f"circles: expected [[[c1, r1], [c2, r2]], ...] ({e})") from e
            try:
                return ga.schottky_from_circles(pairs)
            except ga.GroupError as e:
                raise GeneratorError(f"circles: {e}") from e
        t = _need(p, "t", float, lambda v: 0 < v < 1, "must lie in (0, 1)")
        return ga.schottky(t)
    if k == "psl2z":
        return ga.psl2z()
    if k == "cyclic":
        ell = p.get("ell")
        if ell is not None and float(ell) <= 0:
            raise GeneratorError("ell: translation length must be positive")
        return ga.cyclic(None if ell is None else float(ell))
    if k == "bolza":
        return ga.bolza()
    if k == "triangle":
        pqr = p.get("pqr", (2, 3, 7))
        try:
            return ga.triangle(*map(int, pqr))
        except ga.GroupError as e:
            raise GeneratorError(f"pqr: {e}") from e
    raise GeneratorError(f"kind: {k}")  # pragma: no cover
