"""Finite metric spaces, cross-ratios, snowflakes, nets and regularity fits.

Everything here works on a dense, symmetric distance matrix.  The
:class:`FiniteMetricSpace` is the common input type for the rest of the
package.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import shortest_path
from scipy.spatial.distance import cdist

#: Triangle inequality is checked by default only up to this many points
#: (the check is cubic).
TRIANGLE_AUTO_LIMIT = 1500
TRIANGLE_RTOL = 1e-9


class MetricError(ValueError):
    """Raised when a distance matrix is not a valid finite metric."""


class QuadrupleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """A finite metric space given by its distance matrix.

    ``check_triangle=None`` checks the triangle inequality when the space has
    at most ``TRIANGLE_AUTO_LIMIT`` points; pass ``False`` to skip it for
    metrics that are valid by construction.
    """

    dist: np.ndarray
    coords: np.ndarray | None = None
    label: str = ""
    check_triangle: bool | None = field(default=None, repr=False)
    diam: float = field(init=False)

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise MetricError(f"distance matrix must be square, got shape {d.shape}")
        n = d.shape[0]
        if n == 0:
            raise MetricError("empty space")
        if not np.all(np.isfinite(d)):
            raise MetricError("distances must be finite")
        if np.any(np.diag(d) != 0):
            raise MetricError("diagonal must be zero")
        if not np.array_equal(d, d.T):
            if np.allclose(d, d.T, rtol=1e-12, atol=0):
                d = 0.5 * (d + d.T)
            else:
                raise MetricError("distance matrix is not symmetric")
        off = ~np.eye(n, dtype=bool)
        if n > 1 and np.any(d[off] <= 0):
            i, j = np.argwhere((d <= 0) & off)[0]
            raise MetricError(f"points {i} and {j} are at non-positive distance")
        diam = float(d.max())
        check = self.check_triangle
        if check is None:
            check = n <= TRIANGLE_AUTO_LIMIT
        if check and n > 2:
            bad = triangle_violation(d, tol=TRIANGLE_RTOL * diam)
            if bad is not None:
                raise MetricError("triangle inequality fails at (i, j, k) = %s" % (bad,))
        d.setflags(write=False)
        coords = self.coords
        if coords is not None:
            coords = np.array(coords, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            if coords.shape[0] != n:
                raise MetricError("coordinate payload does not match point count")
            coords.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "diam", diam)

    def __len__(self):
        return self.dist.shape[0]

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def scaled(self, factor: float, label: str | None = None) -> "FiniteMetricSpace":
        return FiniteMetricSpace(self.dist * factor, self.coords,
                                 self.label if label is None else label,
                                 check_triangle=False)

    def normalized(self) -> tuple["FiniteMetricSpace", float]:
        """Return a copy rescaled to diameter 1 and the factor applied."""
        if self.n < 2 or self.diam == 1.0:
            return self, 1.0
        factor = 1.0 / self.diam
        return self.scaled(factor), factor

    def subspace(self, idx) -> "FiniteMetricSpace":
        idx = np.asarray(idx, dtype=int)
        coords = None if self.coords is None else self.coords[idx]
        return FiniteMetricSpace(self.dist[np.ix_(idx, idx)], coords, self.label,
                                 check_triangle=False)

    def mesh(self) -> float:
        """Largest nearest-neighbour distance in the sample."""
        if self.n < 2:
            return 0.0
        return float(nearest_neighbour_distances(self.dist).max())


def nearest_neighbour_distances(dist: np.ndarray, chunk: int = 1024) -> np.ndarray:
    n = dist.shape[0]
    out = np.empty(n)
    for s in range(0, n, chunk):
        block = dist[s:s + chunk].copy()
        rows = np.arange(block.shape[0])
        block[rows, rows + s] = np.inf
        out[s:s + chunk] = block.min(axis=1)
    return out


def triangle_violation(dist: np.ndarray, tol: float = 0.0):
    """First triple (i, j, k) with d(i, k) > d(i, j) + d(j, k) + tol, or None."""
    n = dist.shape[0]
    for j in range(n):
        slack = dist[:, j][:, None] + dist[j, :][None, :] + tol - dist
        if slack.min() < 0:
            i, k = np.unravel_index(np.argmin(slack), slack.shape)
            return int(i), j, int(k)
    return None


def space_from_points(points, label: str = "", check_triangle: bool | None = False,
                      metric=None) -> FiniteMetricSpace:
    """Euclidean (or ``metric(points) -> matrix``) space on a point cloud."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if metric is None:
        d = euclidean_matrix(pts)
    else:
        d = metric(pts)
    return FiniteMetricSpace(d, pts, label, check_triangle=check_triangle)


def euclidean_matrix(pts: np.ndarray) -> np.ndarray:
    return cdist(pts, pts)


# ---------------------------------------------------------------------------
# cross-ratios


@dataclass(frozen=True)
class Quadruple:
    i1: int
    i2: int
    i3: int
    i4: int

    def __post_init__(self):
        if len({self.i1, self.i2, self.i3, self.i4}) != 4:
            raise QuadrupleError(f"quadruple indices must be distinct: {tuple(self)}")

    def __iter__(self):
        return iter((self.i1, self.i2, self.i3, self.i4))

    def swapped(self) -> "Quadruple":
        return Quadruple(self.i2, self.i1, self.i3, self.i4)


def cross_ratio(space: FiniteMetricSpace, q) -> float:
    """d(x1,x3) d(x2,x4) / (d(x1,x4) d(x2,x3))."""
    if not isinstance(q, Quadruple):
        q = Quadruple(*q)
    d = space.dist
    a, b, c, e = q
    return float(d[a, c] * d[b, e] / (d[a, e] * d[b, c]))


def snowflake(space: FiniteMetricSpace, eps: float) -> FiniteMetricSpace:
    """The metric d**eps.  Exponents above 1 are rejected."""
    if not 0 < eps <= 1:
        raise ValueError(f"snowflake exponent must lie in (0, 1], got {eps}")
    if eps == 1:
        return space
    label = f"{space.label}^{eps:g}" if space.label else f"snowflake({eps:g})"
    return FiniteMetricSpace(space.dist ** eps, space.coords, label,
                             check_triangle=space.check_triangle)


# ---------------------------------------------------------------------------
# nets


@dataclass(frozen=True, eq=False)
class Net:
    parent: FiniteMetricSpace
    members: np.ndarray
    separation: float

    def __len__(self):
        return len(self.members)

    def is_separated(self) -> bool:
        sub = self.parent.dist[np.ix_(self.members, self.members)]
        off = ~np.eye(len(self.members), dtype=bool)
        return bool(np.all(sub[off] >= self.separation))

    def is_maximal(self) -> bool:
        """Every parent point is within (open) separation of some member."""
        near = self.parent.dist[self.members].min(axis=0)
        return bool(np.all(near < self.separation))


def max_separated_net(space: FiniteMetricSpace, sep: float, seed: int | None = None) -> Net:
    """Greedy maximal ``sep``-separated subset.

    Points are visited in index order when ``seed`` is None, otherwise in a
    seeded random order.
    """
    if sep <= 0:
        raise ValueError("separation must be positive")
    n = space.n
    order = np.arange(n) if seed is None else np.random.default_rng(seed).permutation(n)
    d = space.dist
    nearest = np.full(n, np.inf)
    members = []
    for i in order:
        if nearest[i] >= sep:
            members.append(i)
            np.minimum(nearest, d[i], out=nearest)
    return Net(space, np.asarray(members, dtype=int), float(sep))


# ---------------------------------------------------------------------------
# distortion


@dataclass(frozen=True)
class DistortionReport:
    map_label: str
    linear_constant_C: float
    worst_quadruple: Quadruple | None
    sample_count: int
    exhaustive: bool


# For a 4-set (p, q, r, s) the three pair-products are
# M1 = d(p,r)d(q,s), M2 = d(p,s)d(q,r), M3 = d(p,q)d(r,s); every ordered
# cross-ratio is some M_X / M_Y.  _ORDERINGS[X][Y] realises M_X / M_Y.
_ORDERINGS = {
    (0, 1): (0, 1, 2, 3), (1, 0): (0, 1, 3, 2),
    (2, 1): (0, 2, 1, 3), (1, 2): (0, 2, 3, 1),
    (2, 0): (0, 3, 1, 2), (0, 2): (0, 3, 2, 1),
}


def _pair_products(d, quads):
    p, q, r, s = quads.T
    return np.stack([d[p, r] * d[q, s], d[p, s] * d[q, r], d[p, q] * d[r, s]], axis=1)


def _check_pair(source, target, correspondence):
    if source.n != target.n:
        raise ValueError(f"point counts differ: {source.n} vs {target.n}")
    n = source.n
    if correspondence is None:
        return np.arange(n)
    corr = np.asarray(correspondence, dtype=int)
    if corr.shape != (n,) or not np.array_equal(np.sort(corr), np.arange(n)):
        raise ValueError("correspondence must be a bijection of point indices")
    return corr


def sample_quadruples(n: int, count: int, seed: int) -> np.ndarray:
    """``count`` distinct unordered 4-subsets of range(n), sorted rows."""
    total = comb(n, 4)
    if count >= total:
        return np.array(list(combinations(range(n), 4)), dtype=int).reshape(-1, 4)
    rng = np.random.default_rng(seed)
    rows = np.empty((0, 4), dtype=int)
    while len(rows) < count:
        need = count - len(rows)
        draw = rng.integers(0, n, size=(int(need * 1.3) + 16, 4))
        draw.sort(axis=1)
        ok = np.all(np.diff(draw, axis=1) > 0, axis=1)
        rows = np.unique(np.vstack([rows, draw[ok]]), axis=0)
    # unique() sorts rows; reshuffle so truncation stays uniform
    rows = rows[rng.permutation(len(rows))[:count]]
    return rows


def iter_quadruples(n: int, budget: int, seed: int, chunk: int = 200_000):
    """Yield blocks of unordered 4-subsets: all of them if C(n,4) <= budget."""
    total = comb(n, 4)
    if total <= budget:
        it = combinations(range(n), 4)
        while True:
            block = np.fromiter((x for t in _take(it, chunk) for x in t), dtype=int)
            if block.size == 0:
                return
            yield block.reshape(-1, 4)
    else:
        rows = sample_quadruples(n, budget, seed)
        for s in range(0, len(rows), chunk):
            yield rows[s:s + chunk]


def _take(it, k):
    for _ in range(k):
        try:
            yield next(it)
        except StopIteration:
            return


def qm_distortion(source: FiniteMetricSpace, target: FiniteMetricSpace,
                  correspondence=None, quadruple_budget: int = 10**6, seed: int = 0,
                  map_label: str = "") -> DistortionReport:
    """Linear cross-ratio distortion constant C of the map source -> target.

    C is the maximum over ordered quadruples of target cross-ratio divided by
    source cross-ratio.  All 4-subsets are used when there are at most
    ``quadruple_budget`` of them, otherwise a seeded sample of that size.
    """
    corr = _check_pair(source, target, correspondence)
    n = source.n
    if n < 4:
        return DistortionReport(map_label, 1.0, None, 0, True)
    ds, dt = source.dist, target.dist[np.ix_(corr, corr)]
    best, worst, count = -np.inf, None, 0
    for quads in iter_quadruples(n, quadruple_budget, seed):
        u = _pair_products(dt, quads) / _pair_products(ds, quads)
        hi, lo = u.argmax(axis=1), u.argmin(axis=1)
        ratio = u[np.arange(len(u)), hi] / u[np.arange(len(u)), lo]
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best = float(ratio[k])
            order = _ORDERINGS.get((int(hi[k]), int(lo[k])), (0, 1, 2, 3))
            worst = Quadruple(*(int(quads[k][o]) for o in order))
        count += len(quads)
    return DistortionReport(map_label, max(best, 1.0), worst, count,
                            count == comb(n, 4))


def bilipschitz_distortion(source: FiniteMetricSpace, target: FiniteMetricSpace,
                           correspondence=None) -> float:
    corr = _check_pair(source, target, correspondence)
    if source.n < 2:
        return 1.0
    dt = target.dist[np.ix_(corr, corr)]
    iu = np.triu_indices(source.n, 1)
    r = dt[iu] / source.dist[iu]
    return float(max(r.max(), (1.0 / r).max(), 1.0))


# ---------------------------------------------------------------------------
# Ahlfors regularity


@dataclass(frozen=True)
class RegularityFit:
    dimension_alpha: float
    constant_C: float
    scales: list
    fitted_slope: float
    consistent: bool

    @property
    def radii(self):
        return [r for r, _ in self.scales]

    @property
    def counts(self):
        return [c for _, c in self.scales]


def net_counts(space: FiniteMetricSpace, radii, seed: int | None = None) -> list[int]:
    return [len(max_separated_net(space, r, seed)) for r in radii]


def box_counts(coords, sides, offset: float = 0.0) -> list[int]:
    """Number of occupied grid cubes of each side length."""
    x = np.atleast_2d(np.asarray(coords, dtype=float))
    return [len(np.unique(np.floor(x / s + offset).astype(np.int64), axis=0)) for s in sides]


def loglog_slope(radii, counts) -> float:
    """Slope of log count against log(1/r)."""
    x = -np.log(np.asarray(radii, dtype=float))
    y = np.log(np.asarray(counts, dtype=float))
    if len(x) < 2:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def ahlfors_fit(space: FiniteMetricSpace, alpha: float, scale_grid, seed: int | None = None,
                slope_tol: float = 0.25) -> RegularityFit:
    """Fit the two-sided constant of N(r) ~ (r/diam)^-alpha over a radius grid.

    N(r) is the size of a maximal r-net, the counting-measure stand-in for
    the measure of a ball.  ``consistent`` is False when the log-log slope of
    the counts is further than ``slope_tol`` from ``alpha``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    radii = sorted({float(r) for r in scale_grid}, reverse=True)
    if not radii:
        raise ValueError("empty scale grid")
    if radii[-1] <= 0 or radii[0] > space.diam * (1 + 1e-12):
        raise ValueError("radii must lie in (0, diam]")
    counts = net_counts(space, radii, seed)
    nominal = (np.asarray(radii) / space.diam) ** (-alpha)
    c = np.asarray(counts, dtype=float)
    constant = float(max(np.max(c / nominal), np.max(nominal / c), 1.0))
    slope = loglog_slope(radii, counts) if len(radii) > 1 else float("nan")
    consistent = bool(len(radii) < 2 or abs(slope - alpha) <= slope_tol)
    return RegularityFit(alpha, constant, list(zip(radii, counts)), slope, consistent)


# ---------------------------------------------------------------------------
# discrete paths


def bfs_hops(dist: np.ndarray, source, step: float, targets=None) -> np.ndarray:
    """Hop counts in the graph joining points at distance <= step (-1: unreachable).

    With ``targets`` the search stops once all of them are reached; other
    entries may then be left at -1.
    """
    n = dist.shape[0]
    thr = step * (1 + 1e-12)
    hops = np.full(n, -1, dtype=int)
    frontier = np.unique(np.atleast_1d(source))
    hops[frontier] = 0
    unvisited = np.setdiff1d(np.arange(n), frontier)
    pending = None if targets is None else np.setdiff1d(targets, frontier)
    level = 0
    while len(frontier) and len(unvisited):
        if pending is not None and len(pending) == 0:
            break
        level += 1
        reach = np.zeros(len(unvisited), dtype=bool)
        for s in range(0, len(frontier), 256):
            reach |= (dist[np.ix_(frontier[s:s + 256], unvisited)] <= thr).any(axis=0)
        frontier = unvisited[reach]
        hops[frontier] = level
        unvisited = unvisited[~reach]
        if pending is not None:
            pending = pending[hops[pending] < 0]
    return hops


def bfs_hops_many(dist: np.ndarray, sources, step: float, targets=None,
                  sparse_limit: int = 4_000_000) -> np.ndarray:
    """Hop counts from each source (rows), as in :func:`bfs_hops`.

    Sparse graph search is used when the step graph has few edges, dense
    frontier sweeps otherwise.
    """
    sources = np.atleast_1d(np.asarray(sources, dtype=int))
    thr = step * (1 + 1e-12)
    nnz = int(np.count_nonzero(dist <= thr))
    if nnz <= sparse_limit:
        ii, jj = np.nonzero(dist <= thr)
        keep = ii != jj
        g = sparse.csr_matrix((np.ones(int(keep.sum())), (ii[keep], jj[keep])),
                              shape=dist.shape)
        h = shortest_path(g, method="D", unweighted=True, indices=sources)
        h = np.atleast_2d(h)
        out = np.where(np.isfinite(h), h, -1).astype(int)
        return out
    if targets is None:
        targets = [None] * len(sources)
    return np.array([bfs_hops(dist, s, step, t) for s, t in zip(sources, targets)])


def min_delta_path(space: FiniteMetricSpace, i: int, j: int, step: float) -> int | None:
    """Length of the shortest discrete step-path from i to j, or None."""
    if step <= 0:
        raise ValueError("step must be positive")
    if i == j:
        return 0
    h = int(bfs_hops(space.dist, i, step, targets=[j])[j])
    return None if h < 0 else h


def discrete_path_constant(space: FiniteMetricSpace, eps: float, steps, pairs) -> float:
    """min over pairs/steps of path length / (d/step)^(1/eps), pairs with d > step."""
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    best = np.inf
    for step in steps:
        for src in np.unique(pairs[:, 0]):
            dsts = pairs[pairs[:, 0] == src, 1]
            hops = bfs_hops(space.dist, src, step, targets=dsts)
            for dst in dsts:
                dxy = space.dist[src, dst]
                if dxy <= step or hops[dst] < 0:
                    continue
                best = min(best, hops[dst] / (dxy / step) ** (1.0 / eps))
    return float(best)
