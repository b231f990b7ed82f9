"""k-ball covers, nerve graphs and chain distances d_k.

At level k a maximal e^{-eps k}-separated net is fixed in the (diameter one)
space, balls of radius 2 e^{-eps k} are put around the net points, and d_k(x, y)
is e^{-k} times the least number of balls in a chain from x to y in which
consecutive balls share a sample point.  For a snowflaked space d**eps the
values d_k(x, y) track d(x, y)**(1/eps) in a k-independent band.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import shortest_path

from .metric_core import FiniteMetricSpace, Net, bfs_hops_many, max_separated_net

MESH_FACTOR = 3.0      # k is resolved while e^{-eps k} >= MESH_FACTOR * mesh
PAIR_MESH_FACTOR = 10.0
LOWER_BOUND_PAIRS = 100


class ResolutionError(ValueError):
    pass


class ResolutionWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class KBallCover:
    parent: FiniteMetricSpace
    eps: float
    k: int
    net: Net
    ball_radius: float
    scale_factor: float           # parent = original * scale_factor
    membership: sparse.csr_matrix  # points x balls
    resolved: bool

    @property
    def separation(self) -> float:
        return self.net.separation

    def balls_of(self, i: int) -> np.ndarray:
        row = self.membership
        return row.indices[row.indptr[i]:row.indptr[i + 1]]

    def covers_everything(self) -> bool:
        return bool(np.all(np.diff(self.membership.indptr) > 0))


def resolved_kmax(space: FiniteMetricSpace, eps: float, factor: float = MESH_FACTOR) -> int:
    """Largest k with e^{-eps k} >= factor * mesh (diameter normalized)."""
    mesh = space.mesh() / space.diam
    if mesh <= 0:
        return 10**6
    return int(np.floor(-np.log(factor * mesh) / eps + 1e-12))


def build_cover(space: FiniteMetricSpace, eps: float, k: int, seed: int | None = None,
                inflation: float = 2.0) -> KBallCover:
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if k < 0:
        raise ValueError("k must be nonnegative")
    norm, factor = space.normalized()
    sep = float(np.exp(-eps * k))
    mesh = norm.mesh()
    if norm.n > 1:
        off = norm.dist[~np.eye(norm.n, dtype=bool)]
        if sep < off.min():
            warnings.warn(f"separation e^(-eps k) = {sep:.3g} is below the smallest sample "
                          f"distance; d_k at k={k} reflects the sample only", ResolutionWarning,
                          stacklevel=2)
    net = max_separated_net(norm, sep, seed)
    radius = inflation * sep
    rows, cols = [], []
    members = net.members
    for s in range(0, len(members), 512):
        blk = norm.dist[:, members[s:s + 512]] <= radius
        r, c = np.nonzero(blk)
        rows.append(r)
        cols.append(c + s)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    mem = sparse.csr_matrix((np.ones(len(rows), dtype=np.int32), (rows, cols)),
                            shape=(norm.n, len(members)))
    mem.sort_indices()
    return KBallCover(norm, float(eps), int(k), net, radius, factor, mem,
                      bool(sep >= MESH_FACTOR * mesh))


@dataclass(frozen=True, eq=False)
class NerveGraph:
    cover: KBallCover
    adjacency: sparse.csr_matrix
    degrees: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        a = sparse.triu(self.adjacency, 1).tocoo()
        return np.c_[a.row, a.col]

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max(initial=0))

    def is_cycle(self) -> bool:
        m = self.adjacency.shape[0]
        if m < 3 or not np.all(self.degrees == 2):
            return False
        hops = shortest_path(self.adjacency, unweighted=True, indices=0)
        return bool(np.all(np.isfinite(hops)))


def build_nerve(cover: KBallCover) -> NerveGraph:
    """Balls a, b are adjacent iff some sample point lies in both."""
    m = cover.membership
    shared = (m.T @ m).tocsr()
    shared.setdiag(0)
    shared.eliminate_zeros()
    adj = (shared > 0).astype(np.int8).tocsr()
    deg = np.diff(adj.indptr)
    return NerveGraph(cover, adj, deg)


@dataclass(frozen=True, eq=False)
class ChainDistanceTable:
    cover: KBallCover
    pairs: np.ndarray
    lengths: np.ndarray   # ball counts, -1 for unreachable

    @property
    def values(self) -> np.ndarray:
        v = self.lengths * np.exp(-self.cover.k)
        return np.where(self.lengths < 0, np.inf, v)

    def as_matrix(self, points) -> np.ndarray:
        """Matrix over ``points`` when the table holds all their pairs."""
        points = list(points)
        pos = {p: i for i, p in enumerate(points)}
        out = np.full((len(points), len(points)), np.nan)
        for (a, b), v in zip(self.pairs, self.values):
            if a in pos and b in pos:
                out[pos[a], pos[b]] = out[pos[b], pos[a]] = v
        return out


def _ball_hops(nerve: NerveGraph, sources) -> np.ndarray:
    d = shortest_path(nerve.adjacency, method="D", unweighted=True, indices=sources)
    return np.atleast_2d(d)


def _set_to_set(nerve, src_sets, dst_sets):
    """Least ball count of a chain from a ball in src_sets[i] to one in dst_sets[i]."""
    uniq = np.unique(np.concatenate(src_sets)) if src_sets else np.array([], int)
    row = {b: i for i, b in enumerate(uniq)}
    hops = _ball_hops(nerve, uniq) if len(uniq) else np.zeros((0, 0))
    out = np.empty(len(src_sets), dtype=int)
    for t, (a, b) in enumerate(zip(src_sets, dst_sets)):
        if len(a) == 0 or len(b) == 0:
            out[t] = -1
            continue
        h = hops[[row[x] for x in a]][:, b].min()
        out[t] = -1 if not np.isfinite(h) else int(h) + 1
    return out


def chain_distance(nerve: NerveGraph, pairs) -> ChainDistanceTable:
    cover = nerve.cover
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    src = [cover.balls_of(i) for i in pairs[:, 0]]
    dst = [cover.balls_of(j) for j in pairs[:, 1]]
    if any(len(s) == 0 for s in src + dst):
        raise ValueError("queried point not covered by any ball")
    return ChainDistanceTable(cover, pairs, _set_to_set(nerve, src, dst))


def all_pairs(points) -> np.ndarray:
    pts = np.asarray(points, dtype=int)
    i, j = np.triu_indices(len(pts))
    return np.c_[pts[i], pts[j]]


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesnowflakeReport:
    eps: float
    k_window: tuple
    pairs: np.ndarray
    pair_dist: np.ndarray        # input metric, diameter normalized
    target: np.ndarray           # comparison values d^{1/eps} (or supplied reference)
    chain_lengths: dict          # k -> ball counts per pair
    in_band: dict                # k -> mask of pairs admitted at level k
    band: tuple
    per_k_band: dict             # k -> (C_low, C_high)
    mesh: float
    resolved_kmax: int
    net_sizes: dict
    max_degree: dict
    lower_bound: dict = field(default_factory=dict)
    refinement_monotone_fraction: float = float("nan")

    @property
    def band_ratio(self) -> float:
        return self.band[1] / self.band[0]

    def per_k_ratio(self) -> dict:
        return {k: hi / lo for k, (lo, hi) in self.per_k_band.items()}

    def d_k(self, k) -> np.ndarray:
        return self.chain_lengths[k] * np.exp(-k)


def sample_pairs(space: FiniteMetricSpace, budget: int, seed: int, min_dist: float = 0.0,
                 max_dist: float = np.inf) -> np.ndarray:
    """Seeded distinct pairs i < j with min_dist <= d(i, j) <= max_dist."""
    rng = np.random.default_rng(seed)
    n = space.n
    ii, jj = np.triu_indices(n, 1)
    total = len(ii)
    if total <= 4 * budget or total <= 200_000:
        d = space.dist[ii, jj]
        ok = np.flatnonzero((d >= min_dist) & (d <= max_dist))
        pick = rng.choice(ok, size=min(budget, len(ok)), replace=False)
        return np.c_[ii[pick], jj[pick]]
    chosen, seen = [], set()
    tries = 0
    while len(chosen) < budget and tries < 200 * budget:
        tries += 1
        a, b = sorted(rng.integers(0, n, 2))
        if a == b or (a, b) in seen:
            continue
        if min_dist <= space.dist[a, b] <= max_dist:
            seen.add((a, b))
            chosen.append((a, b))
    return np.array(chosen, dtype=int).reshape(-1, 2)


def desnowflake(space: FiniteMetricSpace, eps: float, k_window=None, pair_budget: int = 500,
                seed: int = 0, reference=None, inflation: float = 2.0,
                lower_bound_pairs: int = LOWER_BOUND_PAIRS) -> DesnowflakeReport:
    """Chain distances over a window of levels compared with d**(1/eps).

    ``reference`` (a distance matrix) replaces d**(1/eps) as the comparison
    metric when the generator knows the pre-snowflake metric; the band is
    scale invariant so its normalization does not matter.
    """
    norm, factor = space.normalized()
    kmax = resolved_kmax(norm, eps)
    if k_window is None:
        k_window = (max(0, kmax - 3), kmax)
    kmin, khi = int(k_window[0]), int(k_window[1])
    if kmin > khi:
        raise ValueError("empty k window")
    if khi > kmax or kmax < 0:
        raise ResolutionError(
            f"k={khi} is not resolved: e^(-eps k) must stay >= {MESH_FACTOR:g} x mesh "
            f"({norm.mesh():.4g} after normalizing), which allows k <= {kmax}")
    mesh = norm.mesh()
    pairs = sample_pairs(norm, pair_budget, seed, min_dist=PAIR_MESH_FACTOR * mesh)
    if len(pairs) == 0:
        raise ResolutionError("no pair is at least 10 x mesh apart")
    d = norm.dist[pairs[:, 0], pairs[:, 1]]
    if reference is None:
        target = d ** (1.0 / eps)
    else:
        ref = np.asarray(reference, dtype=float)
        target = ref[pairs[:, 0], pairs[:, 1]]

    lengths, masks, per_k, sizes, degs, lower = {}, {}, {}, {}, {}, {}
    sub = np.random.default_rng(seed + 1).permutation(len(pairs))[:lower_bound_pairs]
    for k in range(kmin, khi + 1):
        cover = build_cover(norm, eps, k, seed, inflation)
        nerve = build_nerve(cover)
        table = chain_distance(nerve, pairs)
        lengths[k] = table.lengths
        masks[k] = (d > cover.separation) & (table.lengths > 0)
        sizes[k] = len(cover.net)
        degs[k] = nerve.max_degree
        if masks[k].any():
            r = table.values[masks[k]] / target[masks[k]]
            per_k[k] = (float(r.min()), float(r.max()))
        lower[k] = _lower_bound_check(norm, eps, k, pairs[sub], table.lengths[sub], inflation)
    if not per_k:
        raise ResolutionError("no sampled pair is farther apart than the net separation")
    band = (min(v[0] for v in per_k.values()), max(v[1] for v in per_k.values()))
    mono = _refinement_fraction(lengths, masks)
    return DesnowflakeReport(float(eps), (kmin, khi), pairs, d, target, lengths, masks, band,
                             per_k, mesh, kmax, sizes, degs, lower, mono)


def _lower_bound_check(norm, eps, k, pairs, chain_lengths, inflation):
    """Chains of length l give discrete 2*inflation*e^{-eps k}-paths of length <= l.

    Checks that on every pair and fits the discrete-path constant
    c = min path / (d/step)^{1/eps}; then d_k >= c * (2*inflation)^{-1/eps} d^{1/eps}.
    """
    step = 2 * inflation * np.exp(-eps * k)
    holds, c = True, np.inf
    srcs = np.unique(pairs[:, 0])
    rows = [np.flatnonzero(pairs[:, 0] == s) for s in srcs]
    hops_all = bfs_hops_many(norm.dist, srcs, step, [pairs[r, 1] for r in rows])
    for hops, src, rr in zip(hops_all, srcs, rows):
        for t in rr:
            dst = pairs[t, 1]
            if hops[dst] < 0:
                continue
            if chain_lengths[t] < hops[dst]:
                holds = False
            dxy = norm.dist[src, dst]
            if dxy > step:
                c = min(c, hops[dst] / (dxy / step) ** (1.0 / eps))
    coeff = c * (2 * inflation) ** (-1.0 / eps) if np.isfinite(c) else float("nan")
    return {"step": float(step), "chain_ge_path": holds, "path_constant": float(c),
            "dk_lower_coefficient": float(coeff)}


def _refinement_fraction(lengths, masks):
    ks = sorted(lengths)
    good = tot = 0
    for a, b in zip(ks, ks[1:]):
        m = masks[a] & masks[b]
        good += int(np.sum(lengths[b][m] >= lengths[a][m]))
        tot += int(m.sum())
    return good / tot if tot else float("nan")


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelComparisonReport:
    eps: float
    m: int
    k: int
    pairs: np.ndarray
    chain_lengths: np.ndarray
    C_prime: float


def level_comparison_check(space: FiniteMetricSpace, eps: float, m: int, k: int,
                           pair_budget: int = 200, seed: int = 0,
                           inflation: float = 2.0) -> LevelComparisonReport:
    """Chains of k-balls joining B(x, e^{-eps m}) to B(y, e^{-eps m}).

    Pairs are sampled with d(x, y) <= e^{-eps(m-1)}; the fitted C' is the
    largest chain length divided by e^{k-m}.
    """
    if m > k:
        raise ValueError("need m <= k")
    norm, _ = space.normalized()
    kmax = resolved_kmax(norm, eps)
    if k > kmax:
        raise ResolutionError(f"k={k} exceeds the resolved range k <= {kmax}")
    cover = build_cover(norm, eps, k, seed, inflation)
    nerve = build_nerve(cover)
    rad = np.exp(-eps * m)
    pairs = sample_pairs(norm, pair_budget, seed, min_dist=0.0,
                         max_dist=np.exp(-eps * (m - 1)))
    mem = cover.membership

    def touching(i):
        near = np.flatnonzero(norm.dist[i] <= rad)
        return np.unique(mem[near].indices)

    src = [touching(i) for i in pairs[:, 0]]
    dst = [touching(j) for j in pairs[:, 1]]
    lengths = _set_to_set(nerve, src, dst)
    ok = lengths > 0
    cp = float(lengths[ok].max() / np.exp(k - m)) if ok.any() else float("nan")
    return LevelComparisonReport(float(eps), int(m), int(k), pairs, lengths, cp)
