"""Gromov products, four-point hyperbolicity, chain inequalities and visual metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .metric_core import FiniteMetricSpace

SQRT2 = float(np.sqrt(2.0))


@dataclass(frozen=True, eq=False)
class BasedSpace:
    space: FiniteMetricSpace
    base: int

    def __post_init__(self):
        if not 0 <= self.base < self.space.n:
            raise IndexError(f"base {self.base} outside 0..{self.space.n - 1}")


@dataclass(frozen=True, eq=False)
class GromovTable:
    based: BasedSpace | None
    products: np.ndarray

    @property
    def n(self):
        return self.products.shape[0]


def gromov_from_dist(dist: np.ndarray, p: int) -> np.ndarray:
    d = np.asarray(dist, dtype=float)
    dp = d[:, p]
    return 0.5 * (dp[:, None] + dp[None, :] - d)


def gromov_products(based: BasedSpace) -> GromovTable:
    g = gromov_from_dist(based.space.dist, based.base)
    g.setflags(write=False)
    return GromovTable(based, g)


# ---------------------------------------------------------------------------
# four-point condition


@dataclass(frozen=True)
class DeltaReport:
    delta: float
    worst_triple: tuple | None   # (x, y, z) realising the defect
    exhaustive: bool
    triples: int


def _products(obj) -> np.ndarray:
    if isinstance(obj, (GromovTable, BoundarySample)):
        return obj.products if isinstance(obj, GromovTable) else obj.gromov
    return np.asarray(obj, dtype=float)


def four_point_delta(table, sample_above: int = 2000, samples: int = 2_000_000,
                     seed: int = 0) -> DeltaReport:
    """Smallest delta >= 0 with (x,y) >= min((x,z),(y,z)) - delta on all triples.

    Exhaustive up to ``sample_above`` points; beyond that a seeded sample of
    ``samples`` triples, so the result is a lower bound.
    """
    G = _products(table)
    n = G.shape[0]
    if n < 3:
        raise ValueError("need at least 3 points")
    if n <= sample_above:
        best, arg = -np.inf, None
        for z in range(n):
            gz = G[:, z]
            defect = np.minimum(gz[:, None], gz[None, :]) - G
            defect[z, :] = -np.inf
            defect[:, z] = -np.inf
            k = int(np.argmax(defect))
            if defect.flat[k] > best:
                best = float(defect.flat[k])
                arg = (*np.unravel_index(k, defect.shape), z)
        return DeltaReport(max(best, 0.0), tuple(int(a) for a in arg), True, n * (n - 1) * (n - 2))
    rng = np.random.default_rng(seed)
    t = rng.integers(0, n, size=(samples, 3))
    t = t[(t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])]
    x, y, z = t.T
    defect = np.minimum(G[x, z], G[y, z]) - G[x, y]
    k = int(np.argmax(defect))
    return DeltaReport(max(float(defect[k]), 0.0), tuple(int(a) for a in t[k]), False, len(t))


# ---------------------------------------------------------------------------
# boundary samples


@dataclass(frozen=True, eq=False)
class BoundarySample:
    labels: list
    gromov: np.ndarray          # diagonal = inf
    source: str = "analytic"
    uncertainty: float = 0.0    # +- slack on every entry

    def __post_init__(self):
        g = np.array(self.gromov, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("gromov table must be square")
        np.fill_diagonal(g, np.inf)
        off = ~np.eye(len(g), dtype=bool)
        if not np.array_equal(g, g.T):
            raise ValueError("gromov table must be symmetric")
        if np.any(~np.isfinite(g[off])) or np.any(g[off] < 0):
            raise ValueError("off-diagonal boundary products must be finite and >= 0")
        g.setflags(write=False)
        object.__setattr__(self, "gromov", g)
        if len(self.labels) != len(g):
            object.__setattr__(self, "labels", list(range(len(g))))

    @property
    def n(self):
        return self.gromov.shape[0]

    @classmethod
    def from_disk(cls, z, labels=None) -> "BoundarySample":
        """Points of the unit circle (complex) seen from the disk centre.

        e^{-(xi, eta)_0} = |xi - eta| / 2 in the curvature -1 disk.
        """
        z = np.asarray(z, dtype=complex)
        ch = np.abs(z[:, None] - z[None, :]) / 2
        with np.errstate(divide="ignore"):
            g = -np.log(np.minimum(ch, 1.0))
        return cls(labels or list(range(len(z))), g, "analytic: disk")

    @classmethod
    def from_sphere(cls, x, labels=None) -> "BoundarySample":
        """Unit vectors of S^n as boundary of the ball model, base at the centre."""
        x = np.asarray(x, dtype=float)
        ch = np.linalg.norm(x[:, None] - x[None], axis=2) / 2
        with np.errstate(divide="ignore"):
            g = -np.log(np.minimum(ch, 1.0))
        return cls(labels or list(range(len(x))), g, "analytic: ball")

    @classmethod
    def from_interior(cls, table: GromovTable, idx, delta: float) -> "BoundarySample":
        """Deep finite points standing in for their boundary limits (+- 2 delta)."""
        idx = np.asarray(idx, dtype=int)
        g = np.maximum(table.products[np.ix_(idx, idx)], 0)
        return cls(list(idx), g, "deep orbit", 2 * delta)


def ultrametric_tree_boundary(depth: int, branching: int = 2, eps_scale: float = 1.0):
    """Ends of a regular rooted tree cut at ``depth``: products = common-prefix length."""
    words = np.array(list(np.ndindex(*(branching,) * depth)))
    eq = words[:, None, :] == words[None, :, :]
    lcp = np.cumprod(eq, axis=2).sum(axis=2).astype(float) * eps_scale
    return BoundarySample(["".join(map(str, w)) for w in words], lcp, "analytic: tree")


def interval_boundary(n: int, eps: float) -> BoundarySample:
    """n equispaced points of [0, 1] with products -(1/eps) log|s - t|.

    The interval is then a visual boundary of parameter eps; it is used as a
    counterexample to the chain inequality when eps < sqrt(-kappa).
    """
    s = np.linspace(0, 1, n)
    with np.errstate(divide="ignore"):
        g = -np.log(np.abs(s[:, None] - s[None, :])) / eps
    return BoundarySample(list(range(n)), g, f"analytic: interval^{eps:g}")


# ---------------------------------------------------------------------------
# chain inequality


@dataclass(frozen=True)
class ACuReport:
    kappa: float
    c: float                      # max over evaluated chains
    profile: dict                 # chain length n -> max over chains of that length
    random_c: float               # the same quantity over random chains only
    worst: tuple                  # (source, target, length)
    sources: int
    random_chains: int
    growing: bool                 # profile increases with log n: violation signature
    growth_slope: float


def acu_check(table, kappa: float, budget: int = 64, seed: int = 0, max_len: int = 32,
              random_chains: int | None = None, growth_tol: float = 0.05) -> ACuReport:
    """Fit c in (x_0, x_n) >= min_i (x_{i-1}, x_i) - log(n)/sqrt(-kappa) - c.

    For up to ``budget`` seeded start points the best chain of every length
    is found by a bottleneck (max-min) dynamic programme; random chains are
    evaluated as a second, independent route and can only come out lower.
    The result is a lower bound for the true constant.
    """
    if kappa >= 0:
        raise ValueError("kappa must be negative")
    if budget <= 0:
        raise ValueError("budget must be positive")
    G = _products(table).copy()
    n = G.shape[0]
    np.fill_diagonal(G, -np.inf)         # consecutive repeats never help
    coef = 1.0 / np.sqrt(-kappa)
    rng = np.random.default_rng(seed)
    sources = np.sort(rng.choice(n, size=min(budget, n), replace=False))
    lengths = np.arange(1, max_len + 1)
    direct = G.copy()
    np.fill_diagonal(direct, np.inf)
    profile = {int(L): -np.inf for L in lengths}
    worst, best = None, -np.inf
    for s in sources:
        B = G[s].copy()                  # best bottleneck over chains of length 1
        for L in lengths:
            if L > 1:
                B = np.max(np.minimum(B[:, None], G), axis=0)
            val = B - np.log(L) * coef - direct[s]
            val[s] = -np.inf             # closed loops: (x_0, x_n) infinite on the boundary
            j = int(np.argmax(val))
            if val[j] > profile[int(L)]:
                profile[int(L)] = float(val[j])
            if val[j] > best:
                best, worst = float(val[j]), (int(s), j, int(L))
    rc = random_chains if random_chains is not None else 20 * budget
    rbest = -np.inf
    for _ in range(rc):
        L = int(rng.integers(1, max_len + 1))
        walk = rng.integers(0, n, size=L + 1)
        if np.any(walk[1:] == walk[:-1]) or walk[0] == walk[-1]:
            continue
        m = np.min(G[walk[:-1], walk[1:]])
        rbest = max(rbest, float(m - np.log(L) * coef - G[walk[0], walk[-1]]))
    ls = np.array(sorted(profile))
    vals = np.array([profile[k] for k in ls])
    slope = float(np.polyfit(np.log(ls), vals, 1)[0]) if len(ls) > 1 else 0.0
    return ACuReport(float(kappa), best, profile, rbest, worst, len(sources), rc,
                     bool(slope > growth_tol), slope)


# ---------------------------------------------------------------------------
# visual metrics


@dataclass(frozen=True)
class VisualMetricReport:
    eps: float
    rho: np.ndarray
    d_eps: np.ndarray
    K: float
    applicable: bool
    lower_ok: bool      # rho / 4 <= d_eps everywhere
    upper_ok: bool      # d_eps <= rho everywhere
    threshold: float = SQRT2


def quasi_metric_constant(rho: np.ndarray, chunk: int = 64) -> float:
    """max over distinct x, y, z of rho(x,y) / max(rho(x,z), rho(z,y))."""
    n = rho.shape[0]
    best = 1.0
    for s in range(0, n, chunk):
        r = rho[:, s:s + chunk]                        # rho(x, z) for z in block
        m = np.maximum(r[:, None, :], r[None, :, :])   # max(rho(x,z), rho(y,z))
        zs = np.arange(s, min(s + chunk, n))
        with np.errstate(divide="ignore", invalid="ignore"):
            q = rho[:, :, None] / m
        q[zs, :, np.arange(len(zs))] = 0
        q[:, zs, np.arange(len(zs))] = 0
        q = np.nan_to_num(q, nan=0.0, posinf=0.0)
        best = max(best, float(q.max()))
    return best


def visual_metric(boundary: BoundarySample, eps: float, threshold: float = SQRT2,
                  rtol: float = 1e-12) -> VisualMetricReport:
    if eps <= 0:
        raise ValueError("eps must be positive")
    G = boundary.gromov
    rho = np.exp(-eps * G)
    np.fill_diagonal(rho, 0.0)
    K = quasi_metric_constant(rho)
    d = shortest_path(rho, method="D", directed=False)
    upper = bool(np.all(d <= rho * (1 + rtol)))
    lower = bool(np.all(d >= rho / 4 * (1 - rtol)))
    return VisualMetricReport(float(eps), rho, d, K, bool(K <= threshold), lower, upper, threshold)


@dataclass(frozen=True)
class VisualSweep:
    eps: list
    K: list
    applicable: list
    lower_ok: list
    bracket: tuple    # (last applicable eps, first non-applicable eps)


def visual_sweep(boundary: BoundarySample, eps_grid, threshold: float = SQRT2) -> VisualSweep:
    reps = [visual_metric(boundary, e, threshold) for e in sorted(eps_grid)]
    app = [r.applicable for r in reps]
    eps = [r.eps for r in reps]
    last_ok = max((e for e, a in zip(eps, app) if a), default=None)
    first_bad = min((e for e, a in zip(eps, app) if not a), default=None)
    return VisualSweep(eps, [r.K for r in reps], app, [r.lower_ok for r in reps],
                       (last_ok, first_bad))


# ---------------------------------------------------------------------------
# convergence at infinity


@dataclass(frozen=True)
class ConvergenceReport:
    convergent_a: bool
    convergent_b: bool | None
    equivalent: bool | None
    tail_a: np.ndarray
    tail_b: np.ndarray | None
    cross: np.ndarray | None


def _tail_minima(G, a, b=None):
    """m_j = min over tail indices i, k >= j (i != k when a is b) of G[a_i, b_k]."""
    L = len(a)
    out = np.empty(L - 1)
    for j in range(L - 1):
        if b is None:
            sub = G[np.ix_(a[j:], a[j:])].copy()
            np.fill_diagonal(sub, np.inf)
        else:
            sub = G[np.ix_(a[j:], b[j:])]
        out[j] = sub.min()
    return out


def _grows(m, window, min_growth):
    w = m[-window:]
    return bool(np.all(np.diff(w) >= -1e-9) and w[-1] - w[0] >= min_growth)


def convergence_at_infinity(table, seq_a, seq_b=None, window: int = 5,
                            min_growth: float = 1.0) -> ConvergenceReport:
    """Tail test for (x_n, x_m)_p -> infinity and for equivalence of two sequences.

    The tail minima of the pairwise products must be nondecreasing over the
    last ``window`` positions and rise by at least ``min_growth`` there.
    """
    G = _products(table)
    a = np.asarray(seq_a, dtype=int)
    if len(a) < window + 2:
        raise ValueError(f"sequence shorter than window + 2 = {window + 2}")
    ta = _tail_minima(G, a)
    ca = _grows(ta, window, min_growth)
    if seq_b is None:
        return ConvergenceReport(ca, None, None, ta, None, None)
    b = np.asarray(seq_b, dtype=int)
    if len(b) != len(a):
        raise ValueError("sequences must have equal length")
    tb = _tail_minima(G, b)
    cb = _grows(tb, window, min_growth)
    cross = _tail_minima(G, a, b)
    eq = ca and cb and _grows(cross, window, min_growth)
    return ConvergenceReport(ca, cb, eq, ta, tb, cross)
