"""Mobius isometry groups of H^2 and H^3: orbits, growth, limit sets, boundary maps.

Every isometry is a 2x2 complex matrix of determinant one acting on the upper
half-space (real matrices for H^2).  For a base point p = A j,

    cosh d(gp, hp) = |A^-1 g^-1 h A|_F^2 / 2.

Boundary points are handled as spinors u in C^2; the chordal distance of the
images of u, v under M is 2 |det[u, v]| / (|Mu| |Mv|), which stays accurate
for long words.  The boundary circle of H^2 is shown in the disk picture,
obtained from the real line by the unitary Cayley matrix U.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .metric_core import DistortionReport, FiniteMetricSpace, qm_distortion

# relative tolerance for elements and orbit points, chordal for boundary points;
# distinct elements at distance d differ relatively by ~e^-d, so the
# enumeration is reliable up to d ~ 20
DEDUP_TOL = 1e-9
# unitary Cayley matrix: upper half-plane -> disk, z -> (z - i) / (z + i)
CAYLEY = np.array([[1, -1j], [1, 1j]]) / np.sqrt(2)


class GroupError(ValueError):
    pass


class TruncatedError(RuntimeError):
    pass


def normalize_det(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return m / np.sqrt(det)[..., None, None]


def canonical_sign(m: np.ndarray) -> np.ndarray:
    """Fix the +-1 ambiguity: the largest entry gets positive real part."""
    flat = m.reshape(-1, 4)
    k = np.argmax(np.abs(flat) + 1e-12 * np.arange(4)[::-1], axis=1)
    lead = flat[np.arange(len(flat)), k]
    sgn = np.where((lead.real < 0) | ((lead.real == 0) & (lead.imag < 0)), -1.0, 1.0)
    return m * sgn.reshape(m.shape[:-2] + (1, 1))


def inv2(m: np.ndarray) -> np.ndarray:
    """Inverse of determinant-one 2x2 matrices."""
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out


def frob2(m: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(m) ** 2, axis=(-2, -1))


def dist_from_frob2(f2) -> np.ndarray:
    """Hyperbolic distance from |X|_F^2 = 2 cosh d, written to keep precision near 0."""
    return 2 * np.arcsinh(np.sqrt(np.maximum(np.asarray(f2) / 4 - 0.5, 0)))


@dataclass(frozen=True, eq=False)
class MobiusIsometry:
    matrix: np.ndarray
    dim: int = 1            # boundary dimension: 1 for H^2, 2 for H^3
    name: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise GroupError("isometries are 2x2 matrices")
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) < 1e-300:
            raise GroupError("singular matrix")
        m = canonical_sign(normalize_det(m))
        if self.dim == 1 and np.max(np.abs(m.imag)) > 1e-12 * max(1.0, np.max(np.abs(m))):
            raise GroupError("H^2 isometries must be real matrices")
        if self.dim == 1:
            m = m.real.astype(complex)
        object.__setattr__(self, "matrix", m)

    @property
    def det(self) -> complex:
        m = self.matrix
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]

    def __matmul__(self, other: "MobiusIsometry") -> "MobiusIsometry":
        return MobiusIsometry(self.matrix @ other.matrix, self.dim)

    def inverse(self) -> "MobiusIsometry":
        return MobiusIsometry(inv2(self.matrix), self.dim, self.name + "^-1" if self.name else "")

    def is_identity(self, tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix, np.eye(2), atol=tol))

    def same_as(self, other, tol: float = DEDUP_TOL) -> bool:
        a, b = self.matrix, other.matrix
        s = max(1.0, np.abs(a).max())
        return bool(np.allclose(a, b, atol=tol * s) or np.allclose(a, -b, atol=tol * s))

    @property
    def trace(self) -> complex:
        return self.matrix[0, 0] + self.matrix[1, 1]

    def translation_length(self) -> float:
        """2 log |lambda| for the larger eigenvalue; 0 for elliptic/parabolic."""
        ev = np.linalg.eigvals(self.matrix)
        return float(2 * np.log(np.max(np.abs(ev))))


@dataclass(frozen=True, eq=False)
class GroupActionModel:
    generators: list
    dim: int = 1
    base: complex | tuple = 1j     # upper half-plane point, or (z, t) in upper half-space
    name: str = ""
    _A: np.ndarray = field(init=False, repr=False)
    _gens: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gens = [g if isinstance(g, MobiusIsometry) else MobiusIsometry(g, self.dim)
                for g in self.generators]
        if not gens:
            raise GroupError("need at least one generator")
        for g in gens:
            if g.dim != self.dim:
                raise GroupError("generator dimension mismatch")
            if g.is_identity():
                raise GroupError("identity is not allowed as a generator")
        for g in gens:
            if not any(g.inverse().same_as(h) for h in gens):
                raise GroupError("generator list must be closed under inverses")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "_gens", np.array([g.matrix for g in gens]))
        if self.dim == 1:
            z = complex(self.base)
            if z.imag <= 0:
                raise GroupError("base point must lie in the upper half-plane")
            x, y = z.real, z.imag
        else:
            zc, y = self.base
            x = complex(zc)
            if y <= 0:
                raise GroupError("base point must lie in upper half-space")
        sy = np.sqrt(y)
        object.__setattr__(self, "_A", np.array([[sy, x / sy], [0, 1 / sy]], dtype=complex))

    @property
    def gens(self) -> np.ndarray:
        return self._gens

    @classmethod
    def with_inverses(cls, mats, dim=1, **kw) -> "GroupActionModel":
        gens = []
        for m in mats:
            g = MobiusIsometry(m, dim)
            gens.append(g)
            gi = g.inverse()
            if not gi.same_as(g):
                gens.append(gi)
        return cls(gens, dim, **kw)

    def with_base(self, base) -> "GroupActionModel":
        return GroupActionModel(self.generators, self.dim, base, self.name)

    def base_disk(self) -> complex:
        """Base point in the disk (dim 1) picture."""
        z = complex(self.base) if self.dim == 1 else complex(self.base[0]) + 1j * self.base[1]
        return (z - 1j) / (z + 1j)

    # -- distances

    def conj(self, mats):
        """X_g = A^-1 g A, an isometry moving the standard point j."""
        return inv2(self._A) @ mats @ self._A

    def distance_from_base(self, mats) -> np.ndarray:
        return dist_from_frob2(frob2(self.conj(mats)))

    def orbit_distances(self, mats) -> np.ndarray:
        """d(g_i p, g_j p) for a stack of elements."""
        X = self.conj(np.asarray(mats))
        Xi = inv2(X)
        M = np.einsum("iab,jbc->ijac", Xi, X)
        d = dist_from_frob2(frob2(M))
        np.fill_diagonal(d, 0.0)
        return 0.5 * (d + d.T)

    def boundary_matrix(self, mats) -> np.ndarray:
        """Matrices acting on boundary spinors (disk picture for dim 1)."""
        mats = np.asarray(mats)
        if self.dim == 1:
            return CAYLEY @ mats @ CAYLEY.conj().T
        return mats


# ---------------------------------------------------------------------------
# boundary points and spinors


def to_spinor(points, dim: int) -> np.ndarray:
    """Unit spinors for boundary points (complex unit numbers, or unit vectors in R^3)."""
    if dim == 1:
        z = np.asarray(points, dtype=complex).reshape(-1)
        if np.any(np.abs(np.abs(z) - 1) > 1e-12):
            raise ValueError("boundary points must lie on the unit circle")
        return np.c_[z, np.ones_like(z)] / np.sqrt(2)
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[1] != 3 or np.any(np.abs(np.linalg.norm(x, axis=1) - 1) > 1e-12):
        raise ValueError("boundary points must be unit vectors of R^3")
    up = x[:, 2] <= 0
    u = np.where(up[:, None], np.c_[x[:, 0] + 1j * x[:, 1], 1 - x[:, 2]],
                 np.c_[1 + x[:, 2], x[:, 0] - 1j * x[:, 1]])
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def from_spinor(u, dim: int) -> np.ndarray:
    u = np.atleast_2d(u)
    if dim == 1:
        z = u[:, 0] / u[:, 1]
        return z / np.abs(z)
    a, b = u[:, 0], u[:, 1]
    w = a * np.conj(b)
    s = np.abs(a) ** 2 + np.abs(b) ** 2
    return np.c_[2 * w.real, 2 * w.imag, np.abs(a) ** 2 - np.abs(b) ** 2] / s[:, None]


def spinor_chordal(u, v=None) -> np.ndarray:
    """Chordal distance matrix 2|det[u_i, v_j]| / (|u_i| |v_j|)."""
    v = u if v is None else v
    det = u[:, None, 0] * v[None, :, 1] - u[:, None, 1] * v[None, :, 0]
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    return 2 * np.abs(det) / (nu[:, None] * nv[None, :])


def boundary_space(points, dim: int, label: str = "") -> FiniteMetricSpace:
    u = to_spinor(points, dim)
    d = spinor_chordal(u)
    np.fill_diagonal(d, 0.0)
    coords = np.c_[np.real(points), np.imag(points)] if dim == 1 else np.asarray(points)
    return FiniteMetricSpace(0.5 * (d + d.T), coords, label, check_triangle=False)


def apply_boundary(model: GroupActionModel, g, points):
    """Images of boundary points under g, plus the image spinors (unnormalized)."""
    M = model.boundary_matrix(g.matrix if isinstance(g, MobiusIsometry) else g)
    u = to_spinor(points, model.dim)
    w = u @ M.T
    return from_spinor(w, model.dim), w


def boundary_action(model: GroupActionModel, g, points, quadruple_budget: int = 10**5,
                    seed: int = 0):
    """Images of boundary points and the chordal cross-ratio distortion of g."""
    images, w = apply_boundary(model, g, points)
    src = boundary_space(points, model.dim, "source")
    # det[Mu, Mv] = det[u, v], so the image distances need no subtraction
    u = to_spinor(points, model.dim)
    det = np.abs(u[:, None, 0] * u[None, :, 1] - u[:, None, 1] * u[None, :, 0])
    nw = np.linalg.norm(w, axis=1)
    dt = 2 * det / (nw[:, None] * nw[None, :])
    np.fill_diagonal(dt, 0.0)
    tgt = FiniteMetricSpace(0.5 * (dt + dt.T), None, "image", check_triangle=False)
    rep = qm_distortion(src, tgt, quadruple_budget=quadruple_budget, seed=seed,
                        map_label=getattr(g, "name", "") or "g")
    return images, rep


# ---------------------------------------------------------------------------
# word enumeration


def _window_dedup(key: np.ndarray, same, rtol: float = 1e-9, atol: float = 1e-12) -> np.ndarray:
    """Keep-mask removing later duplicates.

    Equal objects have (nearly) equal ``key``, so only neighbours in key order
    inside the tolerance window are handed to the exact test ``same(i, j)``.
    Of each duplicate class the lowest index survives.
    """
    n = len(key)
    order = np.argsort(key, kind="stable")
    ks = key[order]
    drop = np.zeros(n, dtype=bool)
    for k in range(1, n):
        near = ks[k:] - ks[:-k] <= atol + rtol * np.abs(ks[k:])
        if not near.any():
            break
        i, j = order[:-k][near], order[k:][near]
        hit = same(i, j)
        drop[np.maximum(i[hit], j[hit])] = True
    return ~drop


_W = np.random.default_rng(7).normal(size=(8, 8))
_W = _W + _W.T
_AUX = np.array([[1.13, 0.29 + 0.17j], [0.0, 1 / 1.13]])


def _element_key(mats) -> np.ndarray:
    """Generic sign-invariant quadratic form, scaled to O(1)."""
    v = mats.reshape(-1, 4)
    v = np.c_[v.real, v.imag]
    return np.einsum("ni,ij,nj->n", v, _W, v) / np.sum(v * v, axis=1)


def _point_key(model, mats) -> np.ndarray:
    """cosh d(q, gp) / cosh d(p, gp) for a fixed generic auxiliary point q."""
    return frob2(inv2(_AUX) @ mats @ model._A) / frob2(model.conj(mats))


def _same_element(mats, tol):
    """g = +-h up to a relative error; no cancellation, unlike testing g^-1 h = I."""
    def same(i, j):
        a, b = mats[i], mats[j]
        diff = np.minimum(np.abs(a - b).max(axis=(1, 2)), np.abs(a + b).max(axis=(1, 2)))
        return diff <= tol * np.abs(a).max(axis=(1, 2))
    return same


def _same_point(P, tol):
    """gp = hp iff (gA)(gA)^* = (hA)(hA)^*, compared relatively."""
    def same(i, j):
        return np.abs(P[i] - P[j]).max(axis=(1, 2)) <= tol * np.abs(P[i]).max(axis=(1, 2))
    return same


@dataclass(frozen=True, eq=False)
class WordBall:
    elements: np.ndarray      # (M, 2, 2)
    word_length: np.ndarray   # BFS layer of each element
    distance: np.ndarray      # d(p, g p)
    truncated: bool


def enumerate_elements(model: GroupActionModel, max_length: int | None = None,
                       radius: float | None = None, margin: float = 2.0,
                       max_elements: int = 5_000_000, tol: float = DEDUP_TOL) -> WordBall:
    """Breadth-first words in the generators, deduplicated as group elements.

    With ``radius``, words whose point leaves B(p, radius + margin) are not
    extended.  ``truncated`` is set when the length cap stopped a frontier
    that still had points inside the radius.
    """
    if max_length is None and radius is None:
        raise ValueError("give a word-length cap or a radius")
    eye = np.eye(2, dtype=complex)[None]
    layers = [eye]
    keys = [_element_key(eye)]
    dists = [np.zeros(1)]
    total = 1
    truncated = False
    level = 0
    gens = model.gens
    while True:
        frontier = layers[-1]
        if len(frontier) == 0:
            break
        if max_length is not None and level >= max_length:
            if radius is None or np.any(dists[-1] <= radius):
                truncated = radius is not None
            break
        cand = (frontier[:, None] @ gens[None]).reshape(-1, 2, 2)
        f2 = frob2(model.conj(cand))
        d = dist_from_frob2(f2)
        if radius is not None:
            keep = d <= radius + margin
            cand, d, f2 = cand[keep], d[keep], f2[keep]
        # Cayley-graph neighbours differ by at most one BFS layer, so new
        # elements are compared with the last two layers and each other
        ref = np.concatenate(layers[-2:])
        allm = np.concatenate([ref, cand])
        mask = _window_dedup(np.concatenate(keys[-2:] + [_element_key(cand)]),
                             _same_element(allm, tol))
        new = mask[len(ref):]
        cand, d, f2 = cand[new], d[new], f2[new]
        level += 1
        layers.append(cand)
        keys.append(_element_key(cand))
        dists.append(d)
        total += len(cand)
        if total > max_elements:
            truncated = True
            break
    lengths = np.concatenate([np.full(len(l), i) for i, l in enumerate(layers)])
    return WordBall(np.concatenate(layers), lengths, np.concatenate(dists), truncated)


@dataclass(frozen=True, eq=False)
class OrbitBall:
    radius: float
    distances: np.ndarray    # sorted d(p, y) for distinct orbit points y within radius
    truncated: bool
    elements: np.ndarray     # one element per orbit point
    margin: float = 2.0

    def count(self, r) -> np.ndarray:
        return np.searchsorted(self.distances, np.asarray(r, dtype=float), side="right")

    def counts(self, grid) -> list:
        return [(float(r), int(c)) for r, c in zip(grid, self.count(grid))]

    @property
    def N(self) -> int:
        return len(self.distances)


def orbit_ball(model: GroupActionModel, R: float, word_length_cap: int | None = None,
               margin: float = 2.0, max_elements: int = 5_000_000) -> OrbitBall:
    """Distinct orbit points within R of the base point."""
    if R <= 0:
        raise ValueError("R must be positive")
    wb = enumerate_elements(model, word_length_cap, R, margin, max_elements)
    inside = wb.distance <= R
    mats, d = wb.elements[inside], wb.distance[inside]
    X = mats @ model._A
    P = X @ np.conj(np.swapaxes(X, -1, -2))
    rep = _window_dedup(_point_key(model, mats), _same_point(P, DEDUP_TOL))
    mats, d = mats[rep], d[rep]
    order = np.argsort(d, kind="stable")
    return OrbitBall(float(R), d[order], wb.truncated, mats[order], margin)


def lattice_orbit_count(R: float) -> int:
    """Oracle for PSL(2,Z) with base i: #{g in SL(2,Z): |g|_F^2 <= 2 cosh R} / 4."""
    bound = 2 * np.cosh(R)
    lim = int(np.floor(np.sqrt(bound))) + 1
    count = 0
    for a in range(-lim, lim + 1):
        for b in range(-lim, lim + 1):
            rest = bound - a * a - b * b
            if rest < 0:
                continue
            cmax = int(np.floor(np.sqrt(rest)))
            c = np.arange(-cmax, cmax + 1)
            # a d - b c = 1 with c^2 + d^2 <= rest
            if a == 0:
                ok = (b * c == -1)
                dmax = np.sqrt(np.maximum(rest - c * c, 0))
                count += int(np.sum(ok * (2 * np.floor(dmax + 1e-9) + 1)))
            else:
                num = 1 + b * c
                ok = num % a == 0
                dd = num // a
                count += int(np.sum(ok & (c * c + dd * dd <= rest + 1e-9)))
    return count // 4


# ---------------------------------------------------------------------------
# entropy


@dataclass(frozen=True)
class EntropyEstimate:
    slope: float
    stderr: float
    window: tuple
    band: tuple
    radii: np.ndarray
    log_counts: np.ndarray


def entropy(orbit: OrbitBall, window=None, points: int = 25) -> EntropyEstimate:
    """Least-squares slope of log N(R) against R over the window."""
    if window is None:
        window = (orbit.radius / 2, orbit.radius)
    lo, hi = map(float, window)
    if hi > orbit.radius + 1e-12:
        raise ValueError(f"window reaches {hi} beyond the enumerated radius {orbit.radius}")
    if orbit.truncated:
        raise TruncatedError("orbit counts are truncated (lower bounds only); refusing to fit")
    if not lo < hi:
        raise ValueError("empty window")
    R = np.linspace(lo, hi, points)
    y = np.log(orbit.count(R).astype(float))
    A = np.c_[R, np.ones_like(R)]
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = max(len(R) - 2, 1)
    s2 = float(np.sum((y - A @ coef) ** 2)) / dof
    se = float(np.sqrt(s2 / np.sum((R - R.mean()) ** 2)))
    slope = max(float(coef[0]), 0.0)
    return EntropyEstimate(slope, se, (lo, hi), (slope - 2 * se, slope + 2 * se), R, y)


# ---------------------------------------------------------------------------
# limit sets


def reduced_words(n_gens: int, inverse_of: list, depth: int):
    """Index arrays of reduced words of each length 1..depth."""
    words = [np.arange(n_gens)[:, None]]
    for _ in range(depth - 1):
        w = words[-1]
        last = w[:, -1]
        nxt = []
        for s in range(n_gens):
            ok = inverse_of[last] != s
            nxt.append(np.c_[w[ok], np.full(ok.sum(), s)])
        words.append(np.vstack(nxt))
    return words


def inverse_table(model: GroupActionModel) -> np.ndarray:
    gens = model.generators
    return np.array([next(j for j, h in enumerate(gens) if g.inverse().same_as(h)) for g in gens])


def word_matrices(model: GroupActionModel, words: np.ndarray) -> np.ndarray:
    out = np.broadcast_to(np.eye(2, dtype=complex), (len(words), 2, 2)).copy()
    for k in range(words.shape[1]):
        out = out @ model.gens[words[:, k]]
    return out


def random_words(model: GroupActionModel, count: int, lengths=(1, 10), seed: int = 0):
    """Seeded random reduced words: (index arrays, matrices)."""
    rng = np.random.default_rng(seed)
    inv = inverse_table(model)
    words, mats = [], []
    for _ in range(count):
        L = int(rng.integers(lengths[0], lengths[1] + 1))
        w = [int(rng.integers(len(inv)))]
        while len(w) < L:
            s = int(rng.integers(len(inv)))
            if s != inv[w[-1]]:
                w.append(s)
        words.append(np.array(w))
        mats.append(word_matrices(model, np.array(w)[None])[0])
    return words, np.array(mats)


def attracting_points(model: GroupActionModel, mats: np.ndarray, tol: float = 1e-9):
    """Attracting fixed points (boundary picture) of the loxodromic elements."""
    M = model.boundary_matrix(mats)
    ev, vec = np.linalg.eig(M)
    big = np.argmax(np.abs(ev), axis=1)
    # classify from the trace: eig splits a parabolic double eigenvalue by ~sqrt(eps)
    tr = np.trace(mats, axis1=1, axis2=2)
    root = np.sqrt(tr * tr - 4 + 0j)
    lam = np.maximum(np.abs(tr + root), np.abs(tr - root)) / 2
    lox = lam * lam > 1 + tol
    u = vec[np.arange(len(vec)), :, big]
    return from_spinor(u[lox], model.dim), lox


def dedup_boundary(points, dim: int, tol: float = DEDUP_TOL) -> np.ndarray:
    pts = np.asarray(points)
    feat = np.c_[pts.real, pts.imag] if dim == 1 else pts
    drop = np.zeros(len(pts), dtype=bool)
    if len(pts) > 1:
        pairs = cKDTree(feat).query_pairs(tol, output_type="ndarray")
        if len(pairs):
            drop[pairs.max(axis=1)] = True
    return pts[~drop]


def limit_set_sample(model: GroupActionModel, depth: int, seed: int = 0) -> np.ndarray:
    """Attracting fixed points of all reduced words up to ``depth``, deduplicated.

    ``seed`` only shuffles the output order.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    inv = inverse_table(model)
    pts = []
    for w in reduced_words(len(model.generators), inv, depth):
        p, _ = attracting_points(model, word_matrices(model, w))
        pts.append(p)
    pts = np.concatenate(pts) if pts else np.array([])
    if len(pts) == 0:
        warnings.warn("no loxodromic word up to this depth; empty limit-set sample",
                      RuntimeWarning, stacklevel=2)
        return pts
    pts = dedup_boundary(pts, model.dim)
    return pts[np.random.default_rng(seed).permutation(len(pts))]


# ---------------------------------------------------------------------------
# triples


@dataclass(frozen=True)
class TripleSeparation:
    element: np.ndarray
    word_length: int
    separation: float          # min pairwise chordal distance of the images
    input_separation: float
    count_above_tau: int | None


def _image_separation(model, mats, points):
    M = model.boundary_matrix(mats)
    u = to_spinor(points, model.dim)
    w = np.einsum("mab,kb->mka", M, u)
    nw = np.linalg.norm(w, axis=2)
    det = u[:, None, 0] * u[None, :, 1] - u[:, None, 1] * u[None, :, 0]
    k = len(points)
    i, j = np.triu_indices(k, 1)
    d = 2 * np.abs(det[i, j])[None, :] / (nw[:, i] * nw[:, j])
    return d.min(axis=1)


def separate_triple(model: GroupActionModel, triple, word_budget: int, tau: float | None = None,
                    ball: WordBall | None = None) -> TripleSeparation:
    if word_budget <= 0:
        raise ValueError("word budget must be positive")
    pts = np.asarray(triple)
    if len(pts) != 3:
        raise ValueError("need exactly three points")
    ball = ball or enumerate_elements(model, max_length=word_budget)
    mats = ball.elements[ball.word_length <= word_budget]
    sep = _image_separation(model, mats, pts)
    best = int(np.argmax(sep))
    base = float(_image_separation(model, np.eye(2, dtype=complex)[None], pts)[0])
    cnt = None if tau is None else int(np.sum(sep >= tau))
    return TripleSeparation(mats[best], int(ball.word_length[ball.word_length <= word_budget][best]),
                            float(sep[best]), base, cnt)


# ---------------------------------------------------------------------------
# conformal elevator


@dataclass(frozen=True)
class ElevatorCertificate:
    p: int
    r: float
    L: float
    element: np.ndarray
    x2: int
    x3: int
    triple_separation: float
    C_i: float             # r d <~ d' <~ d / r everywhere
    C_ii: float            # d' ~ d / r on N = B(p, r)
    c_iii: float           # images of B(p, r/2) stay c away from images of Z \ N
    C_iv: float | None     # L * diam g(F), None when F is empty
    diam_gF: float | None

    def constants(self) -> dict:
        return {"C_i": self.C_i, "C_ii": self.C_ii, "c_iii": self.c_iii, "C_iv": self.C_iv}


def elevator_sample(p: complex, r: float, n_global: int = 720, n_local: int = 40,
                    spread: float = 4.0) -> np.ndarray:
    """Boundary circle sample: equispaced points plus points clustered at p on scales r/10..1."""
    t = 2 * np.pi * np.arange(n_global) / n_global
    th0 = np.angle(p)
    lin = np.linspace(-spread, spread, 8 * n_local + 1) * r
    logs = np.geomspace(r / 10, 1.0, n_local)
    offs = np.unique(np.r_[lin, logs, -logs])
    ang = np.unique(np.mod(np.r_[t, th0 + 2 * np.arcsin(np.clip(offs / 2, -1, 1))], 2 * np.pi))
    ang = ang[np.r_[True, np.diff(ang) > 1e-12]]
    z = np.exp(1j * ang)
    return z


def elevator_ball(model: GroupActionModel, r_min: float, extra: float = 3.0) -> WordBall:
    """Candidate elements for blowing up balls down to radius r_min:
    every element moving the base point at most log(1/r_min) + extra."""
    return enumerate_elements(model, radius=float(np.log(1 / r_min) + extra), margin=0.0)


def conformal_elevator(model: GroupActionModel, points, p_index: int, r: float, L: float,
                       word_budget: int | None = None, ball: WordBall | None = None,
                       tol_frac: float = 0.125) -> ElevatorCertificate:
    """Blow B(p, r) up to unit scale by a group element and measure the four properties.

    Candidates are the words of length <= word_budget, or a precomputed
    ``ball`` (see ``elevator_ball``).  The element chosen maximizes the
    smallest pairwise image distance of p and the sample points nearest to
    distance r/2 and r/4 from it.
    """
    pts = np.asarray(points)
    space = boundary_space(pts, model.dim)
    d = space.dist
    if not 0 < r <= space.diam * (1 + 1e-12):
        raise ValueError("need 0 < r <= diam")
    if L < 2:
        raise ValueError("need L >= 2")
    dp = d[p_index]
    picks = []
    for target in (r / 2, r / 4):
        err = np.abs(dp - target)
        j = int(np.argmin(err))
        if err[j] > tol_frac * r:
            raise ValueError(f"no sample point within r/8 of distance {target:.3g} from p")
        picks.append(j)
    x2, x3 = picks
    if ball is None:
        if word_budget is None:
            raise ValueError("give a word budget or a precomputed word ball")
        ball = enumerate_elements(model, max_length=word_budget)
    sep = _image_separation(model, ball.elements, pts[[p_index, x2, x3]])
    best = int(np.argmax(sep))
    g = ball.elements[best]
    _, w = apply_boundary(model, g, pts)
    u = to_spinor(pts, model.dim)
    det = np.abs(u[:, None, 0] * u[None, :, 1] - u[:, None, 1] * u[None, :, 0])
    nw = np.linalg.norm(w, axis=1)
    dimg = 2 * det / (nw[:, None] * nw[None, :])
    iu = np.triu_indices(len(pts), 1)
    q = dimg[iu] / d[iu]
    C_i = float(max(np.max(q * r), np.max(r / q)))
    inN = dp < r
    nn = np.flatnonzero(inN)
    if len(nn) >= 2:
        a, b = np.triu_indices(len(nn), 1)
        qn = dimg[nn[a], nn[b]] / d[nn[a], nn[b]]
        C_ii = float(max(np.max(qn * r), np.max(1 / (qn * r))))
    else:
        C_ii = float("nan")
    inner = np.flatnonzero(dp < r / 2)
    outer = np.flatnonzero(~inN)
    c_iii = float(dimg[np.ix_(inner, outer)].min()) if len(inner) and len(outer) else float("nan")
    far = np.flatnonzero(dp >= L * r)
    if len(far) >= 2:
        diam = float(dimg[np.ix_(far, far)].max())
        C_iv = L * diam
    else:
        diam, C_iv = None, None
    return ElevatorCertificate(int(p_index), float(r), float(L), g, x2, x3, float(sep[best]),
                               C_i, C_ii, c_iii, C_iv, diam)


# ---------------------------------------------------------------------------
# rough isometries


@dataclass(frozen=True)
class RoughIsometryDefect:
    lam: float
    k: float
    equivariance: float | None = None


def rough_isometry_defect(source: FiniteMetricSpace, target: FiniteMetricSpace,
                          correspondence=None, equivariance_pairs=None) -> RoughIsometryDefect:
    """Fit (lambda, k) with d/lambda - k <= d' <= lambda d + k on all pairs.

    lambda comes from the pairs at or above the median source distance, k is
    then the smallest additive slack.  ``equivariance_pairs`` lists target
    index pairs (Phi(g x), g Phi(x)) whose largest distance is reported.
    """
    n = source.n
    corr = np.arange(n) if correspondence is None else np.asarray(correspondence, dtype=int)
    if len(corr) != n:
        raise ValueError("correspondence must be total on the source")
    iu = np.triu_indices(n, 1)
    ds = source.dist[iu]
    dt = target.dist[np.ix_(corr, corr)][iu]
    if len(ds) == 0:
        return RoughIsometryDefect(1.0, 0.0)
    big = ds >= np.median(ds)
    ratio = dt[big] / ds[big]
    lam = float(max(1.0, ratio.max(), (1 / ratio).max()))
    k = float(max(0.0, np.max(dt - lam * ds), np.max(ds / lam - dt)))
    if k < 1e-12 * max(1.0, ds.max()):
        k = 0.0
    eq = None
    if equivariance_pairs is not None:
        pr = np.asarray(equivariance_pairs, dtype=int).reshape(-1, 2)
        eq = float(target.dist[pr[:, 0], pr[:, 1]].max()) if len(pr) else 0.0
    return RoughIsometryDefect(lam, k, eq)


# ---------------------------------------------------------------------------
# presets


def translation(ell: float, angle: float = 0.0) -> np.ndarray:
    """Hyperbolic element of translation length ell along the disk diameter at ``angle``
    (upper half-plane matrix)."""
    c, s = np.cosh(ell / 2), np.sinh(ell / 2)
    rot = np.array([[np.exp(1j * angle / 2), 0], [0, np.exp(-1j * angle / 2)]])
    disk = rot @ np.array([[c, s], [s, c]]) @ rot.conj().T
    m = CAYLEY.conj().T @ disk @ CAYLEY
    return np.real_if_close(m, tol=1e6).real


def psl2z(base=1j) -> GroupActionModel:
    S = np.array([[0.0, -1.0], [1.0, 0.0]])
    T = np.array([[1.0, 1.0], [0.0, 1.0]])
    return GroupActionModel.with_inverses([S, T], 1, base=base, name="psl2z")


def cyclic(ell: float | None = None, base=1j) -> GroupActionModel:
    """<g> with g of trace 3 (translation length 2 arccosh(3/2)) unless ell is given."""
    if ell is None:
        g = np.array([[2.0, 1.0], [1.0, 1.0]])
    else:
        g = translation(ell)
    return GroupActionModel.with_inverses([g], 1, base=base, name="cyclic")


@dataclass(frozen=True)
class Circle:
    center: float
    radius: float


def check_disjoint(circles) -> None:
    iv = sorted((c.center - c.radius, c.center + c.radius) for c in circles)
    for (a0, a1), (b0, b1) in zip(iv, iv[1:]):
        if b0 <= a1:
            raise GroupError("isometric circles overlap")


def schottky_from_circles(pairs, base=1j) -> GroupActionModel:
    """Generators pairing real-axis circles of equal radius: the outside of
    C1 goes to the inside of C2."""
    circles = [c for pr in pairs for c in pr]
    check_disjoint(circles)
    mats = []
    for c1, c2 in pairs:
        if abs(c1.radius - c2.radius) > 1e-12:
            raise GroupError("paired circles need equal radii")
        c = 1 / c1.radius
        d = -c1.center * c
        a = c2.center * c
        b = (a * d - 1) / c
        mats.append(np.array([[a, b], [c, d]]))
    return GroupActionModel.with_inverses(mats, 1, base=base, name="schottky")


def schottky(t: float, base=1j) -> GroupActionModel:
    """Two generators pairing opposite arcs of four equal arcs at quarter turns.

    Arc half-width is t * pi / 4; 0 < t < 1 keeps the circles disjoint
    (t -> 1 approaches the tangent, finite-area case).
    """
    if not 0 < t < 1:
        raise GroupError("schottky parameter must lie in (0, 1)")
    alpha = t * np.pi / 4
    tau = 2 * np.arctanh(np.cos(alpha))
    g1 = translation(tau, 0.0)
    g2 = translation(tau, np.pi / 2)
    return GroupActionModel.with_inverses([g1, g2], 1, base=base, name=f"schottky:{t:g}")


def bolza(base=1j) -> GroupActionModel:
    """Genus-two surface group: opposite sides of the regular octagon with
    angles pi/4 paired by translations of length 2 arccosh(1 + sqrt 2)."""
    ell = 2 * np.arccosh(1 + np.sqrt(2))
    mats = [translation(ell, k * np.pi / 4) for k in range(4)]
    return GroupActionModel.with_inverses(mats, 1, base=base, name="bolza")


def triangle(p: int, q: int, r: int, base=1j) -> GroupActionModel:
    """Rotation subgroup of the (p, q, r) triangle reflection group.

    Rotations by 2pi/p about the disk centre and by 2pi/q about a vertex at
    distance c, where cosh c = (cos(pi/r) + cos(pi/p) cos(pi/q)) / (sin(pi/p) sin(pi/q));
    their product rotates by 2pi/r.  Needs 1/p + 1/q + 1/r < 1.
    """
    # exact integer form of 1/p + 1/q + 1/r < 1 (the float sum rounds for (2, 3, 6))
    if q * r + p * r + p * q >= p * q * r:
        raise GroupError("triangle group is not hyperbolic")
    A, B, C = np.pi / p, np.pi / q, np.pi / r
    c = np.arccosh((np.cos(C) + np.cos(A) * np.cos(B)) / (np.sin(A) * np.sin(B)))

    def rot(t):
        return np.diag([np.exp(1j * t / 2), np.exp(-1j * t / 2)])

    T = np.array([[np.cosh(c / 2), np.sinh(c / 2)], [np.sinh(c / 2), np.cosh(c / 2)]])
    a = rot(2 * A)
    b = T @ rot(-2 * B) @ inv2(T)
    mats = [(CAYLEY.conj().T @ m @ CAYLEY).real for m in (a, b)]
    return GroupActionModel.with_inverses(mats, 1, base=base, name=f"triangle:{p},{q},{r}")


def loxodromic_h3(lam: complex) -> np.ndarray:
    return np.array([[lam, 0], [0, 1 / lam]], dtype=complex)


def parse_group(spec: str, base=None) -> GroupActionModel:
    """Named presets (psl2z, cyclic[:ell], schottky:t, bolza, triangle:p,q,r) or a matrix list
    'a,b,c,d; a,b,c,d' (real entries; inverses are added)."""
    kw = {} if base is None else {"base": base}
    s = spec.strip()
    head, _, arg = s.partition(":")
    if head == "psl2z":
        return psl2z(**kw)
    if head == "cyclic":
        return cyclic(float(arg) if arg else None, **kw)
    if head == "schottky":
        return schottky(float(arg) if arg else 0.9, **kw)
    if head == "bolza":
        return bolza(**kw)
    if head == "triangle":
        p, q, r = (int(x) for x in (arg or "2,3,7").split(","))
        return triangle(p, q, r, **kw)
    try:
        mats = [np.array([float(x) for x in part.split(",")]).reshape(2, 2)
                for part in s.split(";") if part.strip()]
    except ValueError as e:
        raise GroupError(f"cannot parse group description {spec!r}") from e
    if not mats:
        raise GroupError(f"cannot parse group description {spec!r}")
    return GroupActionModel.with_inverses(mats, 1, name="matrices", **kw)
