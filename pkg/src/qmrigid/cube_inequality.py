"""Covers of the unit cube by unions of boxes, face-to-face chains, and the
cube-inside-a-punctured-sphere construction.

Boxes are closed.  Intersections and face incidence are decided exactly from
the box coordinates.  Coverage is decided exactly on the arrangement cut out by
all box walls (every open cell is covered iff the closed union is the cube);
only when that arrangement is huge do we fall back to a uniform grid.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

MAX_ARRANGEMENT_CELLS = 4_000_000


class CoverError(ValueError):
    pass


class DomainError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def _as_box(box, n):
    lo, hi = (np.asarray(v, dtype=float).reshape(n) for v in box)
    if np.any(lo > hi) or np.any(lo < 0) or np.any(hi > 1):
        raise CoverError(f"box {lo}..{hi} is empty or leaves the unit cube")
    if np.any(lo == hi):
        raise CoverError(f"box {lo}..{hi} is degenerate")
    return lo, hi


@dataclass(frozen=True, eq=False)
class CubeCover:
    """Sets U_i, each a list of closed boxes (lo, hi) in [0,1]^n."""

    n: int
    sets: list
    grid: int = 512          # resolution of the fallback membership grid
    validate: bool = True
    _lo: np.ndarray = field(init=False, repr=False)
    _hi: np.ndarray = field(init=False, repr=False)
    _owner: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise CoverError("dimension must be >= 1")
        sets = []
        for s in self.sets:
            boxes = [_as_box(b, self.n) for b in s]
            if not boxes:
                raise CoverError("every set needs at least one box")
            sets.append(boxes)
        if not sets:
            raise CoverError("empty cover")
        object.__setattr__(self, "sets", sets)
        lo = np.array([b[0] for s in sets for b in s])
        hi = np.array([b[1] for s in sets for b in s])
        owner = np.array([i for i, s in enumerate(sets) for _ in s])
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)
        object.__setattr__(self, "_owner", owner)
        if self.validate and not covers_cube(self):
            raise CoverError("the sets do not cover the unit cube")

    @property
    def N(self) -> int:
        return len(self.sets)

    def boxes(self):
        return self._lo, self._hi, self._owner

    def meets_low_face(self, axis: int) -> np.ndarray:
        """Per set: does it touch {x_axis = 0}.  ``axis`` is 1-based."""
        hit = self._lo[:, axis - 1] == 0
        return np.bincount(self._owner[hit], minlength=self.N) > 0

    def meets_high_face(self, axis: int) -> np.ndarray:
        hit = self._hi[:, axis - 1] == 1
        return np.bincount(self._owner[hit], minlength=self.N) > 0

    def adjacency(self) -> np.ndarray:
        """Set-level intersection matrix (closed boxes, exact)."""
        lo, hi, own = self._lo, self._hi, self._owner
        meet = np.all((lo[:, None, :] <= hi[None, :, :]) & (lo[None, :, :] <= hi[:, None, :]),
                      axis=2)
        adj = np.zeros((self.N, self.N), dtype=bool)
        ii, jj = np.nonzero(meet)
        adj[own[ii], own[jj]] = True
        np.fill_diagonal(adj, False)
        return adj

    def subcover(self, keep) -> "CubeCover":
        return CubeCover(self.n, [self.sets[i] for i in keep], self.grid, validate=False)

    def to_json(self) -> list:
        return [[[b[0].tolist(), b[1].tolist()] for b in s] for s in self.sets]

    @classmethod
    def from_json(cls, n, data, **kw) -> "CubeCover":
        return cls(n, [[(b[0], b[1]) for b in s] for s in data], **kw)


# ---------------------------------------------------------------------------
# arrangement cells


@dataclass(frozen=True)
class _Cells:
    cuts: list        # per axis: sorted cut coordinates including 0 and 1
    exact: bool

    @property
    def shape(self):
        return tuple(len(c) - 1 for c in self.cuts)

    def centers(self, axis):
        c = self.cuts[axis]
        return 0.5 * (c[1:] + c[:-1])

    def slices(self, lo, hi):
        """Index slices of cells inside the closed box (lo, hi)."""
        out = []
        for ax in range(len(self.cuts)):
            mid = self.centers(ax)
            a = np.searchsorted(mid, lo[ax], side="left")
            b = np.searchsorted(mid, hi[ax], side="right")
            out.append(slice(a, b))
        return tuple(out)


def _cells(cover: CubeCover) -> _Cells:
    lo, hi, _ = cover.boxes()
    cuts = [np.unique(np.concatenate([[0.0, 1.0], lo[:, a], hi[:, a]])) for a in range(cover.n)]
    size = int(np.prod([len(c) - 1 for c in cuts], dtype=float))
    if size <= MAX_ARRANGEMENT_CELLS:
        return _Cells(cuts, True)
    g = min(cover.grid, int(round(MAX_ARRANGEMENT_CELLS ** (1 / cover.n))))
    return _Cells([np.linspace(0, 1, g + 1)] * cover.n, False)


def _set_masks(cover: CubeCover, cells: _Cells, which=None):
    lo, hi, own = cover.boxes()
    which = range(cover.N) if which is None else which
    for i in which:
        m = np.zeros(cells.shape, dtype=bool)
        for b in np.flatnonzero(own == i):
            m[cells.slices(lo[b], hi[b])] = True
        yield i, m


def _cover_counts(cover: CubeCover, cells: _Cells) -> np.ndarray:
    cnt = np.zeros(cells.shape, dtype=np.int32)
    for _, m in _set_masks(cover, cells):
        cnt += m
    return cnt


def covers_cube(cover: CubeCover) -> bool:
    cells = _cells(cover)
    lo, hi, _ = cover.boxes()
    hit = np.zeros(cells.shape, dtype=bool)
    for b in range(len(lo)):
        hit[cells.slices(lo[b], hi[b])] = True
    return bool(hit.all())


# ---------------------------------------------------------------------------
# chains


@dataclass(frozen=True)
class FaceChainResult:
    axis: int
    d_k: int
    witness_chain: list


def _bfs_sets(adj: np.ndarray, sources: np.ndarray):
    """Hop distances (sets in chain minus one) and parents, lowest index first."""
    n = adj.shape[0]
    dist = np.full(n, -1, dtype=int)
    parent = np.full(n, -1, dtype=int)
    q = deque()
    for s in np.flatnonzero(sources):
        dist[s] = 0
        q.append(s)
    nbrs = [np.flatnonzero(adj[i]) for i in range(n)]
    while q:
        u = q.popleft()
        for v in nbrs[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                parent[v] = u
                q.append(v)
    return dist, parent


def face_chain_distance(cover: CubeCover, axis: int, adj=None) -> FaceChainResult:
    """Fewest sets in a chain from the face x_axis = 0 to x_axis = 1 (axis 1-based)."""
    if not 1 <= axis <= cover.n:
        raise ValueError(f"axis must be in 1..{cover.n}")
    adj = cover.adjacency() if adj is None else adj
    dist, parent = _bfs_sets(adj, cover.meets_low_face(axis))
    goal = np.flatnonzero(cover.meets_high_face(axis) & (dist >= 0))
    if len(goal) == 0:
        raise CoverError(f"no chain joins the faces along axis {axis}")
    end = goal[np.argmin(dist[goal])]
    chain = [int(end)]
    while parent[chain[-1]] >= 0:
        chain.append(int(parent[chain[-1]]))
    chain.reverse()
    return FaceChainResult(axis, int(dist[end]) + 1, chain)


@dataclass(frozen=True)
class LengthVolumeResult:
    N: int
    d: tuple
    product: int
    holds: bool
    chains: tuple = ()

    def dump(self, cover: CubeCover) -> dict:
        return {"N": self.N, "d": list(self.d), "product": self.product,
                "holds": self.holds, "n": cover.n, "sets": cover.to_json()}


def check_length_volume(cover: CubeCover) -> LengthVolumeResult:
    adj = cover.adjacency()
    res = [face_chain_distance(cover, a, adj) for a in range(1, cover.n + 1)]
    d = tuple(r.d_k for r in res)
    prod = int(np.prod(d, dtype=object))
    return LengthVolumeResult(cover.N, d, prod, cover.N >= prod, tuple(r.witness_chain for r in res))


# ---------------------------------------------------------------------------
# chain-count map


@dataclass(frozen=True)
class ChainCountMap:
    kept: list                # indices into the original cover
    dropped: list             # redundant sets removed, in removal order
    witnesses: np.ndarray     # one point per kept set, lying in that set only
    f0: np.ndarray            # (len(kept), n) chain counts
    d: tuple                  # face-to-face chain lengths of the reduced cover
    low_face_ok: bool         # sets meeting F_k have count exactly 1
    high_face_ok: bool        # sets meeting G_k have count >= d_k


def reduce_redundant(cover: CubeCover):
    """Drop sets whose removal keeps the cube covered, one pass in index order."""
    cells = _cells(cover)
    masks = dict(_set_masks(cover, cells))
    cnt = sum(m.astype(np.int32) for m in masks.values())
    dropped = []
    for i in range(cover.N):
        if np.all(cnt[masks[i]] >= 2):
            cnt -= masks[i]
            dropped.append(i)
    kept = [i for i in range(cover.N) if i not in set(dropped)]
    return kept, dropped, cells, masks, cnt


def _inside(cover: CubeCover, i: int, x: np.ndarray) -> bool:
    lo, hi, own = cover.boxes()
    b = own == i
    return bool(np.any(np.all((lo[b] <= x) & (x <= hi[b]), axis=1)))


def chain_count_map(cover: CubeCover, witnesses=None) -> ChainCountMap:
    """Per set U_i, the fewest sets in a chain joining F_k to a private point of U_i.

    Redundant sets are removed first.  Without explicit witnesses, each kept
    set gets the centre of an arrangement cell that it alone covers.
    """
    kept, dropped, cells, masks, cnt = reduce_redundant(cover)
    red = cover.subcover(kept)
    if witnesses is None:
        w = []
        for i in kept:
            own = masks[i] & (cnt == 1)
            if not own.any():
                raise CoverError(f"set {i} has no private cell after reduction")
            idx = np.argwhere(own)[0]
            w.append([cells.centers(a)[idx[a]] for a in range(cover.n)])
        w = np.array(w)
    else:
        w = np.asarray(witnesses, dtype=float).reshape(len(cover.sets), cover.n)[kept]
        for t, x in enumerate(w):
            others = [j for j in range(red.N) if j != t and _inside(red, j, x)]
            if not _inside(red, t, x) or others:
                raise CoverError(f"witness {x} is not private to set {kept[t]}")
    adj = red.adjacency()
    f0 = np.zeros((red.N, cover.n), dtype=int)
    d, low_ok, high_ok = [], True, True
    for a in range(1, cover.n + 1):
        low = red.meets_low_face(a)
        dist, _ = _bfs_sets(adj, low)
        f0[:, a - 1] = dist + 1     # witness x_i lies in U_i alone
        dk = face_chain_distance(red, a, adj).d_k
        d.append(dk)
        low_ok &= bool(np.all(f0[low, a - 1] == 1)) and bool(np.all(f0[~low, a - 1] > 1))
        high_ok &= bool(np.all(f0[red.meets_high_face(a), a - 1] >= dk))
    return ChainCountMap(kept, dropped, w, f0, tuple(d), low_ok, high_ok)


# ---------------------------------------------------------------------------
# generators


def grid_cover(m: int, n: int = 2, inflate: float = 1e-6) -> CubeCover:
    """m^n cells of side 1/m, each grown by ``inflate`` (clipped to the cube)."""
    ticks = np.arange(m) / m
    sets = []
    for idx in np.ndindex(*(m,) * n):
        lo = np.clip(ticks[list(idx)] - inflate, 0, 1)
        hi = np.clip(ticks[list(idx)] + 1.0 / m + inflate, 0, 1)
        sets.append([(lo, hi)])
    return CubeCover(n, sets)


def slab_cover() -> CubeCover:
    return CubeCover(2, [[((0, 0), (0.6, 1))], [((0.4, 0), (1, 1))]])


def random_box_cover(n: int, seed: int, max_sets: int, side=(0.05, 0.5),
                     lattice: int | None = None, union_prob: float = 0.15,
                     max_tries: int = 1000) -> CubeCover:
    """Seeded cover by lattice-snapped boxes with sides in ``side``.

    Boxes are dropped on a random still-uncovered lattice cell until the cube
    is covered; with probability ``union_prob`` a new box joins the previous
    set instead of starting a new one.  Draws that need more than
    ``max_sets`` sets are rejected and redrawn.
    """
    rng = np.random.default_rng(seed)
    L = lattice or {1: 256, 2: 64, 3: 24}.get(n, 8)
    smin = max(1, int(np.ceil(side[0] * L)))
    smax = max(smin, int(np.floor(side[1] * L)))
    for _ in range(max_tries):
        covered = np.zeros((L,) * n, dtype=bool)
        sets = []
        while not covered.all():
            free = np.argwhere(~covered)
            c = free[rng.integers(len(free))]
            s = rng.integers(smin, smax + 1, size=n)
            lo = np.clip(c - rng.integers(0, s), 0, L - s)
            hi = lo + s
            covered[tuple(slice(a, b) for a, b in zip(lo, hi))] = True
            box = (lo / L, hi / L)
            if sets and rng.random() < union_prob:
                sets[-1].append(box)
            else:
                sets.append([box])
            if len(sets) > max_sets:
                break
        if covered.all() and len(sets) <= max_sets:
            return CubeCover(n, sets)
    raise CoverError(f"no cover with <= {max_sets} sets after {max_tries} draws")


# ---------------------------------------------------------------------------
# stereographic projection


def stereographic(x, pole_tol: float = 1e-9) -> np.ndarray:
    """Projection from the north pole of S^n onto R^n."""
    x = np.asarray(x, dtype=float)
    one = x.ndim == 1
    x = np.atleast_2d(x)
    if not np.allclose(np.linalg.norm(x, axis=1), 1, atol=1e-12, rtol=0):
        raise DomainError("points must lie on the unit sphere")
    gap = 1.0 - x[:, -1]
    to_pole = np.sqrt(2 * np.maximum(gap, 0))
    if np.any(to_pole < pole_tol):
        raise DomainError(f"point at chordal distance {to_pole.min():.3g} from the pole")
    y = x[:, :-1] / gap[:, None]
    return y[0] if one else y


def inverse_stereographic(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    one = y.ndim == 1
    y = np.atleast_2d(y)
    s = np.einsum("ij,ij->i", y, y)
    x = np.c_[2 * y, s - 1] / (s + 1)[:, None]
    return x[0] if one else x


def stereo_ratio(x, y):
    """|p(x) - p(y)| / |x - y| from the closed form (no cancellation)."""
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    return 1.0 / np.sqrt((1 - x[:, -1]) * (1 - y[:, -1]))


# ---------------------------------------------------------------------------
# cubes in spheres


def _angle(u, v):
    return 2 * np.arcsin(np.clip(np.linalg.norm(u - v, axis=-1) / 2, 0, 1))


def _chord(angle):
    return 2 * np.sin(np.clip(angle, 0, np.pi) / 2)


def cap_angle(delta):
    """Angular radius of a cap of chordal radius delta."""
    return 2 * np.arcsin(delta / 2)


@dataclass(frozen=True, eq=False)
class SphereConfig:
    n: int
    b0: np.ndarray
    b1: np.ndarray
    delta: float
    E: np.ndarray
    gap01: float = field(init=False)
    gap0E: float = field(init=False)
    gap1E: float = field(init=False)
    diamE: float = field(init=False)

    def __post_init__(self):
        b0 = np.asarray(self.b0, float)
        b1 = np.asarray(self.b1, float)
        E = np.atleast_2d(np.asarray(self.E, float))
        for v in (b0, b1, *E):
            if v.shape != (self.n + 1,) or abs(np.linalg.norm(v) - 1) > 1e-12:
                raise ConfigError("centres and obstacle points must be unit vectors in R^{n+1}")
        if not 0 < self.delta < 2:
            raise ConfigError("delta must lie in (0, 2)")
        psi = cap_angle(self.delta)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "gap01", float(_chord(_angle(b0, b1) - 2 * psi)))
        object.__setattr__(self, "gap0E", float(_chord(_angle(E, b0) - psi).min()))
        object.__setattr__(self, "gap1E", float(_chord(_angle(E, b1) - psi).min()))
        dE = np.linalg.norm(E[:, None] - E[None], axis=2).max() if len(E) > 1 else 0.0
        object.__setattr__(self, "diamE", float(dE))
        if _angle(b0, b1) - 2 * psi < 0 or self.gap01 < self.delta:
            raise ConfigError(f"dist(B0, B1) = {self.gap01:.4g} < delta")
        if min(self.gap0E, self.gap1E) < self.delta:
            raise ConfigError("a ball comes closer than delta to E")
        if self.diamE >= self.delta:
            raise ConfigError(f"diam E = {self.diamE:.4g} is not below delta")


def _householder_to_pole(e):
    n1 = len(e)
    pole = np.zeros(n1)
    pole[-1] = 1.0
    v = e - pole
    nv = np.linalg.norm(v)
    if nv < 1e-15:
        return np.eye(n1)
    v /= nv
    return np.eye(n1) - 2 * np.outer(v, v)


def _image_ball(c, psi):
    """Euclidean ball p(cap(c, psi)) for a cap avoiding the north pole."""
    n = len(c) - 1
    theta = np.arccos(np.clip(c[-1], -1, 1))   # polar angle from the north pole
    horiz = c[:-1]
    h = np.linalg.norm(horiz)
    u = horiz / h if h > 1e-15 else np.eye(n)[0]
    lo = 1 / np.tan((theta + psi) / 2)
    hi = 1 / np.tan((theta - psi) / 2)
    return 0.5 * (lo + hi) * u, 0.5 * (hi - lo)


@dataclass(frozen=True, eq=False)
class SphereCube:
    config: SphereConfig
    rotation: np.ndarray      # H with H e = north pole; H is its own inverse
    corner: np.ndarray        # a
    frame: np.ndarray         # rows: axis vectors, first = b - a
    half_width: float
    min_face_distance: float
    certified_bound: float
    c_fit: float
    faces_inside: bool
    avoids_cap: bool

    def __call__(self, u) -> np.ndarray:
        """Map points of [0,1]^n into S^n."""
        u = np.atleast_2d(np.asarray(u, float))
        y = self.corner + u[:, :1] * self.frame[0]
        if len(self.frame) > 1:
            y = y + (2 * u[:, 1:] - 1) * self.half_width @ self.frame[1:]
        return inverse_stereographic(y) @ self.rotation.T


def cube_in_sphere(config: SphereConfig, seed: int = 0, samples: int = 400) -> SphereCube:
    """Topological cube in S^n minus the delta-cap at E with opposite faces in B0, B1.

    The obstacle cap goes to the north pole, the balls project to Euclidean
    balls, and a box with one face in each image ball and transverse
    half-width small enough to stay clear of the projected cap is pulled
    back.  Opposite faces are sampled to measure their chordal distance.
    """
    n, delta = config.n, config.delta
    H = _householder_to_pole(config.E[0])
    psi = cap_angle(delta)
    a, ra = _image_ball(H @ config.b0, psi)
    b, rb = _image_ball(H @ config.b1, psi)
    R = 1 / np.tan(psi / 2)        # p(S^n minus the delta-cap at the pole) = closed R-ball
    # delta / 2 caps the width so the certified bound is homogeneous in delta
    room = min(delta / 2, ra, rb, R - np.linalg.norm(a), R - np.linalg.norm(b))
    w = 0.5 * room / max(1.0, np.sqrt(n - 1))
    if w <= 0:
        raise ConfigError("projected balls reach the obstacle cap")
    ax = b - a
    frame = [ax]
    if n > 1:
        # orthonormal complement of the a->b direction
        q, _ = np.linalg.qr(np.c_[ax / np.linalg.norm(ax), np.eye(n)])
        frame += list(q[:, 1:n].T)
    frame = np.array(frame)
    cube = SphereCube(config, H, a, frame, w, 0.0, 0.0, 0.0, False, False)

    rng = np.random.default_rng(seed)
    gaps, dmin = [], np.inf
    for axis in range(n):
        u0 = rng.random((samples, n))
        u1 = rng.random((samples, n))
        u0[:, axis] = 0
        u1[:, axis] = 1
        x0, x1 = cube(u0), cube(u1)
        dmin = min(dmin, float(np.min(np.linalg.norm(x0[:, None] - x1[None], axis=2))))
        gaps.append(np.linalg.norm(ax) if axis == 0 else 2 * w)
    # |x - y| >= (delta^2 / 2) |p(x) - p(y)| off the delta-cap
    certified = 0.5 * delta**2 * min(gaps)
    u_face = rng.random((samples, n))
    u_face[:, 0] = 0
    f0 = cube(u_face)
    u_face[:, 0] = 1
    f1 = cube(u_face)
    inside = (np.all(np.linalg.norm(f0 - config.b0, axis=1) <= delta * (1 + 1e-12))
              and np.all(np.linalg.norm(f1 - config.b1, axis=1) <= delta * (1 + 1e-12)))
    body = cube(rng.random((samples * 4, n)))
    corners = cube(np.array(list(np.ndindex(*(2,) * n)), dtype=float))
    pts = np.vstack([body, corners, f0, f1])
    to_e = np.linalg.norm(pts - config.E[0], axis=1)
    to_E = np.linalg.norm(pts[:, None] - config.E[None], axis=2)
    clear = bool(np.all(to_e >= delta) and np.all(to_E > 0))
    return SphereCube(config, H, a, frame, w, float(dmin), float(certified),
                      float(certified / delta**3), bool(inside), clear)
