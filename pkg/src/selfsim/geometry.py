"""Outer covers, point membership, rasters and measure estimates of attractors.

Cover primitives are balls: the image of the bounding ball ``B`` under
``f_w`` is again a ball, of radius ``R * contraction(w)``, and since ``B``
contains every anchor these images are nested (``f_j(B)`` lies inside ``B``).
Grids only appear at the last step, when balls are rasterized.

Upper measure bounds come from outer covers and are rigorous up to float
rounding.  Lower bounds test box centres for membership and are heuristic.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import gamma

from .ifs import IfsSystem, apply_word, word_contraction

DEFAULT_CELL_BUDGET = 10 ** 7
_CHUNK = 1024


class BudgetExceeded(RuntimeError):
    """A cell or pair budget ran out; partial results are never returned."""


class HypothesisNotWitnessed(ValueError):
    pass


class DegenerateDimension(ValueError):
    pass


def _child_offsets(s: IfsSystem) -> np.ndarray:
    """``(f_j(c) - c) / R`` for the bounding ball centre ``c`` and radius ``R``.

    The child ``w.j`` of a ball ``f_w(B)`` with centre ``c_w`` and radius
    ``r_w`` has centre ``c_w + r_w * offset_j`` and radius ``r_w * ratio_j``.
    """
    c = s.ball_center
    return (s.ratios[:, None] * c[None, :] + s.shifts - c[None, :]) / s.ball_radius


def _children(s: IfsSystem, c: np.ndarray, r: np.ndarray) -> tuple:
    off = _child_offsets(s)
    cc = (c[:, None, :] + r[:, None, None] * off[None, :, :]).reshape(-1, s.dimension)
    rr = (r[:, None] * s.ratios[None, :]).ravel()
    return cc, rr


def unit_ball_volume(d: int) -> float:
    """Lebesgue measure of the unit ball in R^d."""
    return math.pi ** (d / 2) / gamma(d / 2 + 1)


# ---------------------------------------------------------------------------
# covers

@dataclass(frozen=True)
class CoverCell:
    word: tuple
    center: tuple
    radius: float


@dataclass(frozen=True)
class Cover:
    tolerance: float
    centers: np.ndarray
    radii: np.ndarray
    digits: np.ndarray = field(repr=False)     # (m, max_depth) uint8, zero padded
    lengths: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.radii)

    def word(self, i: int) -> tuple:
        return tuple(int(e) for e in self.digits[i, : self.lengths[i]])

    @property
    def cells(self):
        for i in range(len(self)):
            yield CoverCell(self.word(i), tuple(self.centers[i]), float(self.radii[i]))

    def contains(self, points, slack: float = 0.0) -> np.ndarray:
        """Whether each point lies in some cell ball."""
        from scipy.spatial import cKDTree
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tree = cKDTree(self.centers)
        rmax = float(self.radii.max())
        out = np.zeros(len(pts), dtype=bool)
        for i, idx in enumerate(tree.query_ball_point(pts, rmax + slack)):
            if idx:
                dist = np.linalg.norm(self.centers[idx] - pts[i], axis=1)
                out[i] = bool(np.any(dist <= self.radii[idx] + slack))
        return out


def build_cover(s: IfsSystem, delta: float, budget: int = DEFAULT_CELL_BUDGET) -> Cover:
    """Adaptive outer cover: split every cell of radius > delta into its n children."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    centers = s.ball_center[None, :].copy()
    radii = np.array([s.ball_radius])
    words = np.zeros((1, 0), dtype=np.uint8)
    done_c, done_r, done_w = [], [], []
    total = 1
    while len(radii):
        leaf = radii <= delta
        if leaf.any():
            done_c.append(centers[leaf])
            done_r.append(radii[leaf])
            done_w.append(words[leaf])
        centers, radii, words = centers[~leaf], radii[~leaf], words[~leaf]
        if not len(radii):
            break
        total += s.n * len(radii)
        if total > budget:
            raise BudgetExceeded(f"cover needs more than {budget} cells")
        centers, radii = _children(s, centers, radii)
        digit = np.tile(np.arange(1, s.n + 1, dtype=np.uint8), len(words))
        words = np.concatenate([np.repeat(words, s.n, axis=0), digit[:, None]], axis=1)
    depth = max(w.shape[1] for w in done_w)
    padded = [np.pad(w, ((0, 0), (0, depth - w.shape[1]))) for w in done_w]
    lengths = np.concatenate([np.full(len(w), w.shape[1]) for w in done_w])
    return Cover(float(delta), np.concatenate(done_c), np.concatenate(done_r),
                 np.concatenate(padded), lengths)


# ---------------------------------------------------------------------------
# membership

def _depth_for(s: IfsSystem, half: float) -> int:
    lam, R = float(s.ratios[0]), s.ball_radius
    if R <= half:
        return 0
    m = max(0, math.ceil(math.log(half / R) / math.log(lam)))
    while R * lam ** m > half:
        m += 1
    while m > 0 and R * lam ** (m - 1) <= half:
        m -= 1
    return m


def _interval_union(s: IfsSystem, m: int, budget: int):
    """Merged union of all depth-m cell intervals of a homogeneous 1-d system."""
    cache = s._cache.setdefault("union", {})
    if m in cache:
        return cache[m]
    start = max((k for k in cache if k < m), default=None)
    if start is None:
        c, R = float(s.ball_center[0]), s.ball_radius
        lo, hi, start = np.array([c - R]), np.array([c + R]), 0
        cache[0] = (lo, hi)
    lo, hi = cache[start]
    lam, shift = float(s.ratios[0]), s.shifts[:, 0]
    for k in range(start + 1, m + 1):
        lo = (lam * lo[None, :] + shift[:, None]).ravel()
        hi = (lam * hi[None, :] + shift[:, None]).ravel()
        order = np.argsort(lo, kind="stable")
        lo, hi = lo[order], hi[order]
        reach = np.maximum.accumulate(hi)
        start_mask = np.concatenate([[True], lo[1:] > reach[:-1]])
        ends = np.concatenate([np.nonzero(start_mask)[0][1:] - 1, [len(lo) - 1]])
        lo, hi = lo[start_mask], reach[ends]
        if len(lo) > budget:
            raise BudgetExceeded(f"interval union at depth {k} exceeds {budget} pieces")
        cache[k] = (lo, hi)
    return cache[m]


def _membership_intervals(s, y, half, budget):
    lo, hi = _interval_union(s, _depth_for(s, half), budget)
    idx = np.searchsorted(lo, y, side="right") - 1
    inside = np.zeros(len(y), dtype=bool)
    ok = idx >= 0
    inside[ok] = y[ok] <= hi[idx[ok]] + half
    nxt = idx + 1
    ok = nxt < len(lo)
    inside[ok] |= lo[nxt[ok]] - y[ok] <= half
    return inside


def _beam_hits(s, pts, half, width: int = 4) -> np.ndarray:
    """Cheap pass: follow only the ``width`` closest balls per point.

    Any ball it reports is a genuine witness, so a hit is final; points it
    misses still need the exhaustive search.
    """
    q, n = len(pts), s.n
    hit = np.zeros(q, dtype=bool)
    c = np.repeat(s.ball_center[None, :], q, axis=0)[:, None, :]
    r = np.full((q, 1), s.ball_radius)
    hit |= (np.linalg.norm(pts - c[:, 0], axis=1) - r[:, 0] <= half) & (r[:, 0] <= half)
    live = np.nonzero(~hit & (r[:, 0] > half))[0]
    c, r = c[live], r[live]
    while len(live):
        b = r.shape[1]
        cc, rr = _children(s, c.reshape(-1, s.dimension), r.ravel())
        cc, rr = cc.reshape(len(live), b * n, -1), rr.reshape(len(live), b * n)
        gap = np.linalg.norm(pts[live, None, :] - cc, axis=2) - rr
        h = half[live, None]
        found = ((gap <= h) & (rr <= h)).any(axis=1)
        hit[live[found]] = True
        gap = np.where((gap <= h) & (rr > h), gap, np.inf)
        k = min(width, b * n)
        pick = np.argpartition(gap, k - 1, axis=1)[:, :k] if k < b * n else np.tile(np.arange(b * n), (len(live), 1))
        rows = np.arange(len(live))[:, None]
        gap, cc, rr = gap[rows, pick], cc[rows, pick], rr[rows, pick]
        go = ~found & np.isfinite(gap).any(axis=1)
        live, c, r = live[go], cc[go], np.where(np.isfinite(gap[go]), rr[go], 0.0)
        # dead beam slots get radius 0 and an unreachable centre so they never hit or expand
        c = np.where(np.isfinite(gap[go])[..., None], c, np.inf)
    return hit


def _membership_balls(s, pts, half, budget):
    q = len(pts)
    inside = _beam_hits(s, pts, half)
    qi = np.nonzero(~inside)[0]
    c = np.repeat(s.ball_center[None, :], len(qi), axis=0)
    r = np.full(len(qi), s.ball_radius)
    while len(qi):
        gap = np.linalg.norm(pts[qi] - c, axis=1) - r
        keep = gap <= half[qi]
        qi, c, r = qi[keep], c[keep], r[keep]
        hit = r <= half[qi]
        inside[qi[hit]] = True
        live = ~inside[qi]
        qi, c, r = qi[live], c[live], r[live]
        if not len(qi):
            break
        if len(qi) * s.n > budget:
            raise BudgetExceeded(f"membership search exceeds {budget} active balls")
        c, r = _children(s, c, r)
        qi = np.repeat(qi, s.n)
    return inside


def membership_many(s: IfsSystem, points, delta, budget: int = DEFAULT_CELL_BUDGET,
                    method: str = "auto") -> np.ndarray:
    """Vectorised membership test.

    A point is inside within ``delta`` iff some cover ball of radius at most
    ``delta/2`` lies within ``delta/2`` of it.  Balls are nested, so a branch
    already farther than ``delta/2`` is pruned; this is equivalent to the
    looser ``delta`` pruning and decides the same way.  Deterministic.

    ``method="intervals"`` (homogeneous, d=1) walks merged interval unions
    instead of individual balls; both decide identically.  ``auto`` uses it
    only when n*lam >= 1.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if s.dimension == 1 else pts[None, :]
    if pts.shape[1] != s.dimension:
        raise ValueError("point dimension does not match the system")
    half = np.broadcast_to(np.asarray(delta, dtype=float), (len(pts),)) / 2
    if np.any(half <= 0):
        raise ValueError("delta must be positive")
    if method == "auto":
        # with n*lam < 1 the union is a dust whose piece count doubles per level
        dense = s.n * float(s.ratios[0]) >= 1
        method = "intervals" if s.dimension == 1 and s.homogeneous and dense else "balls"
    if method == "balls":
        out = np.zeros(len(pts), dtype=bool)
        for a in range(0, len(pts), _CHUNK):
            sl = slice(a, a + _CHUNK)
            out[sl] = _membership_balls(s, pts[sl], np.ascontiguousarray(half[sl]), budget)
        return out
    out = np.zeros(len(pts), dtype=bool)
    for h in np.unique(half):
        sel = half == h
        out[sel] = _membership_intervals(s, pts[sel, 0], float(h), budget)
    return out


def membership(s: IfsSystem, x, delta: float, budget: int = DEFAULT_CELL_BUDGET) -> bool:
    """True for InsideWithin(delta), False for Outside."""
    x = np.asarray([float(v) for v in np.atleast_1d(x)], dtype=float)
    return bool(membership_many(s, x[None, :], delta, budget)[0])


def pull_back(s: IfsSystem, word, points) -> tuple:
    """Points pulled back along ``word`` and the tolerance scale ``1/contraction``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam, shift = s.ratios, s.shifts
    for e in s.check_word(word):
        pts = (pts - shift[e - 1]) / lam[e - 1]
    return pts, 1.0 / float(word_contraction(s, word))


def membership_in_image(s: IfsSystem, word, points, delta: float,
                        budget: int = DEFAULT_CELL_BUDGET) -> np.ndarray:
    """Membership within ``delta`` of the cylinder ``f_word(attractor)``."""
    pts, scale = pull_back(s, word, points)
    return membership_many(s, pts, delta * scale, budget)


# ---------------------------------------------------------------------------
# rasters

@dataclass
class Raster:
    origin: np.ndarray
    cell_size: float
    mask: np.ndarray
    cells_visited: int = 0

    @property
    def dimension(self) -> int:
        return self.mask.ndim

    @property
    def box_volume(self) -> float:
        return self.cell_size ** self.dimension

    @property
    def covered_volume(self) -> float:
        return int(self.mask.sum()) * self.box_volume

    def box_centers(self, mask: Optional[np.ndarray] = None) -> np.ndarray:
        idx = np.argwhere(self.mask if mask is None else mask)
        return self.origin + (idx + 0.5) * self.cell_size

    def like(self, mask: np.ndarray) -> "Raster":
        return Raster(self.origin, self.cell_size, mask)

    def to_pgm(self) -> str:
        """ASCII P2 image for d=2: covered boxes black, top row = largest y."""
        if self.dimension != 2:
            raise ValueError("PGM output needs a 2-d raster")
        img = np.where(self.mask.T[::-1], 0, 255)
        rows = [" ".join(str(v) for v in row) for row in img]
        h, w = img.shape
        return "P2\n%d %d\n255\n" % (w, h) + "\n".join(rows) + "\n"

    def to_csv(self) -> str:
        """One row per covered box: its index tuple and state."""
        lines = ["box_index,state"]
        for idx in np.argwhere(self.mask):
            lines.append('"%s",covered' % " ".join(str(int(i)) for i in idx))
        return "\n".join(lines) + "\n"


def grid_for(s: IfsSystem, h: float) -> tuple:
    """Origin and shape of the fixed grid of spacing ``h`` over the bounding ball.

    The origin does not depend on ``h`` so dyadic refinements nest.
    """
    origin = s.ball_center - s.ball_radius
    shape = tuple(int(math.ceil(2 * s.ball_radius / h)) + 1 for _ in range(s.dimension))
    return origin, shape


def _box_ranges(origin, h, shape, c, r):
    lo = np.floor((c - r[:, None] - origin) / h).astype(np.int64)
    hi = np.floor((c + r[:, None] - origin) / h).astype(np.int64)
    upper = np.array(shape) - 1
    return np.clip(lo, 0, upper), np.clip(hi, 0, upper)


def _ball_boxes(origin, h, shape, c, r):
    """Yield (ball index, box index) arrays for every box meeting a ball."""
    lo, hi = _box_ranges(origin, h, shape, c, r)
    span = int((hi - lo).max()) + 1 if len(r) else 0
    slack = r * 1e-12 + 1e-15
    for off in itertools.product(range(span), repeat=c.shape[1]):
        idx = lo + np.array(off)
        ok = np.all(idx <= hi, axis=1)
        box_lo = origin + idx * h
        near = np.clip(c, box_lo, box_lo + h)
        ok &= np.linalg.norm(c - near, axis=1) <= r + slack
        yield np.nonzero(ok)[0], idx[ok]


def _mark(mask, origin, h, c, r):
    for _, idx in _ball_boxes(origin, h, mask.shape, c, r):
        mask[tuple(idx.T)] = True


def _all_marked(mask, origin, h, c, r):
    full = np.ones(len(r), dtype=bool)
    for which, idx in _ball_boxes(origin, h, mask.shape, c, r):
        full[which[~mask[tuple(idx.T)]]] = False
    return full


def _integral(mask: np.ndarray) -> np.ndarray:
    out = np.zeros(tuple(k + 1 for k in mask.shape), dtype=np.int64)
    acc = mask.astype(np.int64)
    for ax in range(mask.ndim):
        acc = np.cumsum(acc, axis=ax)
    out[tuple(slice(1, None) for _ in range(mask.ndim))] = acc
    return out


def _range_full(integral: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """True where every box with index in [lo, hi] (inclusive) is marked."""
    d = lo.shape[1]
    total = np.zeros(len(lo), dtype=np.int64)
    for corner in itertools.product((0, 1), repeat=d):
        idx = np.where(np.array(corner, dtype=bool), hi + 1, lo)
        sign = (-1) ** (d - sum(corner))
        total += sign * integral[tuple(idx.T)]
    return total == np.prod(hi - lo + 1, axis=1)


def rasterize(s: IfsSystem, resolution: float, cover_tol: Optional[float] = None,
              roots: Optional[Sequence] = None, budget: int = DEFAULT_CELL_BUDGET) -> Raster:
    """Mark every grid box meeting a cell of the cover of tolerance ``cover_tol``.

    ``roots`` restricts the cover to cylinders ``f_w(attractor)`` for the given
    words (default: the whole attractor).  The cover is walked depth first in
    chunks; a subtree is skipped once every box its ball meets is already
    marked, since all descendant balls sit inside that ball.  Large balls are
    tested against their whole index range with an integral image.  The result is
    the same raster as marking the fully built cover.
    """
    h = float(resolution)
    tol = h / 2 if cover_tol is None else float(cover_tol)
    origin, shape = grid_for(s, h)
    if math.prod(shape) > budget:
        raise BudgetExceeded(f"a grid of {math.prod(shape)} boxes exceeds the budget {budget}")
    mask = np.zeros(shape, dtype=bool)
    roots =[()] if roots is None else [s.check_word(w) for w in roots]
    c0 = np.array([[float(v) for v in apply_word(s, w, tuple(s.ball_center))] for w in roots])
    r0 = np.array([s.ball_radius * float(word_contraction(s, w)) for w in roots])
    stack = [(c0, r0)]
    visited = 0
    integral, dirty = None, True
    while stack:
        c, r = stack.pop()
        visited += len(r)
        if visited > budget:
            raise BudgetExceeded(f"rasterization visited more than {budget} cells")
        leaf = r <= tol
        if leaf.any():
            _mark(mask, origin, h, c[leaf], r[leaf])
            dirty = True
            c, r = c[~leaf], r[~leaf]
        small = r <= 2 * h
        drop = np.zeros(len(r), dtype=bool)
        if small.any():
            drop[small] = _all_marked(mask, origin, h, c[small], r[small])
        if (~small).any():
            if integral is None or dirty:
                integral, dirty = _integral(mask), False
            big = np.nonzero(~small)[0]
            drop[big] = _range_full(integral, *_box_ranges(origin, h, shape, c[big], r[big]))
        c, r = c[~drop], r[~drop]
        if not len(r):
            continue
        c, r = _children(s, c, r)
        for a in reversed(range(0, len(r), _CHUNK)):
            stack.append((c[a:a + _CHUNK], r[a:a + _CHUNK]))
    return Raster(origin, h, mask, visited)


# ---------------------------------------------------------------------------
# measures

@dataclass(frozen=True)
class MeasureEstimate:
    upper: float
    heuristic_lower: Optional[float]
    resolution: float
    cell_count: int

    def csv_row(self) -> str:
        low = "" if self.heuristic_lower is None else repr(self.heuristic_lower)
        return f"{self.resolution!r},{self.upper!r},{low},{self.cell_count}"


MEASURE_CSV_HEADER = "resolution,upper,lower,cell_count"


def measure_estimate(s: IfsSystem, resolution: float, with_lower: bool = True,
                     cover_tol: Optional[float] = None,
                     budget: int = DEFAULT_CELL_BUDGET) -> MeasureEstimate:
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    ras = rasterize(s, resolution, cover_tol, budget=budget)
    lower = None
    if with_lower:
        inside = membership_many(s, ras.box_centers(), resolution / 10, budget)
        lower = int(inside.sum()) * ras.box_volume
    return MeasureEstimate(ras.covered_volume, lower, resolution, ras.cells_visited)


def _image_rasters(s, resolution, digits, cover_tol, budget):
    return {j: rasterize(s, resolution, cover_tol, roots=[(j,)], budget=budget) for j in digits}


def overlap_measure(s: IfsSystem, k: int, l: int, resolution: float, with_lower: bool = True,
                    cover_tol: Optional[float] = None,
                    budget: int = DEFAULT_CELL_BUDGET) -> MeasureEstimate:
    """Estimate the measure of ``f_k(attractor) & f_l(attractor)``."""
    if k == l:
        raise ValueError("overlap needs two distinct digits")
    ras = _image_rasters(s, resolution, (k, l), cover_tol, budget)
    both = ras[k].mask & ras[l].mask
    vol = ras[k].box_volume
    lower = None
    if with_lower:
        pts = ras[k].box_centers(both)
        tight = resolution / 10
        ok = membership_in_image(s, (k,), pts, tight, budget) & membership_in_image(s, (l,), pts, tight, budget)
        lower = int(ok.sum()) * vol
    visited = ras[k].cells_visited + ras[l].cells_visited
    return MeasureEstimate(int(both.sum()) * vol, lower, resolution, visited)


@dataclass(frozen=True)
class InclusionExclusion:
    residual: float           # the incremental identity on a common raster
    full_residual: float      # scaling identity: (sum lam^d - 1) L = alternating overlaps
    measure: float
    union_measure: float
    image_measures: tuple
    alternating_sum: float


def inclusion_exclusion_residual(s: IfsSystem, resolution: float,
                                 cover_tol: Optional[float] = None,
                                 budget: int = DEFAULT_CELL_BUDGET) -> InclusionExclusion:
    digits = range(1, s.n + 1)
    ras = _image_rasters(s, resolution, digits, cover_tol, budget)
    whole = rasterize(s, resolution, cover_tol, budget=budget)
    vol = whole.box_volume
    masks = [ras[j].mask for j in digits]
    lhs = whole.covered_volume
    rhs = sum(int(m.sum()) for m in masks) * vol
    acc = masks[0].copy()
    for m in masks[1:]:
        rhs -= int((acc & m).sum()) * vol
        acc |= m
    alt = 0.0
    for size in range(2, s.n + 1):
        for subset in itertools.combinations(range(s.n), size):
            inter = np.logical_and.reduce([masks[i] for i in subset])
            alt += (-1) ** size * int(inter.sum()) * vol
    total = sum(float(m.ratio) ** s.dimension for m in s.maps)
    full = abs((total - 1) * lhs - alt)
    return InclusionExclusion(abs(lhs - rhs), full, lhs, int(acc.sum()) * vol,
                              tuple(int(m.sum()) * vol for m in masks), alt)


# ---------------------------------------------------------------------------
# interior evidence and density constants

@dataclass(frozen=True)
class Cube:
    lower: tuple
    side: float
    heuristic: bool = True

    @property
    def volume(self) -> float:
        return self.side ** len(self.lower)


def _window_sums(ok: np.ndarray, t: int) -> np.ndarray:
    """Number of true cells in every t^d window (lower corner indexed)."""
    sat = ok.astype(np.int64)
    for ax in range(ok.ndim):
        sat = np.cumsum(sat, axis=ax)
        sat = np.concatenate([np.zeros_like(np.take(sat, [0], axis=ax)), sat], axis=ax)
    d = ok.ndim
    out = 0
    sizes = [n - t + 1 for n in ok.shape]
    for corner in itertools.product((0, 1), repeat=d):
        sl = tuple(slice(c * t, c * t + sz) for c, sz in zip(corner, sizes))
        sign = (-1) ** (d - sum(corner))
        out = out + sign * sat[sl]
    return out


def interior_cube_search(s: IfsSystem, k: int, l: int, resolution: float,
                         budget: int = DEFAULT_CELL_BUDGET) -> Optional[Cube]:
    """Largest grid-aligned cube whose finer sub-box centres all lie in both images.

    The answer is numerical evidence of interior, not a certificate.
    """
    if k == l:
        raise ValueError("need two distinct digits")
    fine = resolution / 2
    ras = _image_rasters(s, fine, (k, l), None, budget)
    both = ras[k].mask & ras[l].mask
    if not both.any():
        return None
    pts = ras[k].box_centers(both)
    tight = fine / 10
    ok_pts = membership_in_image(s, (k,), pts, tight, budget) & membership_in_image(s, (l,), pts, tight, budget)
    ok = np.zeros_like(both)
    ok[tuple(np.argwhere(both)[ok_pts].T)] = True
    origin = ras[k].origin
    best = None
    lo_t, hi_t = 1, min(ok.shape) // 2
    # t counts coarse boxes; a coarse-aligned window spans 2t fine boxes
    while lo_t <= hi_t:
        t = (lo_t + hi_t) // 2
        sums = _window_sums(ok, 2 * t)
        aligned = sums[tuple(slice(0, None, 2) for _ in range(ok.ndim))]
        hits = np.argwhere(aligned == (2 * t) ** ok.ndim)
        if len(hits):
            idx = hits[0] * 2
            best = Cube(tuple(float(v) for v in origin + idx * fine), 2 * t * fine)
            lo_t = t + 1
        else:
            hi_t = t - 1
    return best


@dataclass(frozen=True)
class DensityBound:
    bound: float
    overlap_lower: float
    delta_constant: Optional[float]
    cube: Optional[Cube]


def density_bound(s: IfsSystem, k: int, l: int, resolution: float,
                  cube: Optional[Cube] = None, search_cube: bool = True,
                  budget: int = DEFAULT_CELL_BUDGET) -> DensityBound:
    """Upper-density bound for the unique-coding set and the cube constant.

    bound = 1 - L(overlap) * min lam^d / (C(d) Diam^d), with C(d) the unit
    ball volume.  The cube constant is min(2^-d, L(C) min lam^d / (2 Diam)^d).
    """
    d = s.dimension
    est = overlap_measure(s, k, l, resolution, budget=budget)
    if not est.heuristic_lower or est.heuristic_lower <= 0:
        raise HypothesisNotWitnessed("no positive overlap estimate between the two images")
    lam_min = float(min(s.ratios)) ** d
    diam = s.diameter
    bound = 1 - est.heuristic_lower * lam_min / (unit_ball_volume(d) * diam ** d)
    if cube is None and search_cube:
        cube = interior_cube_search(s, k, l, resolution, budget)
    delta = None if cube is None else delta_constant(s, cube.volume)
    return DensityBound(bound, est.heuristic_lower, delta, cube)


def delta_constant(s: IfsSystem, cube_volume: float) -> float:
    d = s.dimension
    lam_min = float(min(s.ratios)) ** d
    return min(2.0 ** -d, cube_volume * lam_min / (2 * s.diameter) ** d)


class PrefixExhausted(ValueError):
    pass


def n_of_r(s: IfsSystem, prefix: Iterable[int], r) -> int:
    """The n with Diam * prod_{i<=n} lam < r <= Diam * prod_{i<n} lam.

    Exact in rational mode (pass ``r`` as a Fraction).
    """
    diam = s.hull_diameter
    if not 0 < r <= diam:
        raise ValueError("r must lie in (0, Diam]")
    prod = 1
    for n, e in enumerate(prefix, start=1):
        if not 1 <= e <= s.n:
            raise ValueError(f"digit {e} outside 1..{s.n}")
        nxt = prod * s.maps[e - 1].ratio
        if diam * nxt < r <= diam * prod:
            return n
        prod = nxt
    raise PrefixExhausted("prefix ended before the inequality was met")


# ---------------------------------------------------------------------------
# box counting

@dataclass(frozen=True)
class DimensionEstimate:
    slope: float
    stderr: float
    low: float
    high: float
    scales: tuple
    counts: tuple


def box_counting_dimension(cells, scales: Optional[Sequence[float]] = None) -> DimensionEstimate:
    """Least-squares slope of log(count) against log(1/scale).

    ``cells`` is a Cover (cell centres are counted), a Raster (covered box
    centres) or a point array.  The band is slope +/- 1.96 standard errors.
    For a Raster the default scales are 64, 32, ..., 1 times its cell size.
    """
    if scales is None:
        if not isinstance(cells, Raster):
            raise ValueError("scales are required unless cells is a Raster")
        scales = [cells.cell_size * 2 ** k for k in range(6, -1, -1)]
    if isinstance(cells, Cover):
        pts = cells.centers
    elif isinstance(cells, Raster):
        pts = cells.box_centers()
    else:
        pts = np.atleast_2d(np.asarray(cells, dtype=float))
    scales = [float(v) for v in scales]
    if len(scales) < 3 or any(b >= a for a, b in zip(scales, scales[1:])):
        raise ValueError("need at least three strictly decreasing scales")
    if len(pts) == 0:
        raise DegenerateDimension("empty set")
    base = pts.min(axis=0)
    counts = []
    for eps in scales:
        keys = np.floor((pts - base) / eps + 1e-9).astype(np.int64)
        counts.append(len(np.unique(keys, axis=0)))
    if all(c == 1 for c in counts):
        raise DegenerateDimension("a single occupied box at every scale")
    x = np.log(1 / np.array(scales))
    y = np.log(np.array(counts, dtype=float))
    fit = stats.linregress(x, y)
    err = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
    return DimensionEstimate(float(fit.slope), err, float(fit.slope - 1.96 * err), float(fit.slope + 1.96 * err),
                             tuple(scales), tuple(counts))
