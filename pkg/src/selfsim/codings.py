"""Admissible-prefix trees approximating the set of codings of a point.

A word ``w`` is admitted for ``x`` when ``x`` lies within tolerance of the
cylinder ``f_w(attractor)``, tested by pulling ``x`` back along ``w`` and
asking for membership within ``delta / contraction(w)``.  Pull-backs stretch
distances by ``1/ratio`` per level, so this keeps the tolerance uniform in
the original space.  Trees over-approximate the true coding set: a unique
path at depth N is trustworthy evidence, branching is confirmed separately
by a two-coding witness.

Consequence of the schedule: once ``delta / contraction`` exceeds the hull
diameter every digit passes, so depths past ``ifs.resolvable_depth`` carry
no information.

Trees for many roots are grown together, level by level, with nodes of one
root kept contiguous and children ordered digit-ascending under each parent.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import DEFAULT_CELL_BUDGET, membership_many, rasterize, Raster
from .ifs import EPS, IfsSystem

DEFAULT_NODE_CAP = 10 ** 6
DEFAULT_TOLERANCE = 1e-9


class Verdict(str, enum.Enum):
    UNIQUE = "UniquePathToDepth"
    BRANCHING = "Branching"
    SATURATED = "Saturated"


class SamplingStarvation(RuntimeError):
    pass


def kmp_table(pattern: Sequence[int], n: int) -> np.ndarray:
    """Automaton for factor search: ``table[state, digit-1]`` -> next state.

    ``state`` counts matched pattern digits; reaching ``len(pattern)`` means
    the pattern just occurred.  The final state is absorbing.
    """
    m = len(pattern)
    fail = [0] * (m + 1)
    k = 0
    for i in range(1, m):
        while k and pattern[i] != pattern[k]:
            k = fail[k]
        if pattern[i] == pattern[k]:
            k += 1
        fail[i + 1] = k
    table = np.zeros((m + 1, n), dtype=np.int32)
    for state in range(m + 1):
        for digit in range(1, n + 1):
            if state == m:
                table[state, digit - 1] = m
                continue
            k = state
            while k and pattern[k] != digit:
                k = fail[k]
            table[state, digit - 1] = k + 1 if pattern[k] == digit else 0
    return table


def kmp_feed(table: np.ndarray, word: Sequence[int], state: int = 0) -> int:
    for e in word:
        state = int(table[state, e - 1])
    return state


def expand(s: IfsSystem, y: np.ndarray, scale: np.ndarray, delta: float,
           budget: int = DEFAULT_CELL_BUDGET) -> tuple:
    """Admissible children of nodes with residuals ``y`` and tolerance scales ``scale``.

    Returns ``(parent, digit, y_child, scale_child)``; children are ordered by
    parent, then by ascending digit.
    """
    lam, shift = s.ratios, s.shifts
    d = s.dimension
    cy = (y[:, None, :] - shift[None, :, :]) / lam[None, :, None]
    cs = scale[:, None] / lam[None, :]
    ok = membership_many(s, cy.reshape(-1, d), (delta * cs).ravel(), budget)
    flat = np.nonzero(ok)[0]
    parent = (flat // s.n).astype(np.int64)
    digit = (flat % s.n + 1).astype(np.uint8)
    return parent, digit, cy.reshape(-1, d)[flat], cs.ravel()[flat]


def admissible_digits(s: IfsSystem, x, delta: float) -> set:
    """Digits j such that ``x`` is within ``delta`` of ``f_j(attractor)``."""
    y = np.atleast_2d(np.asarray([float(v) for v in np.atleast_1d(x)]))
    _, digit, _, _ = expand(s, y, np.ones(1), delta)
    return {int(e) for e in digit}


@dataclass
class Growth:
    """Level counts for a batch of coding trees grown together."""
    roots: np.ndarray
    depth: int
    tolerance: float
    counts: np.ndarray            # (roots, depth+1) float word counts, counts[:, 0] == 1
    reached: np.ndarray           # last complete level per root
    saturated: np.ndarray
    found: np.ndarray             # pattern seen (pattern mode) / early branching
    stored: np.ndarray            # distinct nodes kept per root

    def count(self, i: int, level: Optional[int] = None) -> int:
        level = int(self.reached[i]) if level is None else level
        return int(round(self.counts[i, level]))


def _merge(keys: list, n: int) -> tuple:
    """Group rows with identical keys; returns (group of each row, first row of each group).

    ``keys[1]`` must be the first residual coordinate; when it has no repeated
    value no two rows can coincide and the sort over all keys is skipped.

    Groups are numbered in order of their first row, so tree order survives.
    """
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    probe = np.sort(keys[1])
    if not (probe[1:] == probe[:-1]).any():
        ident = np.arange(n)
        return ident, ident
    order = np.lexsort(keys[::-1])
    new = np.zeros(n, dtype=bool)
    new[0] = True
    for key in keys:
        ks = key[order]
        new[1:] |= ks[1:] != ks[:-1]
    gid_sorted = np.cumsum(new) - 1
    first_sorted = order[new]                  # lexsort is stable: first row of each group
    rank = np.empty(len(first_sorted), dtype=np.int64)
    rank[np.argsort(first_sorted, kind="stable")] = np.arange(len(first_sorted))
    group = np.empty(n, dtype=np.int64)
    group[order] = rank[gid_sorted]
    return group, np.sort(first_sorted)


def grow(s: IfsSystem, roots, depth: int, delta: float = DEFAULT_TOLERANCE,
         cap: int = DEFAULT_NODE_CAP, stop: Optional[str] = None,
         pattern: Optional[Sequence[int]] = None,
         budget: int = DEFAULT_CELL_BUDGET) -> Growth:
    """Count admissible prefixes of every root, level by level, to ``depth``.

    Nodes of one root that reach bitwise identical residuals (with equal
    tolerance scale and automaton state) have identical subtrees, so they are
    stored once with a multiplicity; level counts ``b(k)`` still count words.
    Exact overlaps such as ratio 1/2 with integer digits collapse to a few
    nodes per level this way.  ``cap`` bounds the distinct nodes per root; a
    root exceeding it is marked saturated and frozen at its last complete
    level.

    ``stop="branching"`` retires a root as soon as a level holds two words.
    That is sound for deciding uniqueness: an admitted node always has an
    admitted child (the cover ball that witnessed its membership has a
    child ball witnessing the child's), so level counts never decrease.
    ``pattern`` retires a root once some node word contains it as a factor.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    roots = np.asarray(roots, dtype=float)
    if roots.ndim == 1:
        roots = roots[:, None] if s.dimension == 1 else roots[None, :]
    q = len(roots)
    counts = np.zeros((q, depth + 1))
    counts[:, 0] = 1
    reached = np.zeros(q, dtype=np.int64)
    saturated = np.zeros(q, dtype=bool)
    found = np.zeros(q, dtype=bool)
    stored = np.ones(q, dtype=np.int64)
    table = None if pattern is None else kmp_table(list(pattern), s.n)
    plen = 0 if pattern is None else len(pattern)

    owner = np.arange(q)
    y = roots.copy()
    scale = np.ones(q)
    mult = np.ones(q)
    kstate = np.zeros(q, dtype=np.int64)
    active = np.ones(q, dtype=bool)
    for k in range(1, depth + 1):
        if not len(owner):
            break
        parent, digit, y, scale = expand(s, y, scale, delta, budget)
        owner, mult = owner[parent], mult[parent]
        keys = [owner] + [y[:, i] for i in range(s.dimension)] + [scale]
        if table is not None:
            kstate = table[kstate[parent], digit.astype(np.int64) - 1]
            keys.append(kstate)
        group, first = _merge(keys, len(owner))
        mult = np.bincount(group, weights=mult, minlength=len(first))
        owner, y, scale = owner[first], y[first], scale[first]
        if table is not None:
            kstate = kstate[first]
        level_counts = np.bincount(owner, weights=mult, minlength=q)
        counts[active, k] = level_counts[active]
        stored += np.where(active, np.bincount(owner, minlength=q), 0)
        over = active & (stored > cap)
        if over.any():
            saturated |= over
            counts[over, k] = 0
            active &= ~over
        reached[active] = k
        retire = np.zeros(q, dtype=bool)
        if table is not None:
            hit = np.unique(owner[kstate == plen])
            hit = hit[active[hit]]
            found[hit] = True
            retire[hit] = True
        if stop == "branching":
            br = active & (level_counts >= 2)
            found |= br
            retire |= br
        active &= ~retire
        keep = active[owner]
        y, scale, owner, mult = y[keep], scale[keep], owner[keep], mult[keep]
        if table is not None:
            kstate = kstate[keep]
    return Growth(roots, depth, float(delta), counts, reached, saturated, found, stored)


def admissible_words(s: IfsSystem, x, level: int, delta: float = DEFAULT_TOLERANCE,
                     limit: int = 10 ** 5) -> list:
    """Every admitted word of length ``level``, in tree order (digit-ascending)."""
    y = np.atleast_2d(np.asarray([float(v) for v in np.atleast_1d(x)]))
    scale = np.ones(1)
    words = [()]
    for _ in range(level):
        parent, digit, y, scale = expand(s, y, scale, delta)
        words = [words[p] + (int(e),) for p, e in zip(parent, digit)]
        if len(words) > limit:
            raise ValueError(f"more than {limit} words at this level")
    return words


# ---------------------------------------------------------------------------
# single-point trees

@dataclass
class CodingTree:
    system: IfsSystem
    root: tuple
    depth: int
    tolerance: float
    growth: Growth = field(repr=False)

    @property
    def counts(self) -> list:
        """``[b(1), ..., b(depth)]``; zero past the last complete level."""
        return [int(round(v)) for v in self.growth.counts[0, 1:]]

    @property
    def saturated(self) -> bool:
        return bool(self.growth.saturated[0])

    @property
    def reached(self) -> int:
        return int(self.growth.reached[0])

    def words(self, level: int, limit: int = 10 ** 5) -> list:
        if level > self.reached:
            return []
        return admissible_words(self.system, self.root, level, self.tolerance, limit)

    def nodes(self, limit: int = 10 ** 5) -> set:
        out = set()
        for k in range(self.reached + 1):
            out.update(self.words(k, limit))
        return out

    def leaves(self, limit: int = 10 ** 5) -> list:
        return self.words(self.reached, limit)


def enumerate_prefixes(s: IfsSystem, x, depth: int, delta: float = DEFAULT_TOLERANCE,
                       cap: int = DEFAULT_NODE_CAP) -> CodingTree:
    root = tuple(float(v) for v in np.atleast_1d(x))
    g = grow(s, np.array([root]), depth, delta, cap)
    return CodingTree(s, root, depth, float(delta), g)


@dataclass(frozen=True)
class CodingClass:
    verdict: Verdict
    count: int
    depth: int
    exponent: Optional[float]


def _classify_row(count: int, depth: int, saturated: bool) -> CodingClass:
    if saturated:
        return CodingClass(Verdict.SATURATED, count, depth, None)
    if count == 0:
        raise ValueError("point is not within tolerance of the attractor")
    if count == 1:
        return CodingClass(Verdict.UNIQUE, 1, depth, None)
    exponent = math.log(count) / depth if count >= 2 else None
    return CodingClass(Verdict.BRANCHING, count, depth, exponent)


def classify(tree: CodingTree) -> CodingClass:
    return _classify_row(tree.growth.count(0), tree.depth, tree.saturated)


# ---------------------------------------------------------------------------
# witnesses and consistency

def prefix_consistent(s: IfsSystem, words: np.ndarray, x: np.ndarray, delta: float) -> np.ndarray:
    """Check ``dist(f_w(p_1), x) <= Diam * contraction(w) + 1.5 delta`` row-wise.

    ``p_1`` (a point of the hull) replaces the seed 0 of the coding
    definition; the limit does not depend on the seed.  The 1.5 factor is the
    worst-case slack of membership within ``delta``.
    """
    words = np.atleast_2d(words)
    lam, shift = s.ratios, s.shifts
    z = np.repeat(s.anchors[:1], len(words), axis=0)
    rho = np.ones(len(words))
    for pos in range(words.shape[1] - 1, -1, -1):
        dig = words[:, pos] - 1
        z = lam[dig, None] * z + shift[dig]
        rho *= lam[dig]
    dist = np.linalg.norm(z - np.atleast_2d(x), axis=1)
    slack = 64 * EPS * (s.diameter + np.linalg.norm(np.atleast_2d(x), axis=1)) * (words.shape[1] + 1)
    return dist <= s.diameter * rho + 1.5 * delta + slack


@dataclass(frozen=True)
class Witness:
    common_prefix: tuple
    digits: tuple
    leaves: tuple
    confirmed: bool


def _first_children(s, y, scale, delta):
    """Leftmost admissible child of every node, and the runner-up where one exists."""
    parent, digit, cy, cs = expand(s, y, scale, delta)
    cnt = np.bincount(parent, minlength=len(y))
    start = np.concatenate([[0], np.cumsum(cnt)[:-1]])
    picks = []
    for ok, offset in ((cnt > 0, 0), (cnt > 1, 1)):
        d, yy, ss = np.zeros(len(y), dtype=np.int64), y.copy(), scale.copy()
        idx = start[ok] + offset
        d[ok], yy[ok], ss[ok] = digit[idx], cy[idx], cs[idx]
        picks.append((ok, d, yy, ss))
    return picks


def two_coding_witnesses(s: IfsSystem, roots, depth: int, delta: float = DEFAULT_TOLERANCE) -> list:
    """Two distinct admitted depth-N words per root, or None where none exist.

    The first word follows the leftmost admissible digit.  The second leaves
    it at the deepest node of that path with another admissible digit l and
    then continues leftmost; every admitted node has an admitted child, so
    it reaches depth N.  A witness is confirmed when both words pass the
    prefix-consistency bound and both digits k < l are re-admitted at the
    residual of the common prefix.
    """
    roots = np.atleast_2d(np.asarray(roots, dtype=float))
    q = len(roots)
    y, scale = roots.copy(), np.ones(q)
    path = np.zeros((q, depth), dtype=np.int64)
    alive = np.ones(q, dtype=bool)
    branch = np.full(q, -1)
    alt = np.zeros(q, dtype=np.int64)
    alt_y, alt_scale = roots.copy(), np.ones(q)
    for k in range(depth):
        (ok, d1, y1, s1), (two, d2, y2, s2) = _first_children(s, y, scale, delta)
        alive &= ok
        upd = alive & two
        branch[upd], alt[upd], alt_y[upd], alt_scale[upd] = k, d2[upd], y2[upd], s2[upd]
        path[:, k], y, scale = d1, y1, s1
    other = path.copy()
    has = alive & (branch >= 0)
    other[has, branch[has]] = alt[has]
    y, scale = alt_y, alt_scale
    for k in range(1, depth):
        act = has & (branch + k < depth)
        if not act.any():
            break
        (ok, d1, y1, s1), _ = _first_children(s, y[act], scale[act], delta)
        idx = np.nonzero(act)[0]
        has[idx[~ok]] = False
        other[idx, branch[idx] + k] = d1
        y[idx], scale[idx] = y1, s1
    out = [None] * q
    rows = np.nonzero(has)[0]
    if not len(rows):
        return out
    ok_a = prefix_consistent(s, path[rows], roots[rows], delta)
    ok_b = prefix_consistent(s, other[rows], roots[rows], delta)
    for n, i in enumerate(rows):
        m = int(branch[i])
        prefix = tuple(int(e) for e in path[i, :m])
        k, l = int(path[i, m]), int(other[i, m])
        res = roots[i:i + 1].copy()
        sc = 1.0
        for e in prefix:
            res = (res - s.shifts[e - 1]) / s.ratios[e - 1]
            sc /= s.ratios[e - 1]
        _, digit, _, _ = expand(s, res, np.array([sc]), delta)
        admitted = {int(e) for e in digit}
        confirmed = bool(ok_a[n] and ok_b[n] and k < l and k in admitted and l in admitted)
        out[i] = Witness(prefix, (k, l), (tuple(int(e) for e in path[i]), tuple(int(e) for e in other[i])),
                         confirmed)
    return out


# ---------------------------------------------------------------------------
# experiments

@dataclass
class SampleRow:
    index: int
    point: tuple
    verdict: Verdict
    count: int
    exponent: Optional[float]
    witness: Optional[bool]


@dataclass
class ExperimentResult:
    samples: int
    depth: int
    seed: int
    tolerance: float
    rows: list
    rejected: int

    def fraction(self, verdict: Verdict) -> float:
        return sum(r.verdict == verdict for r in self.rows) / len(self.rows)

    @property
    def fractions(self) -> dict:
        return {v.value: self.fraction(v) for v in Verdict}

    @property
    def witnesses_confirmed(self) -> bool:
        return all(r.witness for r in self.rows if r.verdict == Verdict.BRANCHING)

    def to_csv(self) -> str:
        lines = ["index,point,verdict,count,exponent,witness"]
        for r in self.rows:
            pt = " ".join(repr(float(v)) for v in r.point)
            exp = "" if r.exponent is None else repr(r.exponent)
            wit = "" if r.witness is None else str(bool(r.witness)).lower()
            lines.append(f'{r.index},"{pt}",{r.verdict.value},{r.count},{exp},{wit}')
        return "\n".join(lines) + "\n"


def default_resolution(s: IfsSystem) -> float:
    return s.diameter / 1024


def sample_points(s: IfsSystem, samples: int, seed: int, resolution: Optional[float] = None,
                  raster: Optional[Raster] = None, budget: int = DEFAULT_CELL_BUDGET) -> tuple:
    """Uniform draws over covered raster boxes kept when inside within resolution/10.

    Each sample has its own generator spawned from ``seed``, so the i-th point
    does not depend on how many draws other samples needed.
    """
    h = default_resolution(s) if resolution is None else resolution
    ras = raster if raster is not None else rasterize(s, h, budget=budget)
    idx = np.argwhere(ras.mask)
    gens = [np.random.default_rng(ss) for ss in np.random.SeedSequence(seed).spawn(samples)]
    pts = np.zeros((samples, s.dimension))
    pending = np.arange(samples)
    attempts = rejected = 0
    while len(pending):
        cand = np.array([ras.origin + (idx[g.integers(len(idx))] + g.random(s.dimension)) * ras.cell_size
                         for g in (gens[i] for i in pending)])
        ok = membership_many(s, cand, ras.cell_size / 10, budget)
        pts[pending[ok]] = _snap(s, cand[ok], ras.cell_size / 10, [gens[i] for i in pending[ok]])
        attempts += len(pending)
        rejected += int((~ok).sum())
        pending = pending[~ok]
        if attempts >= 1000 and rejected > 0.999 * attempts:
            raise SamplingStarvation(f"{rejected} of {attempts} draws rejected")
    return pts, rejected


def _snap(s: IfsSystem, pts: np.ndarray, tol: float, gens: list) -> np.ndarray:
    """Replace points within ``tol`` of the attractor by nearby attractor points.

    Descends along the first admissible digit until the cylinder is smaller
    than ``tol``, then maps a random deep point of the attractor into it.
    """
    if not len(pts):
        return pts
    lam, shift = s.ratios, s.shifts
    y = pts.copy()
    scale = np.ones(len(pts))
    words = [[] for _ in pts]
    open_ = np.ones(len(pts), dtype=bool)
    while open_.any():
        rows = np.nonzero(open_)[0]
        parent, digit, cy, cs = expand(s, y[rows], scale[rows], tol)
        first = np.unique(parent, return_index=True)[1]
        if len(first) < len(rows):
            raise SamplingStarvation("accepted point lost its cover during descent")
        for r, j in zip(rows, digit[first]):
            words[r].append(int(j))
        y[rows], scale[rows] = cy[first], cs[first]
        open_[rows] = s.diameter / scale[rows] >= tol
    out = np.zeros_like(pts)
    tail = int(math.ceil(math.log(EPS) / math.log(float(lam.max())))) + 1
    for i, (w, g) in enumerate(zip(words, gens)):
        full = w + list(g.integers(1, s.n + 1, tail))
        z = s.anchors[0].astype(float)
        for e in reversed(full):
            z = lam[e - 1] * z + shift[e - 1]
        out[i] = z
    return out


def sample_experiment(s: IfsSystem, samples: int, depth: int, seed: int = 0,
                      delta: float = DEFAULT_TOLERANCE, resolution: Optional[float] = None,
                      cap: int = DEFAULT_NODE_CAP, points: Optional[np.ndarray] = None,
                      chunk: int = 64) -> ExperimentResult:
    """Classify the coding trees of random attractor points."""
    if points is None:
        points, rejected = sample_points(s, samples, seed, resolution)
    else:
        points, rejected = np.atleast_2d(np.asarray(points, dtype=float)), 0
    rows = []
    for a in range(0, len(points), chunk):
        block = points[a:a + chunk]
        g = grow(s, block, depth, delta, cap)
        classes = [_classify_row(g.count(i), depth, bool(g.saturated[i]))
                   for i in range(len(block))]
        branching = [i for i, c in enumerate(classes) if c.verdict == Verdict.BRANCHING]
        found = two_coding_witnesses(s, block[branching], depth, delta) if branching else []
        wit = {i: w is not None and w.confirmed for i, w in zip(branching, found)}
        for i, c in enumerate(classes):
            rows.append(SampleRow(a + i, tuple(float(v) for v in block[i]), c.verdict, c.count,
                                  c.exponent, wit.get(i)))
    return ExperimentResult(len(points), depth, seed, float(delta), rows, rejected)


# ---------------------------------------------------------------------------
# univoque and forbidden-block approximations

@dataclass
class SetApprox:
    depth: int
    resolution: float
    raster: Raster                # retained boxes
    probes: int
    block: Optional[tuple] = None

    @property
    def retained(self) -> int:
        return int(self.raster.mask.sum())

    @property
    def measure(self) -> float:
        return self.raster.covered_volume

    def to_csv(self) -> str:
        lines = ["box_index,center"]
        for idx, c in zip(np.argwhere(self.raster.mask), self.raster.box_centers()):
            lines.append('"%s","%s"' % (" ".join(str(int(i)) for i in idx),
                                        " ".join(repr(float(v)) for v in c)))
        return "\n".join(lines) + "\n"


def _probes(ras: Raster, seed: int) -> np.ndarray:
    jitter = np.random.default_rng(seed).uniform(-0.25, 0.25, ras.dimension) * ras.cell_size
    return ras.box_centers() + jitter


def univoque_cover(s: IfsSystem, depth: int, resolution: float, delta: float = DEFAULT_TOLERANCE,
                   seed: int = 0, cap: int = DEFAULT_NODE_CAP, chunk: int = 4096,
                   raster: Optional[Raster] = None) -> SetApprox:
    """Covered boxes whose (jittered) centre has a unique admissible path to ``depth``."""
    ras = raster if raster is not None else rasterize(s, resolution)
    probes = _probes(ras, seed)
    keep = np.zeros(len(probes), dtype=bool)
    for a in range(0, len(probes), chunk):
        g = grow(s, probes[a:a + chunk], depth, delta, cap, stop="branching")
        keep[a:a + chunk] = (~g.saturated) & (~g.found) & (np.round(g.counts[:, depth]) == 1)
    mask = np.zeros_like(ras.mask)
    mask[tuple(np.argwhere(ras.mask)[keep].T)] = True
    return SetApprox(depth, ras.cell_size, ras.like(mask), len(probes))


def forbidden_block_cover(s: IfsSystem, block: Sequence[int], depth: int, resolution: float,
                          delta: float = DEFAULT_TOLERANCE, seed: int = 0,
                          cap: int = DEFAULT_NODE_CAP, chunk: int = 1024,
                          raster: Optional[Raster] = None) -> SetApprox:
    """Covered boxes whose probe's depth-N tree has no node containing ``block``."""
    block = s.check_word(block)
    if not block:
        raise ValueError("block must be non-empty")
    if len(block) > depth:
        raise ValueError("block is longer than the search depth")
    ras = raster if raster is not None else rasterize(s, resolution)
    probes = _probes(ras, seed)
    keep = np.zeros(len(probes), dtype=bool)
    for a in range(0, len(probes), chunk):
        g = grow(s, probes[a:a + chunk], depth, delta, cap, pattern=block)
        keep[a:a + chunk] = (~g.saturated) & (~g.found) & (g.counts[:, depth] >= 1)
    mask = np.zeros_like(ras.mask)
    mask[tuple(np.argwhere(ras.mask)[keep].T)] = True
    return SetApprox(depth, ras.cell_size, ras.like(mask), len(probes), block)
