"""Iterated function systems of similitudes without rotation.

Every map has the form ``f_j(x) = ratio_j * x + (1 - ratio_j) * anchor_j``,
so ``anchor_j`` is the fixed point of ``f_j``.  Digits are 1-based throughout
(``1..n``) and a word ``(e1, ..., eN)`` acts as ``f_e1(f_e2(...f_eN(x)))``:
the first digit is the outermost map, so prefixes of a coding correspond to
nested cylinders.

A system built from rational data (``Fraction``/``int`` ratios and anchors)
runs in exact mode: scalar operations stay in ``Fraction`` and comparisons
such as ``sum ratio**d == 1`` are decided exactly.  Otherwise values are
floats and the ``*_error`` helpers give worst-case rounding bounds.

A coding is defined through the limit of ``f_e1...f_eN(0)``; this module (and
everything downstream) uses the equivalent cylinder description
``x in f_e1...f_eN(attractor)`` for every N.  The two agree because the limit
of a contraction sequence does not depend on the seed point.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

Number = Union[Fraction, float]
Point = tuple
Word = tuple

EPS = float(np.finfo(float).eps)


class DimensionMismatch(ValueError):
    pass


class DegenerateHullWarning(UserWarning):
    pass


def parse_number(value, exact: bool | None = None) -> Number:
    """Parse ``"p/q"``, ints, floats or numeric strings.

    Strings and ints are read as rationals; floats stay floats.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except ValueError:
            return float(text)
    raise TypeError(f"cannot parse {value!r} as a number")


def _is_exact(value) -> bool:
    return isinstance(value, (Fraction, int)) and not isinstance(value, bool)


def _as_point(x, d: int | None = None) -> Point:
    if isinstance(x, (int, float, Fraction)) and not isinstance(x, bool):
        pt = (x,)
    else:
        pt = tuple(x)
    if d is not None and len(pt) != d:
        raise DimensionMismatch(f"expected a point of dimension {d}, got {len(pt)}")
    return pt


@dataclass(frozen=True)
class Contraction:
    ratio: Number
    anchor: Point

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ValueError(f"contraction ratio must lie in (0, 1), got {self.ratio}")
        object.__setattr__(self, "anchor", _as_point(self.anchor))

    @property
    def dimension(self) -> int:
        return len(self.anchor)

    @property
    def exact(self) -> bool:
        return _is_exact(self.ratio) and all(_is_exact(a) for a in self.anchor)


def apply(c: Contraction, x) -> Point:
    """Image of ``x`` under ``c``."""
    x = _as_point(x, c.dimension)
    lam = c.ratio
    return tuple(lam * xi + (1 - lam) * pi for xi, pi in zip(x, c.anchor))


def preimage(c: Contraction, x) -> Point:
    """The unique ``y`` with ``apply(c, y) == x``."""
    x = _as_point(x, c.dimension)
    lam = c.ratio
    return tuple((xi - (1 - lam) * pi) / lam for xi, pi in zip(x, c.anchor))


def apply_error(c: Contraction, x) -> float:
    """Worst-case absolute rounding error of ``apply`` per coordinate (0 if exact)."""
    x = _as_point(x, c.dimension)
    if c.exact and all(_is_exact(v) for v in x):
        return 0.0
    lam = float(c.ratio)
    scale = max(abs(lam * float(xi)) + abs((1 - lam) * float(pi)) for xi, pi in zip(x, c.anchor))
    return 4 * EPS * scale


def preimage_error(c: Contraction, x) -> float:
    x = _as_point(x, c.dimension)
    if c.exact and all(_is_exact(v) for v in x):
        return 0.0
    lam = float(c.ratio)
    scale = max(abs(float(xi)) + abs((1 - lam) * float(pi)) for xi, pi in zip(x, c.anchor))
    return 4 * EPS * scale / lam


@dataclass(frozen=True)
class IfsSystem:
    """A finite family of similitudes together with its hull data."""

    maps: tuple
    dimension: int = field(init=False)
    hull: np.ndarray = field(init=False, repr=False, compare=False)
    hull_diameter: Number = field(init=False, repr=False, compare=False)
    ball_center: np.ndarray = field(init=False, repr=False, compare=False)
    ball_radius: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        maps = tuple(self.maps)
        if len(maps) < 2:
            raise ValueError("an IFS needs at least two maps")
        d = maps[0].dimension
        if any(m.dimension != d for m in maps):
            raise DimensionMismatch("all anchors must share one dimension")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "dimension", d)
        hull = _hull_vertices(self.anchors_exact(), d)
        object.__setattr__(self, "hull", hull)
        object.__setattr__(self, "hull_diameter", _max_pairwise_distance(hull, self.exact))
        pts = np.array([[float(v) for v in p] for p in hull], dtype=float)
        center = pts.mean(axis=0)
        radius = float(np.max(np.linalg.norm(pts - center, axis=1)))
        # tiny inflation so float images of the anchors never escape the ball
        radius *= 1 + 64 * EPS
        object.__setattr__(self, "ball_center", center)
        object.__setattr__(self, "ball_radius", radius)
        object.__setattr__(self, "_cache", {})

    # -- basic views ---------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.maps)

    @property
    def exact(self) -> bool:
        return all(m.exact for m in self.maps)

    @property
    def homogeneous(self) -> bool:
        return len({m.ratio for m in self.maps}) == 1

    @property
    def ratios(self) -> np.ndarray:
        return np.array([float(m.ratio) for m in self.maps])

    @property
    def anchors(self) -> np.ndarray:
        return np.array([[float(v) for v in m.anchor] for m in self.maps])

    @property
    def shifts(self) -> np.ndarray:
        """``(1 - ratio_j) * anchor_j`` as an ``(n, d)`` float array."""
        return (1 - self.ratios)[:, None] * self.anchors

    def anchors_exact(self) -> list:
        return [m.anchor for m in self.maps]

    @property
    def diameter(self) -> float:
        return float(self.hull_diameter)

    def check_word(self, w) -> Word:
        w = tuple(int(e) for e in w)
        for e in w:
            if not 1 <= e <= self.n:
                raise ValueError(f"digit {e} outside 1..{self.n}")
        return w

    # -- serialization -------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "IfsSystem":
        d = int(data["dimension"])
        raw = [(parse_number(m["ratio"]), [parse_number(a) for a in _as_point(m["anchor"])])
               for m in data["maps"]]
        exact = all(_is_exact(r) and all(_is_exact(a) for a in anc) for r, anc in raw)
        maps = []
        for r, anc in raw:
            if not exact:
                r, anc = float(r), [float(a) for a in anc]
            if len(anc) != d:
                raise DimensionMismatch(f"anchor {anc} does not have dimension {d}")
            maps.append(Contraction(r, tuple(anc)))
        return cls(tuple(maps))

    @classmethod
    def from_json(cls, text: str) -> "IfsSystem":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "IfsSystem":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict:
        def enc(v):
            return f"{v.numerator}/{v.denominator}" if isinstance(v, Fraction) else float(v)
        return {"dimension": self.dimension,
                "maps": [{"ratio": enc(m.ratio), "anchor": [enc(a) for a in m.anchor]}
                         for m in self.maps]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _hull_vertices(points: list, d: int) -> np.ndarray:
    uniq = []
    for p in points:
        if p not in uniq:
            uniq.append(p)
    if d == 1:
        vals = sorted(p[0] for p in uniq)
        out = [vals[0]] if vals[0] == vals[-1] else [vals[0], vals[-1]]
        return np.array([(v,) for v in out], dtype=object)
    arr = np.array([[float(v) for v in p] for p in uniq])
    rank = np.linalg.matrix_rank(arr[1:] - arr[0]) if len(arr) > 1 else 0
    if rank < d:
        warnings.warn("anchors are affinely dependent; the hull is lower dimensional",
                      DegenerateHullWarning, stacklevel=3)
        return np.array(uniq, dtype=object)
    from scipy.spatial import ConvexHull
    idx = sorted(ConvexHull(arr).vertices)
    return np.array([uniq[i] for i in idx], dtype=object)


def _max_pairwise_distance(hull: np.ndarray, exact: bool) -> Number:
    best = 0
    pts = [tuple(p) for p in hull]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            sq = sum((a - b) ** 2 for a, b in zip(pts[i], pts[j]))
            if exact and isinstance(sq, Fraction) and len(pts[0]) == 1:
                dist = abs(pts[i][0] - pts[j][0])
            else:
                dist = math.sqrt(float(sq))
            best = max(best, dist)
    return best


# -- word operations -----------------------------------------------------------

def apply_word(s: IfsSystem, w, x) -> Point:
    """``f_w1(f_w2(...f_wN(x)))``; the empty word is the identity."""
    w = s.check_word(w)
    x = _as_point(x, s.dimension)
    for e in reversed(w):
        x = apply(s.maps[e - 1], x)
    return x


def apply_word_error(s: IfsSystem, w, x) -> float:
    """Rounding bound for ``apply_word`` in float mode.

    Errors committed at inner steps are damped by the outer contractions, so
    the total stays within a geometric sum of per-step bounds.
    """
    w = s.check_word(w)
    x = _as_point(x, s.dimension)
    total = 0.0
    for e in reversed(w):
        c = s.maps[e - 1]
        total = float(c.ratio) * total + apply_error(c, x)
        x = apply(c, x)
    return total


def word_contraction(s: IfsSystem, w) -> Number:
    w = s.check_word(w)
    out = Fraction(1) if s.exact else 1.0
    for e in w:
        out *= s.maps[e - 1].ratio
    return out


def diameter_bound(s: IfsSystem, w) -> Number:
    """``Diam(hull) * contraction(w)``: the diameter of the cylinder image of the hull."""
    return s.hull_diameter * word_contraction(s, w)


def similarity_sum(s: IfsSystem) -> tuple:
    """``(sum ratio_j**d, flag)`` with flag one of ``"<1"``, ``"=1"``, ``">1"``."""
    d = s.dimension
    total = sum(m.ratio ** d for m in s.maps)
    if s.exact:
        diff = total - 1
    else:
        tol = 8 * EPS * s.n * d
        diff = 0 if abs(total - 1) <= tol else total - 1
    flag = "=1" if diff == 0 else ("<1" if diff < 0 else ">1")
    return total, flag


def resolvable_depth(s: IfsSystem, delta: float) -> int:
    """Depth beyond which a tolerance ``delta`` swamps every cylinder.

    Past this depth ``delta / contraction`` exceeds the hull diameter and the
    admissibility tests of the coding tree accept essentially every digit.
    """
    lam = float(max(s.ratios))
    return int(math.floor(math.log(delta / s.diameter) / math.log(lam)))


# -- standard systems ------------------------------------------------------------

def homogeneous(ratio, anchors: Iterable) -> IfsSystem:
    return IfsSystem(tuple(Contraction(ratio, _as_point(p)) for p in anchors))


def unit_interval() -> IfsSystem:
    """Two maps of ratio 1/2 fixing 0 and 1; the attractor is [0, 1]."""
    return homogeneous(Fraction(1, 2), [(Fraction(0),), (Fraction(1),)])


def cantor() -> IfsSystem:
    return homogeneous(Fraction(1, 3), [(Fraction(0),), (Fraction(1),)])


def bernoulli(lam) -> IfsSystem:
    """``x -> lam*x`` and ``x -> lam*x + lam``; the attractor lies in [0, lam/(1-lam)].

    Codings in this system are exactly the lam-expansions over digits {0, 1}.
    """
    lam = parse_number(lam)
    top = lam / (1 - lam)
    zero = Fraction(0) if isinstance(lam, Fraction) else 0.0
    return homogeneous(lam, [(zero,), (top,)])


def sierpinski(lam) -> IfsSystem:
    """Three maps fixing the vertices of the unit equilateral triangle."""
    lam = float(parse_number(lam))
    verts = [(0.0, 0.0), (1.0, 0.0), (0.5, math.sqrt(3) / 2)]
    return homogeneous(lam, verts)


def triangle_area() -> float:
    return math.sqrt(3) / 4
