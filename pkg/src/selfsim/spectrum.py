"""Finite truncations of the spectrum {sum_{i<=m} e_i q^i : e_i in {0,1}}, q = 1/lam.

Three arithmetic modes:

* ``integer``: q is an integer, sums are exact ints;
* ``quadratic``: q is a root of q^2 = p q + r (golden ratio, 1 + sqrt 2),
  sums are exact pairs (a, b) meaning a + b q, so coincidences are detected
  exactly;
* ``float``: anything else, deduplicated with a relative tolerance.

Sums using exponents above m are at least q^(m+1), so a degree-m table is
complete on [0, q^(m+1)); gap statistics are taken inside that range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

DEFAULT_DEGREE_CAP = 22
FLOAT_DEDUP = 1e-12
KOMORNIK_LORETI_RECIPROCAL = 0.559524      # 1 / 1.787231...
GOLDEN_RECIPROCAL = (math.sqrt(5) - 1) / 2

QUADRATIC = {
    "phi": (1, 1),
    "golden": (1, 1),
    "silver": (2, 1),
    "1+sqrt2": (2, 1),
}


class DegreeCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class Base:
    label: str
    q: float
    mode: str                          # integer | quadratic | float
    poly: Optional[tuple] = None       # (p, r) with q^2 = p q + r

    @classmethod
    def parse(cls, text) -> "Base":
        """Read ``"phi"``, ``"silver"``, ``"1+sqrt2"``, an integer or a real > 1."""
        key = str(text).strip().lower()
        if key in QUADRATIC:
            p, r = QUADRATIC[key]
            return cls(key, (p + math.sqrt(p * p + 4 * r)) / 2, "quadratic", (p, r))
        try:
            k = int(key)
        except ValueError:
            q = float(key)
        else:
            if k < 2:
                raise ValueError("an integer base must be at least 2")
            return cls(key, float(k), "integer")
        if q.is_integer() and q >= 2:
            return cls(key, q, "integer")
        if not 1 < q < 2:
            raise ValueError("a non-integer base must lie in (1, 2)")
        return cls(key, q, "float")

    @classmethod
    def from_ratio(cls, lam) -> "Base":
        from fractions import Fraction
        lam = Fraction(lam) if isinstance(lam, str) else lam
        q = 1 / lam
        if isinstance(q, Fraction) and q.denominator == 1:
            return cls.parse(str(q.numerator))
        return cls.parse(repr(float(q)))

    @property
    def lam(self) -> float:
        return 1 / self.q


@dataclass
class SpectrumTable:
    base: Base
    degree: int
    values: np.ndarray                 # sorted floats
    exact: Optional[np.ndarray] = None  # int column(s) matching values

    @property
    def gaps(self) -> np.ndarray:
        if self.exact is None:
            return np.diff(self.values)
        if self.base.mode == "integer":
            return np.diff(self.exact[:, 0]).astype(float)
        d = np.diff(self.exact, axis=0)
        return d[:, 0] + d[:, 1] * self.base.q

    @property
    def complete_below(self) -> float:
        return self.base.q ** (self.degree + 1)

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self) -> str:
        lines = ["k,y,gap"]
        gaps = self.gaps
        for k, y in enumerate(self.values, start=1):
            g = repr(float(gaps[k - 1])) if k <= len(gaps) else ""
            lines.append(f"{k},{float(y)!r},{g}")
        return "\n".join(lines) + "\n"


def _subset_sums(cols: np.ndarray) -> np.ndarray:
    """All 0/1 combinations of the rows of ``cols`` (shape (k, c)), in binary order."""
    out = np.zeros((1, cols.shape[1]), dtype=cols.dtype)
    for row in cols:
        out = np.concatenate([out, out + row])
    return out


def _powers(base: Base, m: int) -> np.ndarray:
    if base.mode == "integer":
        return np.array([[int(base.q) ** i] for i in range(m + 1)], dtype=object if m > 60 else np.int64)
    if base.mode == "quadratic":
        p, r = base.poly
        rows, a, b = [], 1, 0            # q^i = a + b q
        for _ in range(m + 1):
            rows.append((a, b))
            a, b = r * b, a + p * b
        return np.array(rows, dtype=np.int64)
    return np.array([[base.q ** i] for i in range(m + 1)])


def enumerate_spectrum(base, m: int, cap: int = DEFAULT_DEGREE_CAP) -> SpectrumTable:
    """All distinct sums over exponents 0..m, by combining two half tables."""
    base = base if isinstance(base, Base) else Base.parse(base)
    if m < 0:
        raise ValueError("degree must be non-negative")
    if m > cap:
        raise DegreeCapExceeded(f"degree {m} exceeds the cap {cap}")
    pw = _powers(base, m)
    h = (m + 1) // 2
    low, high = _subset_sums(pw[:h]), _subset_sums(pw[h:])
    sums = (low[:, None, :] + high[None, :, :]).reshape(-1, pw.shape[1])
    if base.mode == "float":
        vals = np.sort(sums[:, 0])
        tol = FLOAT_DEDUP * vals[-1]
        keep = np.concatenate([[True], np.diff(vals) > tol])
        return SpectrumTable(base, m, vals[keep])
    exact = np.unique(sums, axis=0)
    if base.mode == "integer":
        return SpectrumTable(base, m, exact[:, 0].astype(float), exact)
    vals = exact[:, 0] + exact[:, 1] * base.q
    order = np.argsort(vals, kind="stable")
    return SpectrumTable(base, m, vals[order], exact[order])


@dataclass(frozen=True)
class GapStats:
    min_gap: float
    max_gap: float
    l_hat: float
    L_hat: float
    window: float
    window_range: tuple
    count: int

    def as_dict(self) -> dict:
        return {"min_gap": self.min_gap, "max_gap": self.max_gap, "l_hat": self.l_hat,
                "L_hat": self.L_hat, "window": self.window,
                "window_range": list(self.window_range), "count": self.count}


def gap_stats(t: SpectrumTable, window: float = 0.5) -> GapStats:
    """Full-range gap extremes and windowed proxies for the liminf and limsup.

    The window is the top ``window`` fraction of the complete range
    [0, q^(m+1)), where no larger-degree sum can fall in between.
    """
    if len(t) < 2:
        raise ValueError("need at least two values")
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    gaps = t.gaps
    top = t.complete_below
    lo = (1 - window) * top
    inside = (t.values[:-1] >= lo) & (t.values[1:] < top)
    if not inside.any():
        raise ValueError("no gaps inside the window")
    w = gaps[inside]
    return GapStats(float(gaps.min()), float(gaps.max()), float(w.min()), float(w.max()),
                    window, (lo, top), len(t))


def regime_notes(lam: float) -> list:
    notes = []
    if lam < 0.5:
        notes.append("lam < 1/2: the two-map attractor is a Cantor set, codings are unique")
    elif lam < KOMORNIK_LORETI_RECIPROCAL:
        notes.append("lam below the Komornik-Loreti reciprocal: unique codings form a set of positive dimension")
    elif lam < GOLDEN_RECIPROCAL:
        notes.append("lam below the golden reciprocal: unique codings exist but are rare")
    else:
        notes.append("lam above the golden reciprocal: every interior point has a continuum of codings")
    return notes


def universal_link_report(lam, degrees: Sequence[int] = (10, 12, 14), samples: int = 100,
                          block_length: int = 3, seed: int = 0, window: float = 0.5) -> str:
    """Side-by-side table of spectrum gaps and universal-prefix success at one lam."""
    from fractions import Fraction

    from .codings import sample_points
    from .ifs import bernoulli
    from .universal import BlockEnumeration, build_universal_prefix

    base = Base.from_ratio(lam)
    lam_value = float(Fraction(lam)) if isinstance(lam, str) else float(lam)
    lines = [f"lam = {lam_value!r}  (1/lam = {base.q!r}, mode {base.mode})", "", "degree,values,l_hat,L_hat"]
    for m in degrees:
        st = gap_stats(enumerate_spectrum(base, m), window)
        lines.append(f"{m},{st.count},{st.l_hat!r},{st.L_hat!r}")
    s = bernoulli(lam)
    K = BlockEnumeration(2).count_upto(block_length)
    pts, _ = sample_points(s, samples, seed)
    ok = sum(build_universal_prefix(s, p, K).success for p in pts)
    lines += ["", f"universal prefixes (blocks up to length {block_length}, K = {K}): {ok}/{samples} certified"]
    lines += [""] + regime_notes(lam_value)
    return "\n".join(lines) + "\n"
