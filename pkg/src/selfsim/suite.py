"""Desk-scale check battery.

Each check returns a CheckResult whose ``details`` hold the measured values.
Value checks decide ``passed``; wall-clock limits are kept apart in
``runtime_ok`` so the CSV rows stay reproducible.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import codings, expansions, geometry, spectrum, universal
from .ifs import bernoulli, sierpinski, triangle_area, unit_interval, word_contraction

SUITES = ("paper-desk-checks",)


@dataclass
class CheckResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    limit: float | None = None

    @property
    def runtime_ok(self) -> bool:
        return self.limit is None or self.seconds < self.limit

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def detail_text(self) -> str:
        return "; ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + " ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(number: int, title: str, limit: float | None):
    def wrap(fn: Callable[[int], tuple]):
        def run(seed: int = 0) -> CheckResult:
            t0 = time.perf_counter()
            passed, details = fn(seed)
            return CheckResult(number, title, bool(passed), details, time.perf_counter() - t0, limit)
        run.number, run.title, run.limit = number, title, limit
        return run
    return wrap


@_timed(1, "unit interval: almost every point has a unique coding", 30)
def check_unique_codings(seed: int):
    r = codings.sample_experiment(unit_interval(), 10_000, 40, seed=seed, delta=1e-12)
    frac = r.fraction(codings.Verdict.UNIQUE)
    return frac >= 0.999, {"unique_fraction": frac, "branching_fraction": r.fraction(codings.Verdict.BRANCHING)}


def _interior_points(s, samples, seed):
    """Sampled attractor points away from the interval end points."""
    pts, _ = codings.sample_points(s, samples, seed)
    lo, hi = float(s.anchors.min()), float(s.anchors.max())
    h = codings.default_resolution(s)
    if np.any((pts[:, 0] <= lo + h / 10) | (pts[:, 0] >= hi - h / 10)):
        raise RuntimeError("sample landed on an end point")
    return pts


@_timed(2, "lam=0.7: every interior point branches", 60)
def check_erdos_regime(seed: int):
    s = bernoulli(Fraction(7, 10))
    r = codings.sample_experiment(s, 1000, 30, seed=seed, points=_interior_points(s, 1000, seed))
    frac = r.fraction(codings.Verdict.BRANCHING)
    return frac == 1.0 and r.witnesses_confirmed, {"branching_fraction": frac,
                                                    "witnesses_confirmed": r.witnesses_confirmed}


def alternating_point(s):
    """Fixed point of f_1 f_2, whose coding is 1, 2, 1, 2, ..."""
    lam = s.maps[0].ratio
    top = s.maps[1].anchor[0]
    return lam * (1 - lam) * top / (1 - lam ** 2)


@_timed(3, "lam=0.6: almost every point branches, (12)^inf stays unique", 60)
def check_golden_gap(seed: int):
    s = bernoulli(Fraction(3, 5))
    r = codings.sample_experiment(s, 1000, 40, seed=seed, delta=1e-12)
    frac = r.fraction(codings.Verdict.BRANCHING)
    x = alternating_point(s)
    tree = codings.enumerate_prefixes(s, [float(x)], 40, 1e-12)
    verdict = codings.classify(tree).verdict
    return frac >= 0.99 and verdict == codings.Verdict.UNIQUE, {
        "branching_fraction": frac, "alternating_point": str(x), "alternating_verdict": verdict.value}


@_timed(4, "lam=0.7: overlap measure and inclusion-exclusion", 10)
def check_overlap(seed: int):
    s = bernoulli(Fraction(7, 10))
    ov = geometry.overlap_measure(s, 1, 2, 1e-3)
    ie = geometry.inclusion_exclusion_residual(s, 1e-3)
    ok = ie.residual <= 0.01 and ie.full_residual <= 0.01 and ov.heuristic_lower >= 0.9 and ov.upper <= 0.97
    ok = ok and ov.heuristic_lower <= 14 / 15 <= ov.upper
    return ok, {"overlap_lower": ov.heuristic_lower, "overlap_upper": ov.upper,
                "ie_residual": ie.residual, "ie_full_residual": ie.full_residual}


@_timed(5, "lam=0.7: density bound and n(r) inequality", None)
def check_density(seed: int):
    s = bernoulli(Fraction(7, 10))
    db = geometry.density_bound(s, 1, 2, 1e-3)
    rng = np.random.default_rng(seed)
    diam = s.hull_diameter
    bad = 0
    for _ in range(100):
        prefix = tuple(int(e) for e in rng.integers(1, 3, 60))
        r = diam * Fraction(int(rng.integers(1, 10 ** 6)), 10 ** 6)
        n = geometry.n_of_r(s, prefix, r)
        lo = diam * word_contraction(s, prefix[:n])
        hi = diam * word_contraction(s, prefix[:n - 1])
        bad += not (lo < r <= hi)
    ok = 0.6 < db.bound < 0.75 and bad == 0
    return ok, {"density_bound": db.bound, "n_of_r_violations": bad}


@_timed(6, "lam=0.7: unique-coding set shrinks with depth", None)
def check_univoque(seed: int):
    s = bernoulli(Fraction(7, 10))
    ras = geometry.rasterize(s, 1e-3)
    L = ras.covered_volume
    covers = [codings.univoque_cover(s, N, 1e-3, seed=seed, raster=ras) for N in (5, 10, 15, 20)]
    m = [c.measure for c in covers]
    decreasing = all(b < a for a, b in zip(m, m[1:]))
    last = covers[-1]
    if last.retained == 0:
        dim = 0.0
    else:
        try:
            dim = geometry.box_counting_dimension(last.raster).slope
        except geometry.DegenerateDimension:
            dim = 0.0
    ok = decreasing and m[-1] <= 0.01 * L and dim < 0.9
    return ok, {"measures": m, "measure_estimate": L, "dimension_depth20": dim}


@_timed(7, "lam=0.8: universal prefixes for all blocks up to length 3", 120)
def check_universal(seed: int):
    s = bernoulli(Fraction(4, 5))
    K = universal.BlockEnumeration(2).count_upto(3)
    pts, _ = codings.sample_points(s, 100, seed)
    success = verified = 0
    for p in pts:
        r = universal.build_universal_prefix(s, p, K, depth_budget=40)
        if r.success:
            success += 1
            ok, _ = universal.verify_blocks(r.prefix, K, 2)
            sound = all(tuple(r.prefix[a:e]) == b for _, b, a, e in r.certificate)
            verified += ok and sound
    return success >= 99 and verified == success, {"K": K, "certified": success, "verified": verified}


@_timed(8, "{0,1,3} at lam=1/2: positive measure and branching", None)
def check_three_digits(seed: int):
    s = expansions.ifs_of_alphabet(expansions.Alphabet((0, 1, 3)), Fraction(1, 2))
    est = geometry.measure_estimate(s, 1e-3)
    r = codings.sample_experiment(s, 1000, 30, seed=seed)
    frac = r.fraction(codings.Verdict.BRANCHING)
    return est.heuristic_lower > 0 and frac >= 0.99, {
        "measure_lower": est.heuristic_lower, "measure_upper": est.upper, "branching_fraction": frac}


@_timed(9, "gap-condition thresholds", None)
def check_pedicini(seed: int):
    rows = {}
    ok = True
    for digits, expected in (((0, 1), Fraction(1, 2)), ((0, 1, 3), Fraction(2, 5))):
        A = expansions.Alphabet(digits)
        t = expansions.pedicini_threshold(A)
        at, margin = expansions.pedicini_check(A, t)
        below, _ = expansions.pedicini_check(A, t - Fraction(1, 100))
        above, _ = expansions.pedicini_check(A, t + Fraction(1, 100))
        ok &= t == expected and at and margin == 0 and not below and above
        rows[str(A)] = str(t)
    return ok, rows


@_timed(10, "spectrum gaps for q = 2, golden ratio, 1.8", 60)
def check_spectrum(seed: int):
    two = spectrum.enumerate_spectrum("2", 10).gaps
    phi = [spectrum.gap_stats(spectrum.enumerate_spectrum("phi", m)).l_hat for m in (10, 12, 14)]
    q18 = [spectrum.gap_stats(spectrum.enumerate_spectrum("1.8", m)).l_hat for m in (10, 20)]
    stable = max(abs(b - a) / a for a, b in zip(phi, phi[1:])) < 0.05
    ok = bool(np.all(two == 1)) and stable and q18[1] <= 0.5 * q18[0]
    return ok, {"binary_gaps_all_one": bool(np.all(two == 1)), "phi_l_hat": phi, "q1.8_l_hat": q18}


def aligned_full_blocks(mask: np.ndarray, size: int) -> int:
    """Number of size x size blocks, aligned to the grid, that are entirely True."""
    h, w = (k - k % size for k in mask.shape)
    blocks = mask[:h, :w].reshape(h // size, size, w // size, size)
    return int(blocks.all(axis=(1, 3)).sum())


@_timed(11, "Sierpinski triangles at lam=0.65 and lam=0.5", None)
def check_sierpinski(seed: int):
    h = 1 / 512
    s65 = sierpinski(0.65)
    ras = geometry.rasterize(s65, h)
    inner = np.zeros_like(ras.mask)
    idx = np.argwhere(ras.mask)
    inner[tuple(idx[geometry.membership_many(s65, ras.box_centers(), h / 10)].T)] = True
    blocks = aligned_full_blocks(inner, 8)
    s50 = sierpinski(0.5)
    ratio = geometry.measure_estimate(s50, h, with_lower=False).upper / triangle_area()
    return blocks >= 1 and ratio <= 0.85, {"full_8x8_blocks": blocks, "gasket_area_ratio": ratio}


CHECKS = (check_unique_codings, check_erdos_regime, check_golden_gap, check_overlap, check_density,
          check_univoque, check_universal, check_three_digits, check_pedicini, check_spectrum,
          check_sierpinski)


def run_suite(name: str, seed: int = 0, only=None) -> list:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; known: {', '.join(SUITES)}")
    return [chk(seed) for chk in CHECKS if only is None or chk.number in only]


def results_csv(results: list) -> str:
    lines = ["criterion,title,status,details"]
    for r in results:
        lines.append(f'{r.number},"{r.title}",{r.status},"{r.detail_text()}"')
    return "\n".join(lines) + "\n"
