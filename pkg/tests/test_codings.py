import itertools
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from selfsim import codings, geometry
from selfsim.codings import Verdict
from selfsim.expansions import Alphabet, ifs_of_alphabet
from selfsim.ifs import apply_word, bernoulli, unit_interval, word_contraction

DELTA = 1e-9


def interval_words(s, x: F, N: int, margin: F) -> list | None:
    """Exact oracle for interval attractors [lo, hi]: words w with x in f_w([lo, hi]).

    Returns None when x is within ``margin`` of some cylinder end point, where
    a tolerance-based tree may legitimately disagree.
    """
    lo = min(m.anchor[0] for m in s.maps)
    hi = max(m.anchor[0] for m in s.maps)
    out = []
    for w in itertools.product(range(1, s.n + 1), repeat=N):
        a = apply_word(s, w, lo)[0]
        b = apply_word(s, w, hi)[0]
        if abs(x - a) <= margin or abs(x - b) <= margin:
            return None
        if a <= x <= b:
            out.append(w)
    return out


def binary_map_digits(x: F, N: int) -> tuple:
    out = []
    for _ in range(N):
        x *= 2
        bit = int(x >= 1)
        x -= bit
        out.append(bit + 1)
    return tuple(out)


# -- admissible digits and trees ---------------------------------------------

def test_admissible_digits_examples():
    assert codings.admissible_digits(unit_interval(), 0.5, DELTA) == {1, 2}
    assert codings.admissible_digits(unit_interval(), 0.125, DELTA) == {1}
    assert codings.admissible_digits(bernoulli(F(7, 10)), 1.0, DELTA) == {1, 2}
    assert codings.admissible_digits(unit_interval(), 3.0, DELTA) == set()


def test_one_third_has_a_single_binary_path():
    tree = codings.enumerate_prefixes(unit_interval(), 1 / 3, 20, DELTA)
    assert tree.counts == [1] * 20
    assert tree.leaves() == [binary_map_digits(F(1, 3), 20)]
    assert codings.classify(tree).verdict == Verdict.UNIQUE


def test_one_half_has_two_leaves():
    tree = codings.enumerate_prefixes(unit_interval(), 0.5, 10, DELTA)
    assert sorted(tree.leaves()) == [(1,) + (2,) * 9, (2,) + (1,) * 9]
    cls = codings.classify(tree)
    assert cls.verdict == Verdict.BRANCHING and cls.count == 2


def test_lam_07_grows_exponentially():
    tree = codings.enumerate_prefixes(bernoulli(F(7, 10)), 1.0, 25, DELTA)
    assert tree.counts[-1] >= 2 ** 5
    assert all(b <= a * 2 for a, b in zip(tree.counts, tree.counts[1:]))


SYSTEMS = {
    "3/5": bernoulli(F(3, 5)),
    "7/10": bernoulli(F(7, 10)),
    "4/5": bernoulli(F(4, 5)),
    "013": ifs_of_alphabet(Alphabet((0, 1, 3)), F(1, 2)),
}


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(SYSTEMS)), st.integers(1, 10 ** 6), st.integers(4, 10))
def test_tree_counts_match_exact_enumeration(key, num, N):
    s = SYSTEMS[key]
    if s.n == 3:
        N = min(N, 7)
    lo = min(m.anchor[0] for m in s.maps)
    hi = max(m.anchor[0] for m in s.maps)
    x = lo + (hi - lo) * F(num, 10 ** 6 + 1)
    words = interval_words(s, x, N, F(1, 10 ** 6))
    assume(words is not None)
    tree = codings.enumerate_prefixes(s, float(x), N, DELTA)
    assert tree.counts[-1] == len(words)
    assert tree.leaves() == words


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 2.3), st.integers(5, 20), st.floats(1e-10, 1e-4), st.floats(1.0, 100.0))
def test_counts_monotone_in_tolerance(x, N, delta, factor):
    s = bernoulli(F(7, 10))
    small = codings.grow(s, np.array([[x]]), N, delta)
    big = codings.grow(s, np.array([[x]]), N, delta * factor)
    assert np.all(small.counts <= big.counts)


def test_merged_counts_equal_explicit_words():
    s = ifs_of_alphabet(Alphabet((0, 1, 3)), F(1, 2))
    for x in (0.4, 1.3, 2.05):
        g = codings.grow(s, np.array([[x]]), 12, DELTA)
        for level in range(13):
            assert g.count(0, level) == len(codings.admissible_words(s, x, level, DELTA))
        assert g.stored[0] < g.count(0)


def test_stored_words_are_members_at_scaled_tolerance():
    s = bernoulli(F(3, 5))
    tree = codings.enumerate_prefixes(s, 0.77, 12, DELTA)
    nodes = tree.nodes()
    assert all(w[:-1] in nodes for w in nodes if w)
    for w in nodes:
        assert geometry.membership_in_image(s, w, [[0.77]], DELTA)[0]


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 7 / 3), st.integers(5, 25))
def test_prefix_consistency_of_leaves(x, N):
    s = bernoulli(F(7, 10))
    tree = codings.enumerate_prefixes(s, x, N, DELTA, cap=10 ** 4)
    leaves = tree.leaves(limit=10 ** 6)
    for w in leaves[:200]:
        z = float(apply_word(s, w, F(0))[0])
        assert abs(z - x) <= s.diameter * float(word_contraction(s, w)) + 1.5 * DELTA + 1e-12
    if leaves:
        assert codings.prefix_consistent(s, np.array(leaves[:200]), np.array([x]), DELTA).all()


def test_classify_full_tree_and_empty_tree():
    tree = codings.enumerate_prefixes(unit_interval(), 0.5, 8, 100.0)
    cls = codings.classify(tree)
    assert cls.verdict == Verdict.BRANCHING and cls.count == 2 ** 8
    assert cls.exponent == pytest.approx(np.log(2))
    with pytest.raises(ValueError):
        codings.classify(codings.enumerate_prefixes(unit_interval(), 5.0, 4, DELTA))


def test_saturation_is_its_own_verdict():
    tree = codings.enumerate_prefixes(bernoulli(0.7123), 1.0, 30, DELTA, cap=50)
    assert tree.saturated
    cls = codings.classify(tree)
    assert cls.verdict == Verdict.SATURATED
    assert tree.reached < 30


def test_lam_07_random_points_branch_quickly():
    r = codings.sample_experiment(bernoulli(F(7, 10)), 20, 30, seed=3)
    assert all(row.verdict == Verdict.BRANCHING and row.exponent > 0.1 for row in r.rows)


# -- witnesses ---------------------------------------------------------------

def test_two_coding_witnesses():
    s = bernoulli(F(7, 10))
    pts = np.array([[0.31], [1.0], [1.9], [2.2]])
    found = codings.two_coding_witnesses(s, pts, 20, DELTA)
    for x, w in zip(pts[:, 0], found):
        assert w is not None and w.confirmed
        k, l = w.digits
        assert k != l
        a, b = w.leaves
        m = len(w.common_prefix)
        assert a[:m] == b[:m] == w.common_prefix and a[m] == k and b[m] == l
        # residual along the common prefix sits in f_1[0, 7/3] & f_2[0, 7/3] = [0.7, 49/30]
        y, scale = geometry.pull_back(s, w.common_prefix, [[x]])
        slack = 2 * DELTA * scale
        assert 0.7 - slack <= y[0, 0] <= 49 / 30 + slack


def test_unique_point_has_no_witness():
    assert codings.two_coding_witnesses(unit_interval(), np.array([[1 / 3]]), 20, DELTA) == [None]


# -- KMP automaton -----------------------------------------------------------

@given(st.lists(st.integers(1, 3), min_size=1, max_size=5), st.lists(st.integers(1, 3), max_size=40))
def test_kmp_matches_naive_search(pattern, word):
    table = codings.kmp_table(pattern, 3)
    state = 0
    for i, e in enumerate(word):
        state = codings.kmp_feed(table, [e], state)
        naive = any(tuple(word[j:j + len(pattern)]) == tuple(pattern) for j in range(i + 2 - len(pattern)))
        assert (state == len(pattern)) == naive


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 2.3), st.lists(st.integers(1, 2), min_size=1, max_size=3))
def test_pattern_growth_matches_explicit_factors(x, pattern):
    s = bernoulli(F(7, 10))
    N = 8
    g = codings.grow(s, np.array([[x]]), N, DELTA, pattern=pattern)
    words = set()
    for level in range(N + 1):
        words.update(codings.admissible_words(s, x, level, DELTA))
    p = tuple(pattern)
    seen = any(w[i:i + len(p)] == p for w in words for i in range(len(w) - len(p) + 1))
    assert bool(g.found[0]) == seen


# -- sampling ----------------------------------------------------------------

def test_sampling_is_seeded_and_per_sample():
    s = bernoulli(F(7, 10))
    a, _ = codings.sample_points(s, 5, 11)
    b, _ = codings.sample_points(s, 3, 11)
    c, _ = codings.sample_points(s, 5, 12)
    assert np.array_equal(a[:3], b)
    assert not np.array_equal(a, c)


def test_sampled_points_lie_on_the_attractor():
    s = ifs_of_alphabet(Alphabet((0, 1, 3)), F(1, 2))
    pts, _ = codings.sample_points(s, 50, 0)
    assert geometry.membership_many(s, pts, 1e-12).all()
    cantor_like = bernoulli(F(2, 5))
    pts, rejected = codings.sample_points(cantor_like, 50, 0)
    assert rejected > 0
    assert geometry.membership_many(cantor_like, pts, 1e-12).all()


def test_sampling_starvation():
    from selfsim.ifs import cantor
    ras = geometry.rasterize(cantor(), 1e-2)
    shifted = ras.like(np.roll(ras.mask, 7))
    shifted.mask[:] = False
    shifted.mask[len(shifted.mask) // 2] = True     # the empty middle box
    with pytest.raises(codings.SamplingStarvation):
        codings.sample_points(cantor(), 5, 0, raster=shifted)


def test_experiment_is_reproducible_and_csv():
    s = unit_interval()
    r1 = codings.sample_experiment(s, 30, 30, seed=5, delta=1e-12)
    r2 = codings.sample_experiment(s, 30, 30, seed=5, delta=1e-12)
    assert r1.to_csv() == r2.to_csv()
    assert r1.to_csv().splitlines()[0] == "index,point,verdict,count,exponent,witness"
    assert r1.fraction(Verdict.UNIQUE) == 1.0
    assert sum(r1.fractions.values()) == pytest.approx(1)


# -- unique-coding and forbidden-block covers ---------------------------------

def test_univoque_cover_unit_interval_keeps_almost_everything():
    ap = codings.univoque_cover(unit_interval(), 15, 1e-2)
    assert ap.retained >= 0.95 * ap.probes


def test_univoque_cover_nesting():
    s = bernoulli(F(3, 5))
    ras = geometry.rasterize(s, 1e-3)
    for N in (5, 10):
        a = codings.univoque_cover(s, N, 1e-3, raster=ras).raster.mask
        b = codings.univoque_cover(s, N + 5, 1e-3, raster=ras).raster.mask
        assert not np.any(b & ~a)


def test_univoque_cover_lam_053_has_positive_dimension():
    s = bernoulli(F(53, 100))
    ap = codings.univoque_cover(s, 20, 1e-3)
    assert ap.retained > 0
    assert geometry.box_counting_dimension(ap.raster).slope > 0


def test_univoque_cover_lam_07_shrinks():
    s = bernoulli(F(7, 10))
    ras = geometry.rasterize(s, 1e-3)
    m = [codings.univoque_cover(s, N, 1e-3, raster=ras).measure for N in (5, 10, 15, 20)]
    assert all(b < a for a, b in zip(m, m[1:]))
    assert m[-1] <= 0.01 * ras.covered_volume


def test_forbidden_digit_on_unit_interval():
    ap = codings.forbidden_block_cover(unit_interval(), (1,), 20, 1e-2)
    centers = ap.raster.box_centers()
    assert ap.retained <= 1
    assert np.all(centers[:, 0] >= 1 - 2e-2)


def test_forbidden_block_lam_08():
    s = bernoulli(F(4, 5))
    ras = geometry.rasterize(s, 1e-3)
    ap = codings.forbidden_block_cover(s, (1, 2), 25, 1e-3, raster=ras)
    assert ap.measure <= 0.01 * ras.covered_volume
    assert ap.to_csv().splitlines()[0] == "box_index,center"


def test_forbidden_block_preconditions():
    with pytest.raises(ValueError):
        codings.forbidden_block_cover(unit_interval(), (1, 2, 1), 2, 1e-2)
    with pytest.raises(ValueError):
        codings.forbidden_block_cover(unit_interval(), (), 5, 1e-2)
    with pytest.raises(ValueError):
        codings.forbidden_block_cover(unit_interval(), (3,), 5, 1e-2)


def test_tolerance_horizon_on_unit_interval():
    # delta * 2^k passes the diameter at k = 40, so every digit is admitted there
    from selfsim.ifs import resolvable_depth
    s = unit_interval()
    assert resolvable_depth(s, 1e-12) == 39
    assert 1e-12 * 2 ** 40 > s.diameter
    shallow = codings.sample_experiment(s, 1000, 30, seed=0, delta=1e-12)
    assert shallow.fraction(Verdict.UNIQUE) >= 0.999
    deep = codings.sample_experiment(s, 200, 40, seed=0, delta=1e-12)
    assert deep.fraction(Verdict.UNIQUE) == 0.0
