import itertools
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfsim import codings, geometry
from selfsim.expansions import (Alphabet, ExpansionDigits, evaluate, expansion_interval,
                                greedy_expansion, ifs_of_alphabet, lazy_expansion, pedicini_check,
                                pedicini_threshold)
from selfsim.ifs import bernoulli, unit_interval

BIN = Alphabet((0, 1))
A013 = Alphabet((0, 1, 3))


def admissible_strings(A, lam, x, N):
    """Exact oracle: digit strings whose remainder stays representable."""
    lo, hi = A.digits[0] * lam / (1 - lam), A.digits[-1] * lam / (1 - lam)
    out = []
    for ds in itertools.product(A.digits, repeat=N):
        partial = sum(a * lam ** (i + 1) for i, a in enumerate(ds))
        rest = (x - partial) / lam ** N
        if lo <= rest <= hi:
            out.append(ds)
    return out


# -- gap condition -----------------------------------------------------------

@pytest.mark.parametrize("A, lam, ok, margin", [
    (BIN, F(3, 5), True, F(1, 2)),
    (BIN, F(1, 2), True, F(0)),
    (A013, F(2, 5), True, F(0)),
    (A013, F(39, 100), False, F(-5, 61)),
])
def test_pedicini_examples(A, lam, ok, margin):
    assert pedicini_check(A, lam) == (ok, margin)


def test_pedicini_thresholds_exact():
    assert pedicini_threshold(BIN) == F(1, 2)
    assert pedicini_threshold(A013) == F(2, 5)


@given(st.lists(st.integers(-20, 20), min_size=2, max_size=6, unique=True), st.fractions(F(1, 1000), F(1, 10)))
def test_threshold_is_the_boundary(digits, eps):
    A = Alphabet(tuple(sorted(digits)))
    t = pedicini_threshold(A)
    assert pedicini_check(A, t) == (True, 0)
    if t - eps > 0:
        assert not pedicini_check(A, t - eps)[0]
    if t + eps < 1:
        assert pedicini_check(A, t + eps)[0]


def test_pedicini_float_mode():
    ok, margin = pedicini_check(BIN, 0.6)
    assert ok and margin == pytest.approx(0.5)


# -- intervals and systems ---------------------------------------------------

def test_expansion_interval_examples():
    assert expansion_interval(BIN, F(7, 10)) == (0, F(7, 3))
    assert expansion_interval(BIN, F(1, 2)) == (0, 1)
    assert expansion_interval(Alphabet((-1, 1)), F(1, 2)) == (-1, 1)


def test_ifs_of_alphabet_binary_half_is_unit_interval():
    assert ifs_of_alphabet(BIN, F(1, 2)) == unit_interval()
    assert ifs_of_alphabet(BIN, F(7, 10)) == bernoulli(F(7, 10))


def test_ifs_of_alphabet_013():
    s = ifs_of_alphabet(A013, F(2, 5))
    assert s.n == 3 and s.exact
    assert [m.anchor[0] for m in s.maps] == [0, F(2, 3), 2]
    assert s.hull_diameter == expansion_interval(A013, F(2, 5))[1]


@pytest.mark.parametrize("A, lam, length", [(A013, F(1, 2), 3.0), (BIN, F(3, 5), 1.5), (A013, F(2, 5), 2.0)])
def test_gap_condition_gives_full_interval(A, lam, length):
    assert pedicini_check(A, lam)[0]
    est = geometry.measure_estimate(ifs_of_alphabet(A, lam), length / 1000)
    assert abs(est.upper - length) <= 0.01 * length
    assert abs(est.heuristic_lower - length) <= 0.01 * length


# -- greedy and lazy ---------------------------------------------------------

def test_greedy_examples():
    assert greedy_expansion(BIN, F(1, 2), F(3, 4), 6).digits == (1, 1, 0, 0, 0, 0)
    assert set(greedy_expansion(BIN, F(7, 10), F(7, 3), 20).digits) == {1}
    assert greedy_expansion(A013, F(2, 5), 2, 5).digits[0] == 3


def test_lazy_examples():
    assert lazy_expansion(BIN, F(1, 2), F(3, 4), 6).digits == (1, 0, 1, 1, 1, 1)
    assert set(lazy_expansion(A013, F(2, 5), 0, 10).digits) == {0}
    assert set(lazy_expansion(BIN, 0.7, 0.0, 10).digits) == {0}


def test_round_trip_float_greedy():
    d = greedy_expansion(BIN, 0.7, 1.1, 40)
    value, bound = evaluate(d)
    assert abs(value - 1.1) <= 0.7 ** 40 / 0.3
    assert abs(value - 1.1) <= bound


def test_outside_interval_raises():
    with pytest.raises(ValueError):
        greedy_expansion(BIN, F(1, 2), F(3, 2), 4)
    with pytest.raises(ValueError):
        lazy_expansion(A013, F(2, 5), -1, 4)


def test_alphabet_validation():
    with pytest.raises(ValueError):
        Alphabet((1, 0))
    with pytest.raises(ValueError):
        Alphabet((1,))
    with pytest.raises(ValueError):
        pedicini_check(BIN, F(3, 2))
    assert Alphabet.parse("0, 1,3") == A013
    assert str(A013) == "{0,1,3}"


CASES = [(BIN, F(3, 5), 10), (BIN, F(7, 10), 10), (A013, F(1, 2), 6), (A013, F(2, 5), 6)]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(range(len(CASES))), st.integers(0, 10 ** 4))
def test_greedy_is_lex_max_and_lazy_lex_min(case, num):
    A, lam, N = CASES[case]
    lo, hi = expansion_interval(A, lam)
    x = lo + (hi - lo) * F(num, 10 ** 4)
    strings = admissible_strings(A, lam, x, N)
    assert greedy_expansion(A, lam, x, N).digits == max(strings)
    assert lazy_expansion(A, lam, x, N).digits == min(strings)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(range(len(CASES))), st.floats(0, 1), st.integers(1, 60), st.booleans())
def test_evaluate_error_within_tail_bound(case, t, N, exact):
    A, lam, _ = CASES[case]
    lo, hi = expansion_interval(A, lam)
    if exact:
        x = lo + (hi - lo) * F(t).limit_denominator(10 ** 6)
    else:
        lam, x = float(lam), float(lo + (hi - lo) * F(t))
    for fn in (greedy_expansion, lazy_expansion):
        value, bound = evaluate(fn(A, lam, x, N))
        slack = 0 if exact else 1e-12
        assert abs(value - x) <= bound + slack


def test_evaluate_examples():
    value, bound = evaluate(ExpansionDigits(BIN, F(1, 2), (2, 2)))
    assert value == F(3, 4) and bound == F(1, 4)
    value, bound = evaluate(ExpansionDigits(BIN, F(1, 2), ()))
    assert value == 0 and bound == 1
    value, _ = evaluate(ExpansionDigits(A013, F(2, 5), (3, 1, 2)))
    assert value == F(158, 125)
    assert ExpansionDigits(A013, F(2, 5), (3, 1, 2)).to_csv().splitlines()[1] == "1,3,3"


def test_greedy_word_is_a_tree_node():
    s = ifs_of_alphabet(A013, F(1, 2))
    rng = np.random.default_rng(4)
    for x in rng.uniform(0, 3, 100):
        word = greedy_expansion(A013, 0.5, float(x), 20).indices
        ok = [geometry.membership_in_image(s, word[:k], [[x]], 1e-9)[0] for k in range(1, 21)]
        assert all(ok)


@pytest.mark.parametrize("lam", [F(1, 2), F(11, 20)])
def test_greedy_equals_lazy_iff_unique(lam):
    s = ifs_of_alphabet(BIN, lam)
    pts, _ = codings.sample_points(s, 100, 9)
    N = 12
    for x in pts[:, 0]:
        same = greedy_expansion(BIN, float(lam), x, N).indices == lazy_expansion(BIN, float(lam), x, N).indices
        unique = codings.classify(codings.enumerate_prefixes(s, x, N, 1e-12)).verdict == codings.Verdict.UNIQUE
        assert same == unique
