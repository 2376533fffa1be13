"""Acceptance battery: criteria 1 to 12 at their stated tolerances.

The checks run once (seed 0); each test re-asserts the measured values and
the wall-clock limit of its criterion.  A summary with one PASS/FAIL line per
criterion is printed at the end of the session.
"""
from fractions import Fraction as F

import pytest

from selfsim import cli, codings, suite
from selfsim.ifs import bernoulli


@pytest.fixture(scope="module")
def checks():
    return {r.number: r for r in suite.run_suite("paper-desk-checks", seed=0)}


def report(r):
    limit = "" if r.limit is None else f" (limit {r.limit:g} s)"
    print(f"criterion {r.number}: {r.status}  {r.seconds:.1f} s{limit}  {r.detail_text()}")


def within_limit(r):
    assert r.limit is None or r.seconds < r.limit, f"took {r.seconds:.1f} s, limit {r.limit} s"


def test_criterion_01_unique_codings_unit_interval(checks):
    r = checks[1]
    report(r)
    assert r.details["unique_fraction"] >= 0.999
    within_limit(r)


def test_criterion_02_every_interior_point_branches(checks):
    r = checks[2]
    report(r)
    assert r.details["branching_fraction"] == 1.0
    assert r.details["witnesses_confirmed"] is True
    within_limit(r)


def test_criterion_03_almost_every_point_branches_at_06(checks):
    r = checks[3]
    report(r)
    assert r.details["branching_fraction"] >= 0.99
    assert r.details["alternating_verdict"] == codings.Verdict.UNIQUE.value
    # the point coded 1, 2, 1, 2, ... is 9/16 at lam = 3/5
    assert F(r.details["alternating_point"]) == F(9, 16)
    within_limit(r)


def test_criterion_04_overlap_and_inclusion_exclusion(checks):
    r = checks[4]
    report(r)
    d = r.details
    assert d["ie_residual"] <= 0.01
    assert d["overlap_lower"] >= 0.9 and d["overlap_upper"] <= 0.97
    assert d["overlap_lower"] <= 14 / 15 <= d["overlap_upper"]
    within_limit(r)


def test_criterion_05_density_bound_and_n_of_r(checks):
    r = checks[5]
    report(r)
    assert r.details["n_of_r_violations"] == 0
    assert 0.6 < r.details["density_bound"] < 0.75


def test_criterion_06_unique_set_shrinks(checks):
    r = checks[6]
    report(r)
    m = r.details["measures"]
    assert all(b < a for a, b in zip(m, m[1:]))
    assert m[-1] <= 0.01 * r.details["measure_estimate"]
    assert r.details["dimension_depth20"] < 0.9


def test_criterion_07_universal_prefixes(checks):
    r = checks[7]
    report(r)
    assert r.details["K"] == 14
    assert r.details["certified"] >= 99
    assert r.details["verified"] == r.details["certified"]
    within_limit(r)


def test_criterion_08_three_digit_family(checks):
    r = checks[8]
    report(r)
    assert r.details["measure_lower"] > 0
    assert r.details["branching_fraction"] >= 0.99


def test_criterion_09_gap_condition_thresholds(checks):
    r = checks[9]
    report(r)
    assert r.details == {"{0,1}": "1/2", "{0,1,3}": "2/5"}
    assert r.passed


def test_criterion_10_spectrum_gaps(checks):
    r = checks[10]
    report(r)
    assert r.details["binary_gaps_all_one"] is True
    phi = r.details["phi_l_hat"]
    assert max(abs(b - a) / a for a, b in zip(phi, phi[1:])) < 0.05
    q10, q20 = r.details["q1.8_l_hat"]
    assert q20 <= 0.5 * q10
    within_limit(r)


def test_criterion_11_sierpinski_instances(checks):
    r = checks[11]
    report(r)
    assert r.details["full_8x8_blocks"] >= 1
    assert r.details["gasket_area_ratio"] <= 0.85


def test_criterion_12_suite_is_deterministic(tmp_path):
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = cli.main(["suite", "paper-desk-checks", "--seed", "0", "--out", str(out)])
        assert code in (cli.EXIT_OK, cli.EXIT_FAILED)
        outputs.append((out / "checks.csv").read_bytes())
    print("criterion 12: " + ("PASS" if outputs[0] == outputs[1] else "FAIL") + "  checks.csv byte-identical")
    assert outputs[0] == outputs[1]
    assert outputs[0].count(b"\n") == 12
