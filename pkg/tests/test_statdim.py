"""Statistical-dimension pipeline: tail bounds, SDN bounds, query bounds."""

import math

import pytest

from sqtpca.errors import HypothesisViolated
from sqtpca.statdim import (
    CoeffTable,
    estimation_query_bound,
    resolution_tail_bound,
    sdn_lower_bound,
    hardness_query_bound,
    hardness_threshold_scan,
)
from sqtpca.coeffs import p_pi_series
from sqtpca.tensors import make_labeling

SYM2 = make_labeling((1, 1))
ASYM2 = make_labeling((1, 2))


def test_tail_bound_vanishes_at_large_epsilon():
    table = CoeffTable(SYM2, 8)
    small = resolution_tail_bound(SYM2, 8, epsilon=10.0 ** 6, u=2, table=table)
    assert small.value < 1e-9


def test_tail_bound_u2_hand_formula():
    # oracle: direct evaluation of (e/eps^2) max over the box at u = 2
    d, eps = 4, 0.5
    table = CoeffTable(SYM2, d)
    expected = 0.0
    for l in range(0, 2 * SYM2.k + 1):
        if l <= d:
            expected = max(expected, p_pi_series(SYM2, d, (l,)).value)
    expected = min(1.0, (math.e / eps ** 2 * expected) ** 1.0)
    got = resolution_tail_bound(SYM2, d, eps, 2, table)
    assert math.isclose(got.value, expected, rel_tol=1e-12)


def test_tail_bound_clamped_to_unit():
    table = CoeffTable(SYM2, 4)
    tb = resolution_tail_bound(SYM2, 4, epsilon=1e-3, u=2, table=table)
    assert tb.value == 1.0


def test_certification_guard():
    table = CoeffTable(SYM2, 8)
    assert resolution_tail_bound(SYM2, 8, 0.5, 2, table).certified  # (u-1)^(2k) = 1
    assert not resolution_tail_bound(SYM2, 8, 0.5, 3, table).certified  # 2^4 = 16 > 8


def test_sdn_monotone_in_n():
    table = CoeffTable(ASYM2, 32)
    bounds = [sdn_lower_bound(ASYM2, 32, n, "null", table).bound for n in (8, 32, 128, 512)]
    assert all(a >= b - 1e-15 for a, b in zip(bounds, bounds[1:]))
    assert all(b > 0 for b in bounds)


def test_sdn_golden_value_o2():
    # frozen from the exact pipeline at build time (fixes the magnitude; the
    # exact-coefficient constants set the scale)
    res = sdn_lower_bound(ASYM2, 64, 64)
    assert res.u_star == 2
    assert math.isclose(res.bound, 0.09619053879397944, rel_tol=1e-9)


def test_testing_estimation_gap_d64():
    # V-bar-centred estimation bound strictly above the testing bound for
    # some n between sqrt(d^k) and sqrt(d^(k+2))
    d = 64
    tab_null = CoeffTable(SYM2, d, "null")
    tab_vbar = CoeffTable(SYM2, d, "vbar")
    found = False
    n = d + 1
    while n < d * d:
        test_b = sdn_lower_bound(SYM2, d, n, "null", tab_null).bound
        est_b = sdn_lower_bound(SYM2, d, n, "vbar", tab_vbar).bound
        if est_b > test_b:
            found = True
            break
        n = int(n * 1.2) + 1
    assert found


def test_estimation_query_bound_half():
    res = sdn_lower_bound(SYM2, 16, 8)
    assert estimation_query_bound(res) == 0.5 * res.bound


def test_hardness_bound_hypothesis_check():
    with pytest.raises(HypothesisViolated):
        hardness_query_bound(SYM2, 16, n=10 ** 6, L=1, epsilon_exp=0.5)
    res = hardness_query_bound(SYM2, 16, n=4, L=1, epsilon_exp=0.5)
    assert res.u == math.ceil((1 + 2 / 4) / 0.5)
    assert res.query_bound > 0


def test_hardness_bound_c0_independence():
    a = hardness_query_bound(SYM2, 16, n=4, L=1, epsilon_exp=0.5, C0=1.0)
    b = hardness_query_bound(SYM2, 16, n=4, L=1, epsilon_exp=0.5, C0=2.0)
    assert a.query_bound == b.query_bound


def test_hardness_bound_trend_grows_along_grid():
    # with u optimized under the certification guard, bound/d^L eventually
    # climbs as d grows at n = d^((k+o)/2 - eps)
    scan = hardness_threshold_scan(SYM2, [256, 10 ** 4, 10 ** 5], L=1, epsilon_exp=0.5)
    ratios = [row["bound"] / row["d"] for row in scan["rows"]]
    assert ratios[1] > ratios[0]
    assert ratios[2] > ratios[1]
    assert scan["rows"][2]["exceeds_dL"]
    assert scan["first_d_exceeding"] == 10 ** 4
    # uncertified u choices are flagged, never silently trusted
    assert not scan["rows"][0]["certified"]
