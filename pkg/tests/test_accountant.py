import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from checkin_dp import accountant as acc
from checkin_dp import precise

DELTA = 1e-6


def pure(eps0):
    return acc.LocalSpec(eps0)


def fixed(eps0, m, p0, delta=DELTA, n=10_000):
    return acc.fixed_window_bound(pure(eps0), acc.FixedWindowParams(n, m, p0, delta))


# Reference values below were produced by checkin_dp.precise at 60 digits and frozen.
FROZEN = [
    (lambda: fixed(1.0, 1000, 0.1).epsilon, 0.04713136628013450821550165),
    (lambda: acc.avg_bound(pure(0.5), acc.AvgParams(10_000, 100, DELTA, DELTA)).epsilon,
     1.305565332812000860645133),
    (lambda: acc.sliding_window_bound(pure(1.0), 10_000, 1000, DELTA).epsilon,
     0.4749252307505484916043992),
    (lambda: acc.shuffle_bound_new(pure(0.5), 10_000, DELTA).epsilon, 0.07228437420081552534339978),
    (lambda: acc.shuffle_bound_old(pure(1.0), 100_000, DELTA).epsilon, 0.4285454147965070379394993),
    (lambda: acc.swap_bound(pure(0.3), 500, 1e-4).epsilon, 0.1056167693497668038442692),
    (lambda: acc.bin_sgd_bound(pure(1.0), acc.BinSizes((1,) * 100, 100), DELTA).epsilon,
     7.479935911804475601522626),
    (lambda: acc.epoch_composition(pure(0.5), 10**6, 1000, 1e-7, 1e-7).epsilon,
     0.02687435959182494844317216),
    (lambda: acc.cheu_delta_threshold(1.0, 1e-6), 2.706502863716624647621907e-11),
    (lambda: acc.bin_load_l2_bound(100, 10, 0.01), 54.62590816644747083900927),
]


@pytest.mark.parametrize("compute,expected", FROZEN)
def test_frozen_reference_values(compute, expected):
    assert compute() == pytest.approx(expected, rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(eps0=st.floats(1e-6, 3.0), m=st.integers(1, 10**5), p0=st.floats(0.0, 1.0),
       delta=st.floats(1e-12, 0.5))
def test_fast_path_matches_high_precision(eps0, m, p0, delta):
    got = fixed(eps0, m, p0, delta, n=10**6).epsilon
    ref = float(precise.fixed_window_eps(eps0, delta, m, p0))
    assert got == pytest.approx(ref, rel=1e-12, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(eps0=st.floats(1e-6, 3.0), n=st.integers(1, 10**6), delta=st.floats(1e-12, 0.5))
def test_swap_and_old_shuffle_match_high_precision(eps0, n, delta):
    assert acc.swap_bound(pure(eps0), n, delta).epsilon == pytest.approx(
        float(precise.swap_eps(eps0, delta, n)), rel=1e-12)
    old = acc.shuffle_bound_old(pure(eps0), n, delta).epsilon
    ref = float(precise.shuffle_old_eps(eps0, delta, n)) if old < 1e300 else math.inf
    assert old == pytest.approx(ref, rel=1e-12)


def test_tiny_eps0_keeps_relative_precision():
    got = fixed(1e-12, 100, 1.0).epsilon
    ref = float(precise.fixed_window_eps(1e-12, DELTA, 100, 1.0))
    assert got == pytest.approx(ref, rel=1e-13)


def test_zero_participation_and_zero_eps0_give_zero():
    assert fixed(1.5, 10, 0.0).epsilon == 0
    for bound in (acc.shuffle_bound_new(pure(0), 1000, DELTA), acc.swap_bound(pure(0), 10, DELTA),
                  acc.shuffle_bound_old(pure(0), 10, DELTA),
                  acc.avg_bound(pure(0), acc.AvgParams(10, 10, DELTA, DELTA)),
                  acc.replacement_bound(pure(2.0), 10, 0.0, DELTA)):
        assert bound.epsilon == 0 and not bound.vacuous


def test_simplified_closed_form():
    params = acc.FixedWindowParams(1000, 100, 1.0, 0.01)
    got = acc.fixed_window_simplified(pure(1.0), params).epsilon
    assert got == pytest.approx(7 * math.sqrt(math.log(100) / 100), rel=1e-15)


@pytest.mark.parametrize("m", [1, 10, 1000, 10**6])
@pytest.mark.parametrize("p0", [0.01, 0.3, 1.0])
def test_simplified_envelope_dominates(m, p0):
    for eps0 in (0.01, 0.2, 0.7, 1.0):
        for delta in (1e-12, 1e-6, 0.01):
            params = acc.FixedWindowParams(10**6, m, p0, delta)
            exact = acc.fixed_window_bound(pure(eps0), params).epsilon
            assert acc.fixed_window_simplified(pure(eps0), params).epsilon >= exact


@pytest.mark.parametrize("kwargs", [dict(eps0=1.1, delta=1e-6), dict(eps0=0.5, delta=0.02)])
def test_simplified_preconditions(kwargs):
    with pytest.raises(ValueError):
        acc.fixed_window_simplified(pure(kwargs["eps0"]),
                                    acc.FixedWindowParams(100, 10, 0.5, kwargs["delta"]))


def test_reductions_are_exact():
    for eps0 in (0.1, 1.0, 2.5):
        for m in (3, 50, 1000):
            for p0 in (0.2, 1.0):
                rep = acc.replacement_bound(pure(eps0), m, p0, DELTA)
                assert fixed(eps0, m, p0) == rep
            assert acc.sliding_window_bound(pure(eps0), 5000, m, DELTA) == \
                acc.replacement_bound(pure(eps0), m, 1.0, DELTA) == fixed(eps0, m, 1.0)
        assert acc.shuffle_bound_new(pure(eps0), 777, DELTA) == acc.swap_bound(pure(eps0), 777, DELTA)


def test_single_bin_substitution():
    eps0, n = 0.4, 50
    got = acc.bin_sgd_bound(pure(eps0), acc.BinSizes((n,), n), DELTA).epsilon
    em1 = math.expm1(eps0)
    want = math.exp(4 * eps0) * em1 ** 2 / 2 + math.exp(2 * eps0) * em1 * math.sqrt(2 * math.log(1 / DELTA))
    assert got == pytest.approx(want, rel=1e-14)


def test_sliding_envelope():
    for eps0 in (0.05, 0.5, 1.0):
        for m in (10, 1000):
            for delta in (1e-8, 0.01):
                got = acc.sliding_window_bound(pure(eps0), 10**5, m, delta).epsilon
                assert got <= 7 * eps0 * math.sqrt(math.log(1 / delta) / m)


def test_avg_order_eps0_over_sqrt_m():
    # With n = m the bound should shrink roughly like 1/sqrt(m).
    eps = [acc.avg_bound(pure(1.0), acc.AvgParams(m, m, DELTA, DELTA)).epsilon for m in (10**6, 10**8)]
    assert eps[0] / eps[1] == pytest.approx(10, rel=0.05)
    assert acc.avg_bound(pure(0.5), acc.AvgParams(100, 10, 1e-6, 1e-5)).delta == pytest.approx(1.1e-5)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.0, 3.0), b=st.floats(0.0, 3.0), m=st.integers(1, 10**4), p0=st.floats(0.0, 1.0))
def test_monotone_in_eps0_and_window(a, b, m, p0):
    lo, hi = sorted((a, b))
    assert fixed(lo, m, p0).epsilon <= fixed(hi, m, p0).epsilon
    assert fixed(hi, m + 1, p0).epsilon <= fixed(hi, m, p0).epsilon
    n = m
    assert acc.swap_bound(pure(lo), n, DELTA).epsilon <= acc.swap_bound(pure(hi), n, DELTA).epsilon
    assert acc.swap_bound(pure(hi), n + 1, DELTA).epsilon <= acc.swap_bound(pure(hi), n, DELTA).epsilon
    avg = lambda e, mm: acc.avg_bound(pure(e), acc.AvgParams(10**4, mm, DELTA, DELTA)).epsilon
    assert avg(lo, m) <= avg(hi, m)
    assert avg(hi, m + 1) <= avg(hi, m)


def test_new_shuffle_dominates_old():
    for n in (10**3, 10**4, 10**5):
        for k in range(300):
            eps0 = 0.01 + k * (3 - 0.01) / 299
            new = acc.shuffle_bound_new(pure(eps0), n, DELTA).epsilon
            assert new < acc.shuffle_bound_old(pure(eps0), n, DELTA).epsilon


def test_het_formula_substitution():
    got = acc.het_composition(1.0, 0.5, 100, DELTA).epsilon
    assert got == pytest.approx(1 / 100 + math.sqrt(4 * math.log(1e6) / 100), rel=1e-14)
    assert acc.het_composition(0.0, 0.5, 10, DELTA).epsilon == 0


def test_het_dominates_kov_on_grid():
    for a in (0.1, 0.5, 1.0, 2.0):
        for b in (0.1, 0.5, 0.9):
            for k in (10, 100, 1000):
                het = acc.het_composition(a, b, k, DELTA).epsilon
                kov = acc.kov_composition(acc.het_schedule(a, b, k), DELTA).epsilon
                assert het >= kov


def test_kov_single_entry_and_zero():
    x = 0.7
    want = x * math.expm1(x) / (math.exp(x) + 1) + x * math.sqrt(2 * math.log(1 / DELTA))
    assert acc.kov_composition([x], DELTA).epsilon == pytest.approx(want, rel=1e-14)
    assert acc.kov_composition([0.0] * 5, DELTA).epsilon == 0


@pytest.mark.parametrize("eps0,m,p0", [(0.5, 5, 1.0), (1.0, 8, 0.4), (2.0, 3, 0.9)])
def test_replacement_posterior_schedule_composes_below_bound(eps0, m, p0):
    # The per-step schedule is het-shaped with a = p0(e^eps0 - 1), b = 1 - e^-eps0, k = m,
    # and the het lemma evaluated there is the fixed-window bound itself.
    e = math.exp(eps0)
    schedule = [math.log1p(p0 * e * (e - 1) / (i - 1 + e * (m - i + 1))) for i in range(1, m + 1)]
    bound = fixed(eps0, m, p0).epsilon
    assert acc.kov_composition(schedule, DELTA).epsilon <= bound
    het = acc.het_composition(p0 * math.expm1(eps0), -math.expm1(-eps0), m, DELTA).epsilon
    assert het == pytest.approx(bound, rel=1e-12)


def test_advanced_composition_cases():
    assert acc.advanced_composition(acc.PrivacyPair(0.0, 0.0), 7, 1e-5) == acc.PrivacyPair(0.0, 1e-5)
    one = acc.advanced_composition(acc.PrivacyPair(0.3, 1e-7), 1, 1e-5)
    assert one.epsilon == pytest.approx(0.3 * math.sqrt(2 * math.log(1e5)) + 0.3 * math.expm1(0.3))
    assert one.delta == pytest.approx(1e-7 + 1e-5)


def test_epoch_delta_and_slope():
    pair = acc.epoch_composition(pure(0.5), 10**6, 1000, 1e-7, 1e-7)
    assert pair.delta == pytest.approx(1000 * 1e-7 + 1e-7)
    lo = acc.epoch_composition(pure(0.5), 10**6, 1000, 1e-7, 1e-7).epsilon
    hi = acc.epoch_composition(pure(0.5), 10**7, 1000, 1e-7, 1e-7).epsilon
    assert math.log10(hi / lo) == pytest.approx(-0.5, abs=0.05)


def test_epoch_rounds_down_when_m_does_not_divide_n():
    a = acc.epoch_composition(pure(0.5), 10**6, 1000, 1e-7, 1e-7)
    b = acc.epoch_composition(pure(0.5), 10**6 + 999, 1000, 1e-7, 1e-7)
    assert b.delta == a.delta


@pytest.mark.parametrize("args,fragment", [
    ((6.0, 10**6, 1000, 1e-7, 1e-7), "epsilon0="),
    ((3.0, 10**4, 1, 1e-7, 1e-7), "n="),
])
def test_epoch_names_the_failed_condition(args, fragment):
    eps0, *rest = args
    with pytest.raises(ValueError, match=fragment):
        acc.epoch_composition(pure(eps0), *rest)


def test_cheu_threshold_below_delta1_and_vanishing():
    for eps0 in (1e-3, 0.1, 1.0, 5.0, 20.0):
        for d1 in (1e-12, 1e-6, 0.1, 0.9):
            assert 0 < acc.cheu_delta_threshold(eps0, d1) < d1
    assert acc.cheu_delta_threshold(1.0, 1e-30) < 1e-35


def test_approximate_branch_substitutes_and_charges_delta():
    d1 = 1e-8
    thr = acc.cheu_delta_threshold(0.1, d1)
    spec = acc.LocalSpec(0.1, thr / 2)
    got = acc.fixed_window_bound(spec, acc.FixedWindowParams(10**4, 10**4, 1.0, DELTA, d1))
    want = fixed(0.8, 10**4, 1.0).epsilon
    assert got.epsilon == want
    assert got.delta == pytest.approx(DELTA + 10**4 * (math.exp(want) + 1) * d1)
    swap = acc.swap_bound(spec, 500, DELTA, d1)
    assert swap.delta == pytest.approx(DELTA + 500 * (math.exp(swap.epsilon) + 1) * d1)


def test_inadmissible_delta0_reports_threshold():
    with pytest.raises(acc.InadmissibleDeltaError) as info:
        acc.sliding_window_bound(acc.LocalSpec(1.0, 1e-3), 100, 10, DELTA, 1e-6)
    assert info.value.threshold == acc.cheu_delta_threshold(1.0, 1e-6)
    assert "2.7065" in str(info.value)


def test_delta1_pairing_rules():
    with pytest.raises(ValueError, match="requires delta1"):
        acc.swap_bound(acc.LocalSpec(1.0, 1e-20), 10, DELTA)
    with pytest.raises(ValueError, match="only used"):
        acc.swap_bound(pure(1.0), 10, DELTA, 1e-6)


def test_vacuous_flag():
    assert fixed(1.0, 1, 1.0).vacuous
    assert not fixed(1.0, 10**6, 1.0).vacuous


@pytest.mark.parametrize("call", [
    lambda: acc.FixedWindowParams(10, 10, 0.5, 0.0),
    lambda: acc.FixedWindowParams(10, 10, 0.5, 1.0),
    lambda: acc.FixedWindowParams(10, 10, 1.5, DELTA),
    lambda: acc.FixedWindowParams(10, 0, 0.5, DELTA),
    lambda: acc.LocalSpec(-0.1),
    lambda: acc.LocalSpec(1.0, 1.0),
    lambda: acc.sliding_window_bound(pure(1.0), 5, 10, DELTA),
    lambda: acc.replacement_bound(pure(1.0), 10, 1.2, DELTA),
    lambda: acc.BinSizes((3, 3), 7),
    lambda: acc.CompositionSchedule(()),
    lambda: acc.het_composition(1.0, 1.0, 10, DELTA),
    lambda: acc.het_composition(1.0, 0.0, 10, DELTA),
    lambda: acc.cheu_delta_threshold(1.0, 1.0),
    lambda: acc.biased_sampling_ratio(1.0, 1.5),
    lambda: acc.posterior_bound_fixed(1.0, 5, 6),
    lambda: acc.posterior_bound_swap(1.0, 5, 0),
    lambda: acc.shuffle_bound_old(acc.LocalSpec(1.0, 1e-20), 10, DELTA),
])
def test_invalid_inputs_rejected(call):
    with pytest.raises(ValueError):
        call()


def test_biased_sampling_and_posterior_edges():
    assert acc.biased_sampling_ratio(1.3, 1.0) == pytest.approx(1.0)
    assert acc.biased_sampling_ratio(1.3, 0.0) == pytest.approx(math.exp(1.3))
    assert acc.posterior_bound_fixed(0.9, 7, 1) == pytest.approx(1 / 7)
    e = math.exp(0.9)
    assert acc.posterior_bound_fixed(0.9, 7, 7) == pytest.approx(e / (6 + e))
    assert acc.posterior_bound_swap(0.0, 9, 4) == pytest.approx(1 / 9)
    assert acc.posterior_bound_swap(0.9, 9, 1) == pytest.approx(e * e / (e * e + 8 * e))


def test_dummy_expectations():
    assert acc.expected_dummy_fixed(1, 1, 1.0) == 0
    assert acc.expected_dummy_sliding(100, 1) == 0
    for c in (0.5, 1, 3):
        n, m = 10**4, 100
        assert acc.expected_dummy_fixed(n, m, c * m / n) <= m / math.exp(c)
    for n, m in ((100, 10), (2000, 50)):
        assert acc.expected_dummy_sliding(n, m) <= (n - m + 1) / math.e


def test_bin_load_bound_edge():
    assert acc.bin_load_l2_bound(200, 200, 1.0) == pytest.approx(math.sqrt(400))
