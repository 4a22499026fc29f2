"""Continued-fraction arithmetic: exact convergents, surd values, perturbed angles."""

import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st
from mpmath import mp, mpf, workdps

from siegelab.cfrac import (
    CFAngle,
    GOLDEN,
    SILVER,
    PerturbationSpec,
    check_class_SN,
    cf_value,
    convergents,
    default_A,
    epsilon_n,
    make_perturbed_angle,
    theta_value,
)
from siegelab.errors import PrecisionError


def fold_exact(a0, entries, tail_value=None):
    """Independent big-rational fold of a finite continued fraction.

    With ``tail_value`` (a Fraction) the last level continues with it.
    """
    acc = Fraction(tail_value) if tail_value is not None else None
    for a in reversed(entries):
        acc = a + (0 if acc is None else 1 / acc) if acc is not None else Fraction(a)
    return a0 + (1 / acc if acc is not None else 0)


bounded_angles = st.builds(
    CFAngle,
    st.just(0),
    st.lists(st.integers(1, 9), max_size=8).map(tuple),
    st.lists(st.integers(1, 9), min_size=1, max_size=4).map(tuple),
)


class TestConvergents:
    def test_fibonacci(self):
        got = convergents(GOLDEN, 6)
        assert got == [(0, 1), (1, 1), (1, 2), (2, 3), (3, 5), (5, 8), (8, 13)]

    def test_silver(self):
        assert convergents(SILVER, 3) == [(0, 1), (1, 2), (2, 5), (5, 12)]

    @given(bounded_angles)
    def test_recurrence_and_coprimality(self, cf):
        # oracle: exact rational fold of the truncated fraction
        pairs = convergents(cf, 8)
        for k, (p, q) in enumerate(pairs):
            assert math.gcd(p, q) == 1
            truncated = fold_exact(cf.a0, cf.entries(k))
            assert Fraction(p, q) == truncated
        for k in range(2, 9):
            a = cf.entry(k)
            assert pairs[k][0] == a * pairs[k - 1][0] + pairs[k - 2][0]
            assert pairs[k][1] == a * pairs[k - 1][1] + pairs[k - 2][1]

    @given(bounded_angles)
    def test_error_bound_exact_integers(self, cf):
        # |value - p_k/q_k| < 1/(q_k q_{k+1}), decided in integer arithmetic
        for k in range(0, 7):
            p, q = cf.convergent(k)
            _, q1 = cf.convergent(k + 1)
            bound = Fraction(1, q * q1)
            upper = Fraction(p, q) + bound
            lower = Fraction(p, q) - bound
            assert cf.compare_to_rational(upper.numerator, upper.denominator) < 0
            assert cf.compare_to_rational(lower.numerator, lower.denominator) > 0

    @given(bounded_angles)
    def test_alternating_sides(self, cf):
        for k in range(0, 7):
            p, q = cf.convergent(k)
            sign = cf.compare_to_rational(p, q)
            assert sign == (1 if k % 2 == 0 else -1)


class TestValue:
    def test_golden(self):
        with workdps(40):
            v = cf_value(GOLDEN, 40)
            assert abs(v - (mp.sqrt(5) - 1) / 2) < mpf(10) ** -38

    def test_silver(self):
        with workdps(40):
            v = cf_value(SILVER, 40)
            assert abs(v - (mp.sqrt(2) - 1)) < mpf(10) ** -38

    def test_hybrid_near_convergent(self):
        # golden prefix of length 7, then a huge entry and a (50) tail: the value
        # stays within the exact convergent bound 1/(q_7 q_8) of 13/21
        cf = CFAngle(0, (1,) * 7 + (10**10,), (50,))
        p7, q7 = cf.convergent(7)
        assert (p7, q7) == (13, 21)
        _, q8 = cf.convergent(8)
        bound = Fraction(1, q7 * q8)
        hi = Fraction(13, 21) + bound
        lo = Fraction(13, 21) - bound
        assert cf.compare_to_rational(hi.numerator, hi.denominator) < 0
        assert cf.compare_to_rational(lo.numerator, lo.denominator) > 0

    def test_rejects_low_digits(self):
        with pytest.raises(ValueError):
            cf_value(GOLDEN, 10)

    def test_rational_value(self):
        cf = CFAngle(0, (2, 3), ())
        assert cf.as_fraction() == Fraction(3, 7)


class TestCanonicalForm:
    def test_trailing_one_folds(self):
        assert CFAngle(0, (2, 1), ()) == CFAngle(0, (3,), ())

    def test_period_reduces(self):
        assert CFAngle(0, (), (1, 1)) == GOLDEN

    def test_head_absorbs_rotation(self):
        assert CFAngle(0, (1, 1), (1,)) == GOLDEN
        assert CFAngle(0, (2, 1), (2, 1)) == CFAngle(0, (), (2, 1))
        assert CFAngle(0, (2, 1), (2, 1)) != CFAngle(0, (), (1, 2))

    def test_serialize_roundtrip(self):
        for cf in (GOLDEN, SILVER, CFAngle(0, (1, 2, 3), (4, 5)), CFAngle(3, (7, 16), ())):
            assert CFAngle.parse(cf.serialize()) == cf


class TestClassSN:
    def test_golden_in_S1(self):
        assert check_class_SN(GOLDEN, 1) == (True, None)

    def test_golden_not_in_S2(self):
        assert check_class_SN(GOLDEN, 2) == (False, 1)

    def test_fifty(self):
        assert check_class_SN(CFAngle(0, (), (50,)), 50) == (True, None)

    def test_rational_fails(self):
        ok, witness = check_class_SN(CFAngle(0, (2, 3), ()), 1)
        assert not ok and witness is None


class TestPerturbedAngle:
    def test_figure_parameters(self):
        spec = PerturbationSpec(GOLDEN, 7, 10**10, 1)
        a = make_perturbed_angle(spec)
        assert a.head == (1,) * 7 + (10**10,)
        assert a.period == (1,)

    def test_convergents_preserved_exactly(self):
        spec = PerturbationSpec(GOLDEN, 7, 10**10, 1)
        a = make_perturbed_angle(spec)
        for k in range(8):
            assert a.convergent(k) == GOLDEN.convergent(k)

    def test_identity_perturbation(self):
        # A_n equal to the base's own next entry and matching tail gives back the base
        spec = PerturbationSpec(GOLDEN, 5, 1, 1)
        assert make_perturbed_angle(spec) == GOLDEN

    def test_rejects_bad_n(self):
        with pytest.raises(ValueError):
            PerturbationSpec(GOLDEN, 0, 10, 1)

    def test_rejects_entries_below_N(self):
        with pytest.raises(ValueError):
            PerturbationSpec(GOLDEN, 3, 10, 2)

    def test_dual_evaluation_30_digits(self):
        # n=5 with A = q_5^q_5 = 8^8: surd evaluation vs deep rational truncation
        A = default_A(GOLDEN, 5)
        assert A == 8**8
        spec = PerturbationSpec(GOLDEN, 5, A, 1)
        a = spec.alpha_n
        with workdps(80):
            v_quadratic = a.value(70)
            # independent oracle: truncate far into the constant tail and fold
            # exactly; the truncation error is < 1/q_60^2 << 1e-35
            entries = a.entries(60)
            v_truncated = fold_exact(0, entries)
            diff = abs(v_quadratic - mpf(v_truncated.numerator) / v_truncated.denominator)
            assert diff < mpf(10) ** -30


class TestEpsilon:
    def test_sign_follows_parity(self):
        for n in (2, 4, 6):
            spec = PerturbationSpec(GOLDEN, n, 100, 1)
            assert spec.epsilon_closed_form() > 0
        for n in (3, 5, 7):
            spec = PerturbationSpec(GOLDEN, n, 100, 1)
            assert spec.epsilon_closed_form() < 0

    def test_figure_parameters_agreement(self):
        spec = PerturbationSpec(GOLDEN, 7, 10**10, 1, digits=60)
        closed = spec.epsilon_closed_form(60)
        direct = spec.epsilon_direct(60)
        with workdps(80):
            assert abs(closed - direct) / abs(closed) < mpf(10) ** -40

    def test_certified_value(self):
        spec = PerturbationSpec(GOLDEN, 6, 10**6, 1)
        e = epsilon_n(spec)
        assert e > 0

    def test_monotone_in_A(self):
        e1 = abs(PerturbationSpec(GOLDEN, 4, 100, 1).epsilon_closed_form())
        e2 = abs(PerturbationSpec(GOLDEN, 4, 101, 1).epsilon_closed_form())
        assert e2 < e1

    @given(
        st.integers(2, 6),
        st.integers(1, 10**6),
        st.integers(1, 5),
    )
    def test_closed_form_equals_direct(self, n, A, N):
        base = CFAngle(0, (), (N,))
        spec = PerturbationSpec(base, n, A, N, digits=60)
        closed = spec.epsilon_closed_form(60)
        direct = spec.epsilon_direct(60)
        with workdps(80):
            assert abs(closed - direct) / abs(closed) < mpf(10) ** -30

    def test_theta_value(self):
        with workdps(40):
            assert abs(theta_value(1, 40) - (mp.sqrt(5) - 1) / 2) < mpf(10) ** -35
            assert abs(theta_value(2, 40) - (mp.sqrt(2) - 1)) < mpf(10) ** -35
