from fractions import Fraction

import pytest
from gmpy2 import mpq
from hypothesis import given
from hypothesis import strategies as st

from pilab.rational import Q, format_q, parse_q, terminating_decimal, to_decimal

fractions = st.fractions(max_denominator=10**12)


@given(fractions)
def test_format_parse_round_trip(x):
    q = Q(x)
    assert parse_q(format_q(q)) == q
    assert "/" in format_q(q)


@given(st.integers(-10**6, 10**6), st.integers(0, 12), st.integers(0, 12))
def test_terminating_decimal_is_exact(num, twos, fives):
    q = mpq(num, 2**twos * 5**fives)
    text = terminating_decimal(q)
    assert text is not None
    assert Fraction(text) == Fraction(int(q.numerator), int(q.denominator))


def test_terminating_decimal_rejects_thirds():
    assert terminating_decimal(mpq(1, 3)) is None
    assert terminating_decimal(mpq(-7, 4)) == "-1.75"
    assert terminating_decimal(mpq(10)) == "10"


def test_to_decimal_digits():
    assert to_decimal(mpq(1, 3), 5) == "0.33333"
    assert to_decimal(mpq(-2, 1)) == "-2"


def test_floats_refused():
    with pytest.raises(TypeError):
        Q(0.5)
    assert Q(1, 3) == Q("1/3") == Q(Fraction(1, 3))


def test_parse_empty():
    with pytest.raises(ValueError):
        parse_q("  ")
