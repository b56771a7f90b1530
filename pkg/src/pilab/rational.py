"""Exact rational helpers built on gmpy2's ``mpq``."""

from __future__ import annotations

from decimal import Context, Decimal
from fractions import Fraction
from typing import Union

from gmpy2 import mpq

Rational = type(mpq())
RationalLike = Union[int, str, Fraction, "mpq"]

ZERO = mpq(0)
ONE = mpq(1)


def Q(value: RationalLike, den: int | None = None) -> "mpq":
    """Coerce ints, ``"num/den"`` strings, Fractions and mpq values to mpq."""
    if den is not None:
        return mpq(value, den)
    if isinstance(value, float):
        raise TypeError("floats are not accepted; pass an exact rational")
    return mpq(value)


def format_q(value: RationalLike) -> str:
    """Serialize as an exact ``num/den`` string (denominator always present)."""
    q = mpq(value)
    return f"{q.numerator}/{q.denominator}"


def parse_q(text: str) -> "mpq":
    text = text.strip()
    if not text:
        raise ValueError("empty rational")
    return mpq(text)


def to_decimal(value: RationalLike, digits: int = 40) -> str:
    """Decimal approximation with ``digits`` significant digits."""
    q = mpq(value)
    ctx = Context(prec=digits)
    return str(ctx.divide(Decimal(int(q.numerator)), Decimal(int(q.denominator))))


def terminating_decimal(value: RationalLike) -> str | None:
    """Exact decimal expansion if the denominator is of the form 2^a 5^b."""
    q = mpq(value)
    den = int(q.denominator)
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return None
    scale = max(twos, fives)
    digits = int(q.numerator) * 10**scale // int(q.denominator)
    sign = "-" if digits < 0 else ""
    digits = abs(digits)
    if scale == 0:
        return f"{sign}{digits}"
    whole, frac = divmod(digits, 10**scale)
    frac_text = str(frac).rjust(scale, "0").rstrip("0")
    return f"{sign}{whole}.{frac_text}" if frac_text else f"{sign}{whole}"
