"""Exact rational helpers shared by ingestion, scaling and reporting."""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational


def as_fraction(value) -> Fraction:
    """Convert ints, decimal strings, ``"p/q"`` strings or Fractions exactly.

    Floats are refused: they have already lost the decimal text.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot convert {type(value).__name__} exactly")


def decimal_exponent(value: Fraction) -> int | None:
    """Smallest n with value * 10**n integral, or None if the decimal never ends."""
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return None
    return max(twos, fives)


def format_number(value: Fraction) -> str:
    """Exact text for a rational: a decimal literal when one exists, else "p/q"."""
    value = Fraction(value)
    n = decimal_exponent(value)
    if n is None:
        return f"{value.numerator}/{value.denominator}"
    if n == 0:
        return str(value.numerator)
    scaled = value.numerator * 10**n // value.denominator
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled)).rjust(n + 1, "0")
    text = f"{digits[:-n]}.{digits[-n:]}".rstrip("0").rstrip(".")
    return sign + text


def to_json_number(value: Fraction) -> int | float | str:
    """Value for JSON reports: int when integral, else the exact text."""
    value = Fraction(value)
    if value.denominator == 1:
        return value.numerator
    return format_number(value)
