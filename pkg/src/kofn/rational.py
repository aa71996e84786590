"""Exact rational arithmetic shared by every module.

All probabilities, rates, costs, loads and flow amounts in this package are
exact rationals; floats appear only in Monte Carlo simulation and in decimal
display. gmpy2's mpq is used when available (it is much faster on the long
product chains the solver produces), with fractions.Fraction as a drop-in
fallback. Both types hash and compare identically, so callers never need to
know which one is active.
"""

from __future__ import annotations

import decimal
from fractions import Fraction
from typing import Union

try:
    from gmpy2 import mpq as _mpq

    _RAT_BACKEND = "gmpy2"
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    _mpq = Fraction
    _RAT_BACKEND = "fractions"

#: The concrete rational type in use. Treat as opaque; build values with rat().
Rat = type(_mpq(0, 1))

RatLike = Union[int, str, Fraction, "Rat"]

ZERO = _mpq(0, 1)
ONE = _mpq(1, 1)


def rat(value: RatLike, den: int | None = None) -> Rat:
    """Build an exact rational from ints, strings, Fractions, or Rat values.

    Strings accept the forms "a/b", "a", and exact decimals like "0.25" or
    "2.5e-3". Floats are rejected: they would smuggle rounding error into a
    codebase whose contracts are exact equalities.
    """
    if den is not None:
        return _mpq(value, den)
    if isinstance(value, float):
        raise TypeError(
            "refusing float %r: pass an int, a Fraction, or a string like '3/4'" % (value,)
        )
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            num, _, d = text.partition("/")
            return _mpq(int(num), int(d))
        # Fraction's string parser handles decimal and exponent notation exactly.
        return _mpq(Fraction(text))
    return _mpq(value)


def format_rat(value: Rat) -> str:
    """Canonical text form: "a/b", or "a" when the denominator is 1."""
    return str(_mpq(value))


def rat_to_decimal(value: Rat, digits: int = 12) -> str:
    """Round to the given number of significant digits, half-even.

    Used only for human-readable display; never feed the result back into
    exact computations.
    """
    if digits < 1:
        raise ValueError("digits must be >= 1")
    ctx = decimal.Context(prec=digits, rounding=decimal.ROUND_HALF_EVEN)
    q = _mpq(value)
    return str(ctx.divide(decimal.Decimal(int(q.numerator)), decimal.Decimal(int(q.denominator))))


def backend() -> str:
    """Name of the active rational backend ("gmpy2" or "fractions")."""
    return _RAT_BACKEND
