"""Exact rational scalars shared by the set algebra.

Set corners are exact rationals; the algebra never rounds.  The wire
format encodes dyadic rationals as ``{"num": n, "exp2": k}`` (value
``n / 2**k``).  Plain JSON numbers are accepted too: ints exactly,
floats via their exact binary value (every finite float is dyadic).
Values produced internally that are not dyadic (witness budgets split
three ways, say) serialize as ``{"num": n, "den": d}``.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Union

RationalLike = Union[int, float, str, Fraction, dict]


def as_fraction(value: RationalLike) -> Fraction:
    """Convert to an exact Fraction without rounding.

    Floats convert to their exact binary value.  Strings accept "p/q"
    and plain integer literals; decimal strings are rejected because
    silently reading "0.3" as 3/10 or as the float bits would be a
    guess either way.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a rational scalar")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError(f"non-finite scalar {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, dict):
        return rational_from_json(value)
    raise TypeError(f"cannot interpret {value!r} as an exact rational")


def is_dyadic(q: Fraction) -> bool:
    """True when the denominator is a power of two."""
    d = q.denominator
    return d & (d - 1) == 0


def rational_to_json(q: Fraction) -> int | dict:
    if q.denominator == 1:
        return int(q)
    if is_dyadic(q):
        return {"num": q.numerator, "exp2": q.denominator.bit_length() - 1}
    return {"num": q.numerator, "den": q.denominator}


def rational_from_json(obj: object) -> Fraction:
    if isinstance(obj, dict):
        if "exp2" in obj:
            return Fraction(int(obj["num"]), 2 ** int(obj["exp2"]))
        if "den" in obj:
            return Fraction(int(obj["num"]), int(obj["den"]))
        raise ValueError(f"malformed rational object {obj!r}")
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return as_fraction(obj)
    raise ValueError(f"malformed rational value {obj!r}")
