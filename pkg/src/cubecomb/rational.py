"""Exact rational parsing and formatting for the on-disk "num/den" convention."""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Union

RationalLike = Union[Fraction, int, str]

_RATIONAL_RE = re.compile(r"^\s*([+-]?\d+)\s*(?:/\s*(\d+)\s*)?$")


class RationalFormatError(ValueError):
    """Raised for malformed rational strings such as ``"3/0"`` or ``"0.5"``."""


def parse_rational(value: RationalLike) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise RationalFormatError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if not isinstance(value, str):
        raise RationalFormatError(f"not a rational: {value!r}")
    match = _RATIONAL_RE.match(value)
    if match is None:
        raise RationalFormatError(f"not a 'num/den' rational: {value!r}")
    num = int(match.group(1))
    den = int(match.group(2)) if match.group(2) is not None else 1
    if den == 0:
        raise RationalFormatError(f"zero denominator: {value!r}")
    return Fraction(num, den)


def format_rational(value: RationalLike) -> str:
    """Canonical "num/den" form; integers keep the "/1" so the format is uniform."""
    q = parse_rational(value)
    return f"{q.numerator}/{q.denominator}"
