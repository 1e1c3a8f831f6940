"""Exact heights: integer combinations of logarithms of primes.

A height is stored as a sparse map ``prime -> exponent`` meaning
``sum(e * ln p)``.  Logarithms of distinct primes are linearly independent
over the rationals, so two heights are equal exactly when their maps are
equal.  The reserved key ``UNIT`` (= 1) stands for the real number 1 itself,
which is also independent of the prime logarithms; it lets abstractly
oriented trees (height changes of +-1) share the same type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping

UNIT = 1


@lru_cache(maxsize=4096)
def factorize(n: int) -> tuple[tuple[int, int], ...]:
    if n < 1:
        raise ValueError(f"cannot factor non-positive integer {n}")
    from sympy import factorint

    return tuple(sorted(factorint(n).items()))


def _basis_value(key: int) -> float:
    return 1.0 if key == UNIT else math.log(key)


@dataclass(frozen=True, eq=False)
class HeightValue:
    coeffs: tuple[tuple[int, int], ...] = ()
    approx: float = field(default=0.0, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "approx", math.fsum(c * _basis_value(p) for p, c in self.coeffs)
        )

    @classmethod
    def from_mapping(cls, coeffs: Mapping[int, int]) -> "HeightValue":
        items = []
        for p, c in coeffs.items():
            p, c = int(p), int(c)
            if c:
                items.append((p, c))
        return cls(tuple(sorted(items)))

    @classmethod
    def zero(cls) -> "HeightValue":
        return _ZERO

    @classmethod
    def log_int(cls, n: int) -> "HeightValue":
        return cls(factorize(n))

    @classmethod
    def log_ratio(cls, num: int, den: int) -> "HeightValue":
        """``ln(num) - ln(den)``."""
        return cls.log_int(num) - cls.log_int(den)

    @classmethod
    def unit(cls, k: int = 1) -> "HeightValue":
        return cls.from_mapping({UNIT: k})

    def as_dict(self) -> dict[int, int]:
        return dict(self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs

    def _combine(self, other: "HeightValue", sign: int) -> "HeightValue":
        out = dict(self.coeffs)
        for p, c in other.coeffs:
            out[p] = out.get(p, 0) + sign * c
        return HeightValue.from_mapping(out)

    def __add__(self, other: "HeightValue") -> "HeightValue":
        if not other.coeffs:
            return self
        if not self.coeffs:
            return other
        return self._combine(other, 1)

    def __sub__(self, other: "HeightValue") -> "HeightValue":
        if not other.coeffs:
            return self
        return self._combine(other, -1)

    def __neg__(self) -> "HeightValue":
        return HeightValue(tuple((p, -c) for p, c in self.coeffs))

    def __mul__(self, k: int) -> "HeightValue":
        if not isinstance(k, int):
            return NotImplemented
        if k == 0:
            return _ZERO
        return HeightValue(tuple((p, k * c) for p, c in self.coeffs))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, HeightValue):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    # Ordering goes through the float cache; exact ties are handled by __eq__.
    def __lt__(self, other: "HeightValue") -> bool:
        return self.sort_key() < other.sort_key()

    def __le__(self, other: "HeightValue") -> bool:
        return self == other or self < other

    def __gt__(self, other: "HeightValue") -> bool:
        return other < self

    def __ge__(self, other: "HeightValue") -> bool:
        return self == other or other < self

    def sort_key(self) -> tuple[float, tuple[tuple[int, int], ...]]:
        return (self.approx, self.coeffs)

    def __float__(self) -> float:
        return self.approx

    def to_json(self) -> dict[str, int]:
        return {str(p): c for p, c in self.coeffs}

    @classmethod
    def from_json(cls, data: Mapping[str, int]) -> "HeightValue":
        return cls.from_mapping({int(k): int(v) for k, v in data.items()})

    def __repr__(self) -> str:
        if not self.coeffs:
            return "HeightValue(0)"
        terms = []
        for p, c in self.coeffs:
            base = "1" if p == UNIT else f"ln{p}"
            terms.append(f"{c:+d}*{base}")
        return f"HeightValue({' '.join(terms)} ~ {self.approx:.6g})"


_ZERO = HeightValue(())


def hsum(values: Iterable[HeightValue]) -> HeightValue:
    out: dict[int, int] = {}
    for v in values:
        for p, c in v.coeffs:
            out[p] = out.get(p, 0) + c
    return HeightValue.from_mapping(out)
