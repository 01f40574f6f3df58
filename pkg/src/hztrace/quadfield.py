"""Exact arithmetic in the real quadratic field Q(sqrt(D)).

Elements are stored in the integral basis 1, w with w = (D + sqrt(D))/2,
so the ring of integers is exactly the elements with integer coordinates.
The minimal polynomial gives w^2 = D(1-D)/4 + D*w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction


def is_fundamental_discriminant(d: int) -> bool:
    if d <= 1:
        return False
    if d % 4 == 1:
        return _squarefree(d)
    if d % 4 == 0:
        m = d // 4
        return m % 4 in (2, 3) and _squarefree(m)
    return False


def _squarefree(n: int) -> bool:
    i = 2
    while i * i <= n:
        if n % (i * i) == 0:
            return False
        i += 1
    return True


@dataclass(frozen=True)
class QuadElt:
    """x + y*w with w = (D + sqrt D)/2; x, y exact rationals."""
    d: int
    x: Fraction
    y: Fraction

    @staticmethod
    def of(d: int, x, y=0) -> "QuadElt":
        return QuadElt(d, Fraction(x), Fraction(y))

    def __add__(self, o):
        o = self._coerce(o)
        return QuadElt(self.d, self.x + o.x, self.y + o.y)

    def __sub__(self, o):
        o = self._coerce(o)
        return QuadElt(self.d, self.x - o.x, self.y - o.y)

    def __neg__(self):
        return QuadElt(self.d, -self.x, -self.y)

    def __mul__(self, o):
        o = self._coerce(o)
        c = Fraction(self.d * (1 - self.d), 4)
        return QuadElt(
            self.d,
            self.x * o.x + c * self.y * o.y,
            self.x * o.y + self.y * o.x + self.d * self.y * o.y,
        )

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, o):
        return self._coerce(o) - self

    def conj(self) -> "QuadElt":
        """Galois conjugate: w -> D - w."""
        return QuadElt(self.d, self.x + self.d * self.y, -self.y)

    def trace(self) -> Fraction:
        return 2 * self.x + self.d * self.y

    def norm(self) -> Fraction:
        p = self * self.conj()
        assert p.y == 0
        return p.x

    def is_integral(self) -> bool:
        return self.x.denominator == 1 and self.y.denominator == 1

    def is_zero(self) -> bool:
        return self.x == 0 and self.y == 0

    def inverse(self) -> "QuadElt":
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("zero or non-invertible element")
        c = self.conj()
        return QuadElt(self.d, c.x / n, c.y / n)

    def embed(self, which: int, sqrt_d: float | None = None) -> float:
        """Real embedding; which = 0 sends sqrt(D) -> +sqrt(D)."""
        s = math.sqrt(self.d) if sqrt_d is None else sqrt_d
        w = (self.d + s) / 2 if which == 0 else (self.d - s) / 2
        return float(self.x) + float(self.y) * w

    def _coerce(self, o):
        if isinstance(o, QuadElt):
            if o.d != self.d:
                raise ValueError("mixed fields")
            return o
        return QuadElt(self.d, Fraction(o), Fraction(0))

    def __repr__(self):
        if self.y == 0:
            return str(self.x)
        return f"({self.x}+{self.y}w)"


def omega(d: int) -> QuadElt:
    return QuadElt(d, Fraction(0), Fraction(1))


def sqrt_d(d: int) -> QuadElt:
    """sqrt(D) = 2w - D."""
    return QuadElt(d, Fraction(-d), Fraction(2))


class Mat2:
    """2x2 matrix over Q(sqrt D)."""

    __slots__ = ("a", "b", "c", "e")

    def __init__(self, a: QuadElt, b: QuadElt, c: QuadElt, e: QuadElt):
        self.a, self.b, self.c, self.e = a, b, c, e

    @staticmethod
    def identity(d: int) -> "Mat2":
        one = QuadElt.of(d, 1)
        zero = QuadElt.of(d, 0)
        return Mat2(one, zero, zero, one)

    def __matmul__(self, o: "Mat2") -> "Mat2":
        return Mat2(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.e,
            self.c * o.a + self.e * o.c,
            self.c * o.b + self.e * o.e,
        )

    def det(self) -> QuadElt:
        return self.a * self.e - self.b * self.c

    def conj(self) -> "Mat2":
        return Mat2(self.a.conj(), self.b.conj(), self.c.conj(), self.e.conj())

    def transpose(self) -> "Mat2":
        return Mat2(self.a, self.c, self.b, self.e)

    def inverse(self) -> "Mat2":
        dt = self.det()
        di = dt.inverse()
        return Mat2(self.e * di, -self.b * di, -self.c * di, self.a * di)

    def is_integral(self) -> bool:
        return all(v.is_integral() for v in (self.a, self.b, self.c, self.e))

    def embed(self, which: int) -> list[list[float]]:
        return [[self.a.embed(which), self.b.embed(which)],
                [self.c.embed(which), self.e.embed(which)]]

    def __repr__(self):
        return f"[[{self.a}, {self.b}], [{self.c}, {self.e}]]"
