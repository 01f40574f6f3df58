"""Coset-graded formal q-expansions with exact coefficients in Q * sqrt(s).

A QSeries is a finite table (coset element, rational exponent) -> QuadScalar
together with the FqModule it is graded over, a dual flag, a half-integral
weight and a validity ceiling.  The grading invariant

    exponent == Q(beta) mod 1       (dual = False)
    exponent == -Q(beta) mod 1      (dual = True)

is enforced on every construction.  Operations: normalized derivative,
tensor product, Rankin-Cohen bracket (Gamma ratios evaluated as exact
rationals), the arrow-up/arrow-down maps along a finite-index sublattice,
and the constant-term pairing that is the heart of the trace formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .fqm import FqModule, frac_mod1


def _squarefree_split(n: int) -> tuple[int, int]:
    """n = a^2 * s, s squarefree; returns (a, s)."""
    a, s, d = 1, 1, 2
    while d * d <= n:
        while n % (d * d) == 0:
            n //= d * d
            a *= d
        if n % d == 0:
            n //= d
            s *= d
        d += 1
    return a, s * n


@dataclass(frozen=True)
class QuadScalar:
    """rat * sqrt(rad) with rat rational and rad squarefree positive."""
    rat: Fraction
    rad: int = 1

    @staticmethod
    def of(rat, rad: int = 1) -> "QuadScalar":
        rat = Fraction(rat)
        if rat == 0:
            return QuadScalar(Fraction(0), 1)
        if rad <= 0:
            raise ValueError("radicand must be positive")
        a, s = _squarefree_split(rad)
        return QuadScalar(rat * a, s)

    def __add__(self, other: "QuadScalar") -> "QuadScalar":
        if self.rat == 0:
            return other
        if other.rat == 0:
            return self
        if self.rad != other.rad:
            raise ValueError(f"mixed radicals: sqrt{self.rad} + sqrt{other.rad}")
        return QuadScalar.of(self.rat + other.rat, self.rad)

    def __neg__(self):
        return QuadScalar(-self.rat, self.rad)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other) -> "QuadScalar":
        if isinstance(other, QuadScalar):
            return QuadScalar.of(self.rat * other.rat, self.rad * other.rad)
        return QuadScalar.of(self.rat * Fraction(other), self.rad)

    __rmul__ = __mul__

    def __bool__(self):
        return self.rat != 0

    def is_rational(self) -> bool:
        return self.rad == 1

    def as_rational(self) -> Fraction:
        if self.rad != 1:
            raise ValueError(f"radical did not collapse: {self}")
        return self.rat

    def __float__(self):
        return float(self.rat) * math.sqrt(self.rad)

    def __repr__(self):
        if self.rad == 1:
            return str(self.rat)
        return f"{self.rat}*sqrt({self.rad})"


ZERO = QuadScalar(Fraction(0), 1)


class QSeries:
    """Vector-valued formal q-expansion, exact and finitely truncated."""

    def __init__(self, fq: FqModule, dual: bool, weight: Fraction,
                 coeffs: Mapping, ceiling, check: bool = True):
        self.fq = fq
        self.dual = dual
        self.weight = Fraction(weight)
        self.ceiling = Fraction(ceiling)
        cleaned: dict[tuple, QuadScalar] = {}
        for (beta, n), c in coeffs.items():
            if not isinstance(c, QuadScalar):
                c = QuadScalar.of(c)
            if not c:
                continue
            n = Fraction(n)
            if n > self.ceiling:
                continue
            cleaned[(tuple(beta), n)] = c
        self.coeffs = cleaned
        if check:
            sgn = -1 if dual else 1
            for (beta, n) in self.coeffs:
                if frac_mod1(n - sgn * fq.q_value(beta)) != 0:
                    raise ValueError(
                        f"grading violated at coset {beta}, exponent {n}")

    # -- views -------------------------------------------------------------

    def coefficient(self, beta, n) -> QuadScalar:
        return self.coeffs.get((tuple(beta), Fraction(n)), ZERO)

    def exponent_floor(self) -> Fraction:
        if not self.coeffs:
            return Fraction(0)
        return min(n for (_b, n) in self.coeffs)

    def principal_part(self) -> dict:
        return {k: v for k, v in self.coeffs.items() if k[1] < 0}

    def support_cosets(self) -> set:
        return {b for (b, _n) in self.coeffs}

    def common_radicand(self) -> int:
        rads = {c.rad for c in self.coeffs.values()}
        if not rads:
            return 1
        if len(rads) > 1:
            raise ValueError(f"mixed radicands in series: {sorted(rads)}")
        return rads.pop()

    def is_zero(self) -> bool:
        return not self.coeffs

    # -- linear structure ----------------------------------------------------

    def __add__(self, other: "QSeries") -> "QSeries":
        self._compat(other)
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, ZERO) + c
        return QSeries(self.fq, self.dual, self.weight, out,
                       min(self.ceiling, other.ceiling), check=False)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c) -> "QSeries":
        if not isinstance(c, QuadScalar):
            c = QuadScalar.of(c)
        return QSeries(self.fq, self.dual, self.weight,
                       {k: v * c for k, v in self.coeffs.items()},
                       self.ceiling, check=False)

    def _compat(self, other: "QSeries"):
        if self.fq != other.fq or self.dual != other.dual \
                or self.weight != other.weight:
            raise ValueError("incompatible series")

    def truncate(self, ceiling) -> "QSeries":
        ceiling = Fraction(ceiling)
        return QSeries(self.fq, self.dual, self.weight,
                       {k: v for k, v in self.coeffs.items() if k[1] <= ceiling},
                       min(self.ceiling, ceiling), check=False)

    def to_json(self) -> dict:
        return {
            "fq": self.fq.to_json(),
            "dual": self.dual,
            "weight": str(self.weight),
            "ceiling": str(self.ceiling),
            "radicand": self.common_radicand(),
            "coeffs": [[list(b), str(n), str(c.rat)]
                       for (b, n), c in sorted(self.coeffs.items())],
        }

    def __repr__(self):
        terms = sorted(self.coeffs.items(), key=lambda kv: (kv[0][1], kv[0][0]))
        inner = " + ".join(f"({c})q^{n}e{list(b)}" for (b, n), c in terms[:6])
        more = "..." if len(terms) > 6 else ""
        return f"QSeries[w={self.weight}, dual={self.dual}]({inner}{more})"


# -- operations ---------------------------------------------------------------

def derivative(f: QSeries, r: int) -> QSeries:
    """Normalized derivative f^(r) = (2 pi i)^(-r) d^r/dtau^r f: the
    coefficient at exponent n picks up n^r."""
    if r < 0:
        raise ValueError("derivative order must be nonnegative")
    if r == 0:
        return f
    out = {}
    for (b, n), c in f.coeffs.items():
        if n == 0:
            continue
        out[(b, n)] = c * (n ** r)
    return QSeries(f.fq, f.dual, f.weight + 2 * r, out, f.ceiling, check=False)


def tensor(f: QSeries, g: QSeries) -> QSeries:
    """f (x) g = sum f_mu g_nu e_(mu+nu), graded over the direct sum module."""
    if f.dual != g.dual:
        raise ValueError("tensor of mixed dual flags")
    fq_out = f.fq.direct_sum(g.fq)
    # identify (mu, nu) with a coset of the sum via dual-vector concatenation
    pair_cache: dict[tuple, tuple] = {}

    def pair(mu, nu):
        key = (mu, nu)
        if key not in pair_cache:
            coords = list(f.fq.dual_coords(mu)) + list(g.fq.dual_coords(nu))
            pair_cache[key] = fq_out.coset_of_dual(coords)
        return pair_cache[key]

    # output exact up to where every contributing pair is jointly known
    ceiling = min(f.ceiling + g.exponent_floor(), g.ceiling + f.exponent_floor())
    out: dict[tuple, QuadScalar] = {}
    for (mu, n1), c1 in f.coeffs.items():
        for (nu, n2), c2 in g.coeffs.items():
            n = n1 + n2
            if n > ceiling:
                continue
            k = (pair(mu, nu), n)
            prod = c1 * c2
            out[k] = out.get(k, ZERO) + prod
    return QSeries(fq_out, f.dual, f.weight + g.weight, out, ceiling, check=False)


def _gamma_ratio(a: Fraction, s: int) -> Fraction:
    """Gamma(a)/Gamma(a-s) = (a-1)(a-2)...(a-s) for integer s >= 0."""
    out = Fraction(1)
    for i in range(1, s + 1):
        out *= (a - i)
    return out


def rc_bracket(f: QSeries, g: QSeries, n: int) -> QSeries:
    """n-th Rankin-Cohen bracket of weights k, l:

    [f,g]_n = sum_{r+s=n} (-1)^s  Gamma(k+n) Gamma(l+n)
              / (Gamma(s+1) Gamma(k+n-s) Gamma(r+1) Gamma(l+n-r))
              f^(r) (x) g^(s),

    of weight k + l + 2n.  All Gamma ratios are exact rationals.
    """
    if n < 0:
        raise ValueError("bracket order must be nonnegative")
    k, l = f.weight, g.weight
    if k + n <= 0 or l + n <= 0:
        raise ValueError("nonpositive Gamma argument in Rankin-Cohen bracket")
    total: QSeries | None = None
    for s in range(n + 1):
        r = n - s
        coeff = (Fraction((-1) ** s)
                 * _gamma_ratio(k + n, s) / math.factorial(s)
                 * _gamma_ratio(l + n, r) / math.factorial(r))
        term = tensor(derivative(f, r), derivative(g, s)).scale(coeff)
        total = term if total is None else total + term
    return total


@dataclass
class SublatticeMap:
    """Coset data of a finite-index sublattice K of L: for each element of
    K'/K, its image in L'/L under the reduction L'/K -> L'/L, or None when
    the coset is not in L'/K."""
    sub_fq: FqModule
    super_fq: FqModule
    reduction: dict  # sub element -> super element or None

    @staticmethod
    def from_basis(super_fq: FqModule, super_gram, basis_cols) -> "SublatticeMap":
        """basis_cols: rows-indexed matrix whose columns express the K-basis
        in L-coordinates."""
        nrows = len(basis_cols)
        ncols = len(basis_cols[0])
        sub_gram = [[sum(Fraction(basis_cols[i][a]) * super_gram[i][j]
                         * Fraction(basis_cols[j][b])
                         for i in range(nrows) for j in range(nrows))
                     for b in range(ncols)] for a in range(ncols)]
        for row in sub_gram:
            for x in row:
                assert Fraction(x).denominator == 1
        sub_gram = [[int(x) for x in row] for row in sub_gram]
        sub_fq = FqModule(sub_gram, super_fq.signature_pair)
        red = {}
        for e in sub_fq.elements():
            c = sub_fq.dual_coords(e)
            lcoords = [sum(Fraction(basis_cols[i][j]) * c[j] for j in range(ncols))
                       for i in range(nrows)]
            w = [sum(Fraction(super_gram[i][j]) * lcoords[j] for j in range(nrows))
                 for i in range(nrows)]
            if all(x.denominator == 1 for x in w):
                red[e] = super_fq.coset_of_dual(lcoords)
            else:
                red[e] = None
        return SublatticeMap(sub_fq, super_fq, red)

    def fibers(self) -> dict:
        out: dict = {}
        for sub_e, sup_e in self.reduction.items():
            if sup_e is not None:
                out.setdefault(sup_e, []).append(sub_e)
        return out


def arrow_down(f: QSeries, submap: SublatticeMap) -> QSeries:
    """(f_K)_mu = f_{reduction(mu)} if mu in L'/K, else 0."""
    if f.fq != submap.super_fq:
        raise ValueError("series not over the super lattice module")
    out = {}
    for sub_e, sup_e in submap.reduction.items():
        if sup_e is None:
            continue
        for (b, n), c in f.coeffs.items():
            if b == sup_e:
                out[(sub_e, n)] = c
    return QSeries(submap.sub_fq, f.dual, f.weight, out, f.ceiling, check=False)


def arrow_up(g: QSeries, submap: SublatticeMap) -> QSeries:
    """(g^L)_mubar = sum_{alpha in L/K} g_{alpha + mu}."""
    if g.fq != submap.sub_fq:
        raise ValueError("series not over the sub lattice module")
    out: dict = {}
    for (b, n), c in g.coeffs.items():
        sup = submap.reduction.get(b)
        if sup is None:
            continue
        k = (sup, n)
        out[k] = out.get(k, ZERO) + c
    return QSeries(submap.super_fq, g.dual, g.weight, out, g.ceiling, check=False)


def ct_pair(f: QSeries, g: QSeries) -> QuadScalar:
    """Constant term of <f, conj(g)>: sum_beta sum_n f(beta, -n) g(beta, n).

    f must be for the dual representation and g for the representation of
    the same module, so paired exponents sum to integers.  Conjugation acts
    trivially (all coefficients are real QuadScalars by construction).
    """
    if f.fq != g.fq:
        raise ValueError("ct_pair needs matching finite quadratic modules")
    if not f.dual or g.dual:
        raise ValueError("ct_pair expects (dual, non-dual) series")
    f_floor, g_floor = f.exponent_floor(), g.exponent_floor()
    if f.coeffs and g.coeffs:
        # overlap n in [g_floor, -f_floor]; both sides must be valid there
        if -f_floor > g.ceiling:
            raise ValueError("insufficient ceiling for constant-term pairing")
        if -g_floor > f.ceiling:
            raise ValueError("insufficient ceiling for constant-term pairing")
    total = ZERO
    for (b, n), cf in f.coeffs.items():
        cg = g.coeffs.get((b, -n))
        if cg is not None:
            total = total + cf * cg
    return total
