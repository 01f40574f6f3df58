"""Finite quadratic modules and the Weil representation on their group rings.

A finite quadratic module is a finite abelian group G together with a
quadratic form Q : G -> Q/Z.  Here G always arises as the discriminant
group L'/L of an even lattice L with Gram matrix S: the group is
Z^n / S Z^n, an element w corresponds to the dual vector S^{-1} w, and

    Q(w) = w^T S^{-1} w / 2  (mod 1),
    (w1, w2) = w1^T S^{-1} w2  (mod 1).

The metaplectic generators act on the group ring C[G] by

    rho(T) e_b = e(Q(b)) e_b,
    rho(S) e_b = (sqrt(i)^(b- - b+) / sqrt(|G|)) sum_c e(-(b,c)) e_c,

with sqrt(i) = e(1/8).  rho(S) is kept exactly: every entry is a root of
unity scaled by 1/sqrt(|G|).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

Element = tuple[int, ...]


def smith_normal_form(mat: Sequence[Sequence[int]]):
    """Return (U, D, V) with U @ mat @ V = D diagonal and U, V unimodular.

    Plain integer row/column reduction; fine for the small matrices
    (rank <= 8) appearing here.  All arithmetic is exact Python int.
    """
    a = [list(map(int, row)) for row in mat]
    n = len(a)
    m = len(a[0]) if n else 0
    u = [[int(i == j) for j in range(n)] for i in range(n)]
    v = [[int(i == j) for j in range(m)] for i in range(m)]

    def swap_rows(i, j):
        a[i], a[j] = a[j], a[i]
        u[i], u[j] = u[j], u[i]

    def swap_cols(i, j):
        for row in a:
            row[i], row[j] = row[j], row[i]
        for row in v:
            row[i], row[j] = row[j], row[i]

    def add_row(src, dst, c):
        a[dst] = [x + c * y for x, y in zip(a[dst], a[src])]
        u[dst] = [x + c * y for x, y in zip(u[dst], u[src])]

    def add_col(src, dst, c):
        for row in a:
            row[dst] += c * row[src]
        for row in v:
            row[dst] += c * row[src]

    t = 0
    while t < min(n, m):
        # find a pivot
        pi, pj = None, None
        best = None
        for i in range(t, n):
            for j in range(t, m):
                if a[i][j] != 0 and (best is None or abs(a[i][j]) < best):
                    best = abs(a[i][j])
                    pi, pj = i, j
        if pi is None:
            break
        swap_rows(t, pi)
        swap_cols(t, pj)
        while True:
            reduced = True
            for i in range(t + 1, n):
                if a[i][t] != 0:
                    q = a[i][t] // a[t][t]
                    add_row(t, i, -q)
                    if a[i][t] != 0:
                        swap_rows(t, i)
                        reduced = False
            for j in range(t + 1, m):
                if a[t][j] != 0:
                    q = a[t][j] // a[t][t]
                    add_col(t, j, -q)
                    if a[t][j] != 0:
                        swap_cols(t, j)
                        reduced = False
            if reduced:
                break
        # ensure divisibility a[t][t] | a[i][j] for the tail
        fixed = True
        for i in range(t + 1, n):
            for j in range(t + 1, m):
                if a[i][j] % a[t][t] != 0:
                    add_row(i, t, 1)
                    fixed = False
                    break
            if not fixed:
                break
        if fixed:
            if a[t][t] < 0:
                a[t] = [-x for x in a[t]]
                u[t] = [-x for x in u[t]]
            t += 1
    return u, a, v


def _mat_inv_fractions(mat: Sequence[Sequence[int]]):
    """Exact inverse of an integer matrix, as Fractions."""
    n = len(mat)
    aug = [[Fraction(mat[i][j]) for j in range(n)] + [Fraction(int(i == j)) for j in range(n)]
           for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise ValueError("singular matrix")
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        aug[col] = [x / pv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def _squarefree_decomposition(n: int) -> tuple[int, int]:
    """n = a^2 * s with s squarefree; returns (a, s).  n >= 1."""
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


def frac_mod1(x: Fraction) -> Fraction:
    return x - (x.numerator // x.denominator)


class FqModule:
    """Discriminant form of an even lattice.

    Elements are tuples of residues against the elementary divisors,
    reduced to [0, order).  `dual_coords(e)` gives the coordinates (in the
    lattice basis) of a representative dual vector.
    """

    def __init__(self, gram: Sequence[Sequence[int]], signature_pair: tuple[int, int]):
        gram = [list(map(int, row)) for row in gram]
        n = len(gram)
        for i in range(n):
            if gram[i][i] % 2 != 0:
                raise ValueError("lattice not even")
            for j in range(n):
                if gram[i][j] != gram[j][i]:
                    raise ValueError("gram not symmetric")
        det = _int_det(gram) if n else 1
        if det == 0:
            raise ValueError("singular lattice")
        self.gram = gram
        self.signature_pair = signature_pair
        self._ginv = _mat_inv_fractions(gram) if n else []
        u, d, _v = smith_normal_form(gram) if n else ([], [], [])
        self._u = u
        self._uinv = [[Fraction(x) for x in row] for row in _mat_inv_fractions(u)] if n else []
        self._all_divisors = [d[i][i] for i in range(n)]
        self._idx = [i for i in range(n) if self._all_divisors[i] != 1]
        self.divisors: tuple[int, ...] = tuple(self._all_divisors[i] for i in self._idx)
        self.order = 1
        for dv in self.divisors:
            self.order *= dv
        if self.order != abs(det):
            raise AssertionError("SNF order mismatch with |det|")

    # -- group structure ---------------------------------------------------

    def elements(self) -> list[Element]:
        elts = [()]
        for d in self.divisors:
            elts = [e + (r,) for e in elts for r in range(d)]
        return elts

    def zero(self) -> Element:
        return (0,) * len(self.divisors)

    def add(self, e1: Element, e2: Element) -> Element:
        return tuple((a + b) % d for a, b, d in zip(e1, e2, self.divisors))

    def neg(self, e: Element) -> Element:
        return tuple((-a) % d for a, d in zip(e, self.divisors))

    def dual_coords(self, e: Element) -> list[Fraction]:
        """Coordinates (in the lattice basis) of a dual-vector representative."""
        n = len(self.gram)
        y = [0] * n
        for t, i in zip(e, self._idx):
            y[i] = t
        w = [sum(self._uinv[i][j] * y[j] for j in range(n)) for i in range(n)]
        return [sum(self._ginv[i][j] * w[j] for j in range(n)) for i in range(n)]

    def coset_of_dual(self, coords: Sequence[Fraction]) -> Element:
        """Coset of a dual vector given by lattice-basis coordinates."""
        n = len(self.gram)
        w = [sum(Fraction(self.gram[i][j]) * coords[j] for j in range(n)) for i in range(n)]
        for x in w:
            if x.denominator != 1:
                raise ValueError("vector not in dual lattice")
        y = [sum(self._u[i][j] * int(w[j]) for j in range(n)) for i in range(n)]
        return tuple(y[i] % self._all_divisors[i] for i in self._idx)

    # -- quadratic form ----------------------------------------------------

    def q_value(self, e: Element) -> Fraction:
        """Q(e) in [0,1)."""
        c = self.dual_coords(e)
        n = len(self.gram)
        val = sum(c[i] * self.gram[i][j] * c[j] for i in range(n) for j in range(n))
        return frac_mod1(Fraction(val, 2))

    def bilinear(self, e1: Element, e2: Element) -> Fraction:
        """(e1, e2) in [0,1)."""
        c1 = self.dual_coords(e1)
        c2 = self.dual_coords(e2)
        n = len(self.gram)
        val = sum(c1[i] * self.gram[i][j] * c2[j] for i in range(n) for j in range(n))
        return frac_mod1(Fraction(val))

    @property
    def q_values(self) -> dict[Element, Fraction]:
        try:
            return self._q_values
        except AttributeError:
            self._q_values = {e: self.q_value(e) for e in self.elements()}
            return self._q_values

    def level(self) -> int:
        lev = 1
        for e in self.elements():
            lev = _lcm(lev, self.q_value(e).denominator)
        return lev

    def dual(self) -> "FqModule":
        """The module of the lattice with negated form (swapped signature)."""
        neg = [[-x for x in row] for row in self.gram]
        b, bm = self.signature_pair
        return FqModule(neg, (bm, b))

    def direct_sum(self, other: "FqModule") -> "FqModule":
        blocks = _block_diag(self.gram, other.gram)
        sig = (self.signature_pair[0] + other.signature_pair[0],
               self.signature_pair[1] + other.signature_pair[1])
        return FqModule(blocks, sig)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "divisors": list(self.divisors),
            "q_values": [[list(e), str(q)] for e, q in sorted(self.q_values.items())],
            "signature": list(self.signature_pair),
        }

    def __eq__(self, other):
        return (isinstance(other, FqModule) and self.gram == other.gram
                and self.signature_pair == other.signature_pair)

    def __hash__(self):
        return hash((tuple(map(tuple, self.gram)), self.signature_pair))

    def __repr__(self):
        return f"FqModule(divisors={self.divisors}, signature={self.signature_pair})"


def _int_det(mat: Sequence[Sequence[int]]) -> int:
    n = len(mat)
    a = [[Fraction(x) for x in row] for row in mat]
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            return 0
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det *= a[col][col]
        inv = 1 / a[col][col]
        for r in range(col + 1, n):
            f = a[r][col] * inv
            if f:
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    assert det.denominator == 1
    return int(det)


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _block_diag(a, b):
    na, nb = len(a), len(b)
    out = [[0] * (na + nb) for _ in range(na + nb)]
    for i in range(na):
        for j in range(na):
            out[i][j] = a[i][j]
    for i in range(nb):
        for j in range(nb):
            out[na + i][na + j] = b[i][j]
    return out


def discriminant_form(gram, signature_pair) -> FqModule:
    """Discriminant group L'/L with its Q/Z-valued form, via Smith normal form."""
    return FqModule(gram, signature_pair)


# -- Weil representation ----------------------------------------------------

def weil_T(fq: FqModule, dual: bool = False) -> dict[Element, Fraction]:
    """Diagonal phase exponents of rho(T): e -> Q(e) mod 1 (or -Q(e) for the dual)."""
    sign = -1 if dual else 1
    return {e: frac_mod1(sign * q) for e, q in fq.q_values.items()}


@dataclass(frozen=True)
class WeilSMatrix:
    """rho(S) with exact entries: entry = rat * sqrt(radicand) * e(phase).

    `rat` = 1/|G|, `radicand` = |G| (so the magnitude is 1/sqrt(|G|)), and
    `phase[i][j] = (b- - b+)/8 - (e_i, e_j)` mod 1.
    """
    elements: tuple[Element, ...]
    rat: Fraction
    radicand: int
    phases: tuple[tuple[Fraction, ...], ...]

    def complex_matrix(self) -> np.ndarray:
        scale = self.rat * math.sqrt(self.radicand)
        n = len(self.elements)
        out = np.empty((n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                out[i, j] = float(scale) * cmath.exp(2j * cmath.pi * float(self.phases[i][j]))
        return out


def weil_S(fq: FqModule, dual: bool = False) -> WeilSMatrix:
    """rho(S) on C[G].  With sqrt(i) = e(1/8):

    rho(S) e_b = (e((b- - b+)/8) / sqrt(|G|)) sum_c e(-(b,c)) e_c.
    """
    bp, bm = fq.signature_pair
    if dual:
        bp, bm = bm, bp
    elts = tuple(fq.elements())
    pref = Fraction(bm - bp, 8)
    sgn = -1 if not dual else 1
    phases = tuple(
        tuple(frac_mod1(pref + sgn * fq.bilinear(ei, ej)) for ej in elts)
        for ei in elts
    )
    return WeilSMatrix(elements=elts, rat=Fraction(1, fq.order),
                       radicand=fq.order, phases=phases)


def weil_T_matrix(fq: FqModule, dual: bool = False) -> np.ndarray:
    elts = fq.elements()
    ph = weil_T(fq, dual=dual)
    return np.diag([cmath.exp(2j * cmath.pi * float(ph[e])) for e in elts])


def milgram_residual(fq: FqModule) -> float:
    """|sum_g e(Q(g)) - sqrt(|G|) e((b+ - b-)/8)|."""
    s = sum(cmath.exp(2j * cmath.pi * float(q)) for q in fq.q_values.values())
    bp, bm = fq.signature_pair
    target = math.sqrt(fq.order) * cmath.exp(2j * cmath.pi * (bp - bm) / 8)
    return abs(s - target)


def relation_residuals(fq: FqModule, dual: bool = False) -> dict[str, float]:
    """Max-norm residuals of unitarity, (ST)^3 = S^2 and the center relation.

    In Mp2(Z) one has S^4 = Z^2 with rho(Z^2) = (-1)^(b+ - b-), so S^4 acts
    as the identity exactly when the signature difference is even (true for
    all the signature (2,2) modules of the main pipeline).
    """
    S = weil_S(fq, dual=dual).complex_matrix()
    T = weil_T_matrix(fq, dual=dual)
    bp, bm = fq.signature_pair
    if dual:
        bp, bm = bm, bp
    eye = np.eye(fq.order)
    st = S @ T
    st3 = st @ st @ st
    s2 = S @ S
    return {
        "unitary": float(np.max(np.abs(S @ S.conj().T - eye))),
        "braid": float(np.max(np.abs(st3 - s2))),
        "s4": float(np.max(np.abs(s2 @ s2 - (-1.0) ** (bp - bm) * eye))),
    }
