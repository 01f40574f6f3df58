"""Weakly holomorphic vector-valued forms of weight 2-k for the dual Weil
representation: ingestion, validation, and construction for odd prime D.

Construction route (D an odd prime): scalar weakly holomorphic forms of
weight 2-k for Gamma_0(D) with character chi_D are built as exact rational
q-expansions (products of Eisenstein series with and without character and
eta-quotients, divided by powers of Delta), the plus-space condition
a(n) = 0 for chi_D(n) = -1 is imposed by exact linear algebra, and the
surviving forms are transferred to vector-valued forms componentwise:

    c(n, beta) = a(D n)   for every exponent n == -Q(beta) mod 1.

Each output must pass the numeric S-transformation gate and is checked for
the component symmetry c(n, beta) = c(n, -beta).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import mpmath as mp

from .fqm import FqModule, frac_mod1
from .lattice import HilbertLattice
from .numeric import CheckResult, EvalConfig, s_transform_residual
from .qseries import QSeries, QuadScalar


# -- exact scalar q-expansions ---------------------------------------------------

class ScalarSeries:
    """Laurent q-expansion with exact rational coefficients, valid below
    `prec` (exclusive)."""

    def __init__(self, coeffs: dict[int, Fraction], prec: int):
        self.prec = prec
        self.coeffs = {n: Fraction(c) for n, c in coeffs.items()
                       if c and n < prec}

    def __getitem__(self, n: int) -> Fraction:
        return self.coeffs.get(n, Fraction(0))

    def floor_exp(self) -> int:
        return min(self.coeffs, default=0)

    def __add__(self, o: "ScalarSeries") -> "ScalarSeries":
        out = dict(self.coeffs)
        for n, c in o.coeffs.items():
            out[n] = out.get(n, Fraction(0)) + c
        return ScalarSeries(out, min(self.prec, o.prec))

    def __sub__(self, o):
        return self + o.scale(-1)

    def scale(self, c) -> "ScalarSeries":
        c = Fraction(c)
        return ScalarSeries({n: c * v for n, v in self.coeffs.items()}, self.prec)

    def __mul__(self, o: "ScalarSeries") -> "ScalarSeries":
        prec = min(self.prec + o.floor_exp(), o.prec + self.floor_exp())
        out: dict[int, Fraction] = {}
        for n1, c1 in self.coeffs.items():
            for n2, c2 in o.coeffs.items():
                n = n1 + n2
                if n < prec:
                    out[n] = out.get(n, Fraction(0)) + c1 * c2
        return ScalarSeries(out, prec)

    def pow(self, e: int) -> "ScalarSeries":
        out = ScalarSeries({0: Fraction(1)}, self.prec - self.floor_exp() + 1)
        for _ in range(e):
            out = out * self
        return out

    def inverse(self) -> "ScalarSeries":
        """Inverse of a series with invertible leading coefficient."""
        v = self.floor_exp()
        lead = self[v]
        if lead == 0:
            raise ValueError("no leading coefficient")
        n_terms = self.prec - v
        inv: dict[int, Fraction] = {-v: 1 / lead}
        for m in range(1, n_terms):
            s = Fraction(0)
            for j in range(1, m + 1):
                cj = self[v + j]
                if cj and (-v + m - j) in inv:
                    s += cj * inv[-v + m - j]
            inv[-v + m] = -s / lead
        return ScalarSeries(inv, n_terms - v)

    def v_shift(self, d: int) -> "ScalarSeries":
        """q -> q^d."""
        return ScalarSeries({n * d: c for n, c in self.coeffs.items()},
                            self.prec * d)


def euler_product(prec: int) -> ScalarSeries:
    """prod (1 - q^n) via the pentagonal number theorem."""
    out = {0: Fraction(1)}
    k = 1
    while True:
        for g in (k * (3 * k - 1) // 2, k * (3 * k + 1) // 2):
            if g < prec:
                out[g] = Fraction((-1) ** k)
        if k * (3 * k - 1) // 2 >= prec:
            break
        k += 1
    return ScalarSeries(out, prec)


def delta_series(prec: int) -> ScalarSeries:
    """Delta = q prod (1-q^n)^24."""
    e = euler_product(prec)
    d = e.pow(24)
    return ScalarSeries({n + 1: c for n, c in d.coeffs.items()}, prec)


def _sigma(n: int, k: int, chi=None, chi_on_quotient=None) -> Fraction:
    total = Fraction(0)
    for d in range(1, n + 1):
        if n % d:
            continue
        term = Fraction(d ** k)
        if chi is not None:
            term *= chi(d)
        if chi_on_quotient is not None:
            term *= chi_on_quotient(n // d)
        total += term
    return total


def bernoulli_numbers(up_to: int) -> list[Fraction]:
    b = [Fraction(1)]
    for m in range(1, up_to + 1):
        s = Fraction(0)
        for j in range(m):
            s += Fraction(math.comb(m + 1, j)) * b[j]
        b.append(-s / (m + 1))
    return b


def generalized_bernoulli(k: int, chi, modulus: int) -> Fraction:
    """B_{k,chi} = N^{k-1} sum_a chi(a) B_k(a/N)."""
    bnums = bernoulli_numbers(k)
    total = Fraction(0)
    for a in range(1, modulus + 1):
        x = Fraction(a, modulus)
        bk_x = sum(Fraction(math.comb(k, j)) * bnums[j] * x ** (k - j)
                   for j in range(k + 1))
        total += chi(a) * bk_x
    return Fraction(modulus) ** (k - 1) * total


def chi_quadratic(d_mod: int):
    """Kronecker character mod an odd prime."""
    def chi(n: int) -> int:
        n %= d_mod
        if n == 0:
            return 0
        return 1 if pow(n, (d_mod - 1) // 2, d_mod) == 1 else -1
    return chi


def eisenstein_level1(k: int, prec: int) -> ScalarSeries:
    bnums = bernoulli_numbers(k)
    factor = Fraction(-2 * k) / bnums[k]
    out = {0: Fraction(1)}
    for n in range(1, prec):
        out[n] = factor * _sigma(n, k - 1)
    return ScalarSeries(out, prec)


def eisenstein_e2_level(p: int, prec: int) -> ScalarSeries:
    """(p E_2(p tau) - E_2(tau))/(p-1): holomorphic weight 2 for Gamma_0(p)."""
    out = {0: Fraction(1)}
    for n in range(1, prec):
        v = -24 * _sigma(n, 1)
        vp = -24 * _sigma(n // p, 1) if n % p == 0 else Fraction(0)
        out[n] = (p * vp - v) / (p - 1)
    return ScalarSeries(out, prec)


def eisenstein_char(k: int, d_mod: int, prec: int, kind: str) -> ScalarSeries:
    """Character Eisenstein series in M_k(Gamma_0(D), chi_D):

    kind "1chi":  L(1-k, chi)/2 + sum sigma_{k-1}^{chi}(n) q^n, rescaled to
                  constant term 1;
    kind "chi1":  sum (sum_{d|n} chi(n/d) d^{k-1}) q^n.
    """
    chi = chi_quadratic(d_mod)
    if kind == "1chi":
        lval = -generalized_bernoulli(k, chi, d_mod) / k
        out = {0: Fraction(1)}
        for n in range(1, prec):
            out[n] = 2 * _sigma(n, k - 1, chi=chi) / lval
        return ScalarSeries(out, prec)
    if kind == "chi1":
        out = {}
        for n in range(1, prec):
            out[n] = _sigma(n, k - 1, chi_on_quotient=chi)
        return ScalarSeries(out, prec)
    raise ValueError(kind)


def eta_quotient_weight4(p: int, prec: int) -> ScalarSeries:
    """(eta(tau) eta(p tau))^4 for p = 5: the weight-4 newform of level 5."""
    e1 = euler_product(prec)
    ep = euler_product(prec // p + 2).v_shift(p)
    prod = (e1 * ep).pow(4)
    return ScalarSeries({n + 1: c for n, c in prod.coeffs.items()}, prec)


# -- weak forms --------------------------------------------------------------------

@dataclass
class WeakForm:
    series: QSeries
    meta: dict = field(default_factory=dict)

    @property
    def principal_part(self) -> dict:
        return self.series.principal_part()

    def to_json(self) -> dict:
        out = self.series.to_json()
        out["meta"] = self.meta
        return out


def validate_weak_form(series: QSeries, cfg: EvalConfig | None = None,
                       tolerance: float = 1e-6) -> list[CheckResult]:
    """Grading (already enforced), component symmetry, and the numeric
    S-transformation residual with truncation budget."""
    checks = []
    for (b, n), c in series.coeffs.items():
        cneg = series.coefficient(series.fq.neg(b), n)
        if cneg.rat != c.rat or cneg.rad != c.rad:
            raise ValueError(f"component symmetry violated at {b}, {n}")
    cfg = cfg or EvalConfig()
    # off-circle but near |tau| = 1, so both frames keep v close to 1 and the
    # truncation budget stays far below the tolerance
    for i, tau in enumerate((mp.mpc(0.07, 1.0), mp.mpc(-0.13, 0.97))):
        checks.append(s_transform_residual(series, tau, cfg,
                                           name=f"weakform-S@{i}",
                                           tolerance=tolerance))
    return checks


def load_weak_form(path, cfg: EvalConfig | None = None) -> WeakForm:
    with open(path) as fh:
        data = json.load(fh)
    fq = FqModule.__new__(FqModule)  # placeholder; rebuilt below
    gram = data.get("gram")
    if gram is None:
        raise ValueError("weak form file must carry the lattice gram matrix")
    fq = FqModule(gram, tuple(data.get("signature", (2, 2))))
    coeffs = {}
    for b, n, c in data["coeffs"]:
        coeffs[(tuple(b), Fraction(n))] = QuadScalar.of(Fraction(c))
    series = QSeries(fq, bool(data["dual"]), Fraction(data["weight"]),
                     coeffs, Fraction(data["ceiling"]))
    if series.weight > -2:
        raise ValueError("weak form weight must be <= -2 (k >= 4)")
    checks = validate_weak_form(series, cfg)
    bad = [c for c in checks if not c.passed]
    if bad:
        raise ValueError("weak form rejected: " + "; ".join(
            f"{c.name} residual {c.residual:.3g} (trunc {c.truncation_bound:.3g})"
            for c in bad))
    return WeakForm(series, meta={"source": str(path)})


def _trivial_char_candidates(weight: int, prec: int) -> list[ScalarSeries]:
    """Products of generators of the trivial-character graded ring of
    Gamma_0(5) in the given weight."""
    gens = [("e2", 2, eisenstein_e2_level(5, prec)),
            ("e4", 4, eisenstein_level1(4, prec)),
            ("e4_5", 4, eisenstein_level1(4, prec // 5 + 2).v_shift(5)),
            ("eta4", 4, eta_quotient_weight4(5, prec)),
            ("e6", 6, eisenstein_level1(6, prec)),
            ("e6_5", 6, eisenstein_level1(6, prec // 5 + 2).v_shift(5))]
    out = []

    def rec(i, w_left, acc):
        if w_left == 0:
            out.append(acc)
            return
        if i >= len(gens):
            return
        name, w, series = gens[i]
        # include 0..w_left//w powers of this generator
        power = acc
        rec(i + 1, w_left, acc)
        e = 1
        while w * e <= w_left:
            power = power * series
            rec(i + 1, w_left - w * e, power)
            e += 1

    one = ScalarSeries({0: Fraction(1)}, prec)
    rec(0, weight, one)
    return out


def scalar_plus_basis(d: int, k: int, scalar_pole: int, prec: int):
    """Scalar weakly holomorphic plus-space forms of weight 2-k for
    Gamma_0(D), chi_D with pole order <= scalar_pole at infinity.

    Spanning set: (character Eisenstein) x (trivial-character forms) of
    total weight 2-k+12*scalar_pole, divided by Delta^scalar_pole; exact
    row reduction; plus-condition imposed on all exponents up to the
    certification bound.
    """
    if d % 2 == 0 or d < 3:
        raise ValueError("constructor requires an odd prime discriminant")
    # primality
    for f in range(2, d):
        if d % f == 0:
            raise ValueError("constructor requires an odd prime discriminant")
    w_num = (2 - k) + 12 * scalar_pole
    if w_num < 4:
        raise ValueError("pole order too small for this weight")
    chi = chi_quadratic(d)
    cand: list[ScalarSeries] = []
    for w_char in range(2, w_num + 1, 2):
        kinds = ["1chi", "chi1"]
        for kind in kinds:
            try:
                echar = eisenstein_char(w_char, d, prec + scalar_pole + 1, kind)
            except ZeroDivisionError:
                continue
            if not echar.coeffs:
                continue
            for triv in _trivial_char_candidates(w_num - w_char,
                                                 prec + scalar_pole + 1):
                cand.append(echar * triv)
    delta_inv = delta_series(prec + scalar_pole + 1).inverse()
    dpow = ScalarSeries({0: Fraction(1)}, prec + scalar_pole + 1)
    for _ in range(scalar_pole):
        dpow = dpow * delta_inv
    cand = [c * dpow for c in cand]
    # exact linear algebra: rows = candidate coefficient vectors
    bound = 60 * scalar_pole + 40
    bound = min(bound, min(c.prec for c in cand) - 1)
    exps = list(range(-scalar_pole, bound + 1))
    rows = [[c[n] for n in exps] for c in cand]
    # impose the plus condition: kernel of the evaluation at chi(n) = -1 slots
    minus_idx = [i for i, n in enumerate(exps) if chi(n) == -1]
    basis = _nullspace_combination(rows, minus_idx)
    out = []
    for comb in basis:
        series = None
        for coef, candidate in zip(comb, cand):
            if coef == 0:
                continue
            term = candidate.scale(coef)
            series = term if series is None else series + term
        if series is None:
            continue
        if any(series[n] for n in exps if chi(n) == -1):
            raise AssertionError("plus condition violated after reduction")
        if any(series.coeffs.values()):
            out.append(series)
    return _echelonize(out, scalar_pole)


def _nullspace_combination(rows, minus_idx):
    """Coefficient combinations of the candidates that kill the chi = -1
    slots: exact kernel of the (candidates x minus-slots) matrix."""
    ncand = len(rows)
    mat = [[rows[i][j] for j in minus_idx] for i in range(ncand)]
    # kernel over Q of mat^T x = 0 in the candidate-combination space:
    # row reduce the transpose system
    m = len(minus_idx)
    aug = [[mat[i][j] for i in range(ncand)] for j in range(m)]
    pivots = []
    r = 0
    for c in range(ncand):
        piv = next((i for i in range(r, m) if aug[i][c] != 0), None)
        if piv is None:
            continue
        aug[r], aug[piv] = aug[piv], aug[r]
        pv = aug[r][c]
        aug[r] = [x / pv for x in aug[r]]
        for i in range(m):
            if i != r and aug[i][c] != 0:
                f = aug[i][c]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[r])]
        pivots.append(c)
        r += 1
        if r == m:
            break
    free = [c for c in range(ncand) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * ncand
        vec[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            vec[pc] = -aug[i][fc]
        basis.append(vec)
    return basis


def _echelonize(series_list, scalar_pole):
    """Reduce to echelon form by leading exponent, dedupe, sort by pole."""
    series_list = [s for s in series_list if s.coeffs]
    series_list.sort(key=lambda s: s.floor_exp())
    echelon: list[ScalarSeries] = []
    for s in series_list:
        for e in echelon:
            le = e.floor_exp()
            if s[le]:
                s = s - e.scale(s[le] / e[le])
        if s.coeffs:
            lead = s[s.floor_exp()]
            echelon.append(s.scale(1 / lead))
    echelon.sort(key=lambda s: s.floor_exp())
    return echelon


def vv_from_plus(scalar: ScalarSeries, lat: HilbertLattice, weight: Fraction,
                 ceiling: Fraction, cfg: EvalConfig | None = None,
                 validate: bool = True) -> WeakForm:
    """Transfer a scalar plus-space form to the dual Weil representation:
    c(n, beta) = a(D n) on the grading classes of each coset."""
    d = lat.d
    fq = lat.fq
    coeffs = {}
    floor_n = Fraction(scalar.floor_exp(), d)
    for e in fq.elements():
        q = fq.q_value(e)
        base = frac_mod1(-q)   # dual grading: exponents == -Q(e) mod 1
        # a(m) collects the contributions of both +-beta, so the generic
        # components carry half the scalar coefficient
        half = Fraction(1, 1 if e == fq.neg(e) else 2)
        n = base + math.ceil(floor_n - base)
        while n <= ceiling:
            m = d * n
            if m.denominator == 1:
                a = scalar[int(m)]
                if a:
                    coeffs[(e, n)] = QuadScalar.of(a * half)
            n += 1
    series = QSeries(fq, True, weight, coeffs, ceiling)
    wf = WeakForm(series, meta={"construction": f"plus-space transfer D={d}"})
    if validate:
        checks = validate_weak_form(series, cfg)
        bad = [c for c in checks if not c.passed]
        if bad:
            raise ValueError("vv transfer rejected by the modularity gate: "
                             + "; ".join(f"{c.name}: {c.residual:.3g}" for c in bad))
    return wf


def plus_space_basis(d: int, k: int, max_pole: Fraction, ceiling: Fraction,
                     cfg: EvalConfig | None = None) -> list[WeakForm]:
    """Weakly holomorphic vector-valued forms of weight 2-k for the dual
    representation, with principal-part exponents down to -max_pole."""
    max_pole = Fraction(max_pole)
    ceiling = Fraction(ceiling)
    if k % 2 or k < 4:
        raise ValueError("k must be even and >= 4")
    scalar_pole = max(1, math.ceil(max_pole * d))
    prec = int(d * ceiling) + scalar_pole + 12
    lat = HilbertLattice(d)
    scalars = scalar_plus_basis(d, k, scalar_pole, prec)
    if not scalars:
        raise ValueError(f"spanning set insufficient: no plus forms of "
                         f"weight {2 - k} with pole <= {scalar_pole}")
    out = []
    for s in scalars:
        if Fraction(-s.floor_exp(), d) > max_pole:
            continue
        wf = vv_from_plus(s, lat, Fraction(2 - k), ceiling, cfg)
        if not wf.series.is_zero():
            out.append(wf)
    if not out:
        achieved = min(Fraction(-s.floor_exp(), d) for s in scalars)
        raise ValueError(f"no basis element within max_pole; achieved pole "
                         f"{achieved}")
    return out
