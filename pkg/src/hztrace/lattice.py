"""The rank-4 even lattice attached to a real quadratic ring of integers.

Vectors are 2x2 matrices X = [[a, nu'], [nu, b]] with a, b in Z and nu in
O_F, carrying the quadratic form Q(X) = -det(X) and bilinear form
(X, Y) = -tr(X Y*).  In the fixed basis

    B1 = [[1,0],[0,0]],  B2 = [[0,0],[0,1]],  B3 = [[0,1],[1,0]],
    B4 = [[0,w'],[w,0]]  with  w = (D + sqrt D)/2,

the Gram matrix is [[0,-1],[-1,0]] + [[2, D],[D, (D^2-D)/2]] in blocks.
SL2(O_F) acts by gamma.X = gamma X gamma'^t; this module provides the
action, fixed-norm vector enumeration, partial orbit reduction, the
orthogonal splitting P = L cap (QX)^perp, N = L cap QX for Q(X) < 0,
isotropic lines of P with certified cusp widths (via Eichler
transformations), and the two cycle polynomials q_Z, p_Z.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .fqm import FqModule, frac_mod1, smith_normal_form, _mat_inv_fractions
from .quadfield import Mat2, QuadElt, is_fundamental_discriminant, omega

Vec = tuple[Fraction, Fraction, Fraction, Fraction]


def gram_matrix(d: int) -> list[list[int]]:
    n_omega = (d * d - d) // 4
    return [[0, -1, 0, 0],
            [-1, 0, 0, 0],
            [0, 0, 2, d],
            [0, 0, d, 2 * n_omega]]


class HilbertLattice:
    """Even lattice of signature (2,2) from O_F, F = Q(sqrt D)."""

    def __init__(self, d: int):
        if not is_fundamental_discriminant(d):
            raise ValueError(f"{d} is not a fundamental discriminant")
        self.d = d
        self.gram = gram_matrix(d)
        self.gram_np = np.array(self.gram, dtype=np.int64)
        self.fq = FqModule(self.gram, (2, 2))
        self._ginv = _mat_inv_fractions(self.gram)

    # -- vectors as field matrices ------------------------------------------

    def to_matrix(self, coords: Sequence[Fraction]) -> Mat2:
        """[[a, nu'],[nu, b]] for coordinates (a, b, x, y), nu = x + y w."""
        a, b, x, y = (Fraction(c) for c in coords)
        nu = QuadElt(self.d, x, y)
        return Mat2(QuadElt(self.d, a, Fraction(0)), nu.conj(),
                    nu, QuadElt(self.d, b, Fraction(0)))

    def from_matrix(self, m: Mat2) -> Vec:
        if m.a.y != 0 or m.e.y != 0:
            raise ValueError("matrix not of lattice shape")
        nu = m.c
        if (m.b - nu.conj()).x != 0 or (m.b - nu.conj()).y != 0:
            raise ValueError("matrix not of lattice shape")
        return (m.a.x, m.e.x, nu.x, nu.y)

    def bilinear(self, u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
        return sum(Fraction(u[i]) * self.gram[i][j] * Fraction(v[j])
                   for i in range(4) for j in range(4))

    def norm(self, u: Sequence[Fraction]) -> Fraction:
        return self.bilinear(u, u) / 2

    def in_dual(self, u: Sequence[Fraction]) -> bool:
        w = [sum(Fraction(self.gram[i][j]) * Fraction(u[j]) for j in range(4))
             for i in range(4)]
        return all(x.denominator == 1 for x in w)

    def coset(self, u: Sequence[Fraction]):
        return self.fq.coset_of_dual([Fraction(c) for c in u])

    # -- group action --------------------------------------------------------

    def action_matrix(self, g: Mat2) -> np.ndarray:
        """4x4 matrix of X -> g X g'^t on lattice coordinates (exact, integer
        for g in SL2(O_F))."""
        gt = g.conj().transpose()
        cols = []
        for i in range(4):
            e = [Fraction(0)] * 4
            e[i] = Fraction(1)
            img = (g @ self.to_matrix(e)) @ gt
            cols.append(self.from_matrix(img))
        mat = [[cols[j][i] for j in range(4)] for i in range(4)]
        return _frac_matrix_to_np(mat)

    def generators(self) -> list[Mat2]:
        """S and the translations T_1, T_w of SL2(O_F)."""
        d = self.d
        one, zero = QuadElt.of(d, 1), QuadElt.of(d, 0)
        s = Mat2(zero, -one, one, zero)
        t1 = Mat2(one, one, zero, one)
        tw = Mat2(one, omega(d), zero, one)
        return [s, t1, tw]

    def action_generators(self) -> list[np.ndarray]:
        gens = []
        for g in self.generators():
            m = self.action_matrix(g)
            gens.append(m)
            gens.append(np.rint(np.linalg.inv(m)).astype(np.int64))
        return gens

    def random_element(self, rng, length: int = 6) -> Mat2:
        """Random short word in the generators (and inverses)."""
        gens = self.generators()
        gens = gens + [g.inverse() for g in gens]
        g = Mat2.identity(self.d)
        for _ in range(length):
            g = g @ gens[rng.randrange(len(gens))]
        return g


def build_lattice(d: int) -> HilbertLattice:
    return HilbertLattice(d)


def _frac_matrix_to_np(mat) -> np.ndarray:
    out = np.empty((len(mat), len(mat[0])), dtype=np.int64)
    for i, row in enumerate(mat):
        for j, x in enumerate(row):
            fx = Fraction(x)
            if fx.denominator != 1:
                raise ValueError("non-integral action matrix")
            out[i, j] = int(fx)
    return out


@dataclass(frozen=True)
class LatticeVector:
    lattice: HilbertLattice
    coords: Vec

    @staticmethod
    def of(lat: HilbertLattice, coords) -> "LatticeVector":
        c = tuple(Fraction(x) for x in coords)
        if not lat.in_dual(c):
            raise ValueError("coordinates not in the dual lattice")
        return LatticeVector(lat, c)

    @property
    def norm(self) -> Fraction:
        return self.lattice.norm(self.coords)

    @property
    def coset(self):
        return self.lattice.coset(self.coords)

    def neg(self) -> "LatticeVector":
        return LatticeVector(self.lattice, tuple(-c for c in self.coords))

    def to_json(self):
        return {"coords": [str(c) for c in self.coords],
                "coset": list(self.coset)}


# -- cycle polynomials --------------------------------------------------------

def qz(lat: HilbertLattice, coords: Sequence[Fraction], z1, z2):
    """q_Z(X) = -b z1 z2 + nu z1 + nu' z2 - a (first embedding with z1)."""
    a, b, x, y = (Fraction(c) for c in coords)
    nu = QuadElt(lat.d, x, y)
    n1, n2 = nu.embed(0), nu.embed(1)
    return -float(b) * z1 * z2 + n1 * z1 + n2 * z2 - float(a)


def pz(lat: HilbertLattice, coords: Sequence[Fraction], z1, z2):
    """p_Z(X) = (1/y1) (-b conj(z1) z2 + nu conj(z1) + nu' z2 - a)."""
    a, b, x, y = (Fraction(c) for c in coords)
    nu = QuadElt(lat.d, x, y)
    n1, n2 = nu.embed(0), nu.embed(1)
    z1c = z1.conjugate()
    return (-float(b) * z1c * z2 + n1 * z1c + n2 * z2 - float(a)) / z1.imag


# -- enumeration ---------------------------------------------------------------

def enumerate_vectors(lat: HilbertLattice, coset, q, height) -> list[LatticeVector]:
    """All X in L + coset with Q(X) = q and max |coordinate| <= height.

    Brute-force box enumeration (the reduction theory never needs more at
    desk scale); deterministic lexicographic order.
    """
    q = Fraction(q)
    if frac_mod1(q - lat.fq.q_value(tuple(coset))) != 0:
        raise ValueError("incompatible coset")
    offset = [frac_mod1(c) for c in lat.fq.dual_coords(tuple(coset))]
    den = 1
    for c in offset:
        den = den * c.denominator // math.gcd(den, c.denominator)
    # work with integer vectors w = den * x
    axes = []
    for i in range(4):
        off = offset[i]
        lo = math.ceil(-height - off)
        hi = math.floor(height - off)
        axes.append(np.array([int(off * den) + den * n for n in range(lo, hi + 1)],
                             dtype=np.int64))
    target2 = 2 * q * den * den
    if target2.denominator != 1:
        return []
    target2 = int(target2)
    g = lat.gram_np
    w1, w2, w3, w4 = np.meshgrid(*axes, indexing="ij", sparse=True)
    # Q-scaled: w^T G w = -2 w1 w2 + 2 w3^2 + 2 D w3 w4 + 2 N(omega) w4^2
    d = lat.d
    n_omega = (d * d - d) // 4
    val = (-2 * w1 * w2 + 2 * w3 * w3 + 2 * d * w3 * w4
           + 2 * n_omega * w4 * w4)
    mask = val == target2
    idx = np.argwhere(mask)
    out = []
    for i1, i2, i3, i4 in idx:
        w = (axes[0][i1], axes[1][i2], axes[2][i3], axes[3][i4])
        coords = tuple(Fraction(int(x), den) for x in w)
        out.append(LatticeVector(lat, coords))
    out.sort(key=lambda v: v.coords)
    return out


# -- orbit reduction -----------------------------------------------------------

@dataclass
class OrbitReport:
    representatives: list[LatticeVector]
    classes: list[list[LatticeVector]]
    undecided_pairs: list[tuple[LatticeVector, LatticeVector]]
    height_cap: int

    @property
    def decided(self) -> bool:
        return not self.undecided_pairs


def _content(lat: HilbertLattice, coords) -> Fraction:
    """gcd of the pairings with the lattice basis; an exact orbit invariant."""
    vals = [lat.bilinear(coords, [int(i == j) for j in range(4)]) for i in range(4)]
    num = 0
    den = 1
    for v in vals:
        num = math.gcd(num, abs(v.numerator) * (den // math.gcd(den, v.denominator)))
        den = den * v.denominator // math.gcd(den, v.denominator)
    return Fraction(num, den)


def orbit_classes(vectors: Sequence[LatticeVector], lat: HilbertLattice,
                  reduction_cap: int = 12, max_states: int = 200000) -> OrbitReport:
    """Partition the input under <S, T_1, T_w> acting by gamma X gamma'^t.

    BFS through images of bounded height; inputs whose exploration balls
    meet are merged.  Unmerged pairs whose exact invariants agree are
    reported as undecided, never silently merged.
    """
    if not vectors:
        return OrbitReport([], [], [], reduction_cap)
    norms = {v.norm for v in vectors}
    cosets = {v.coset for v in vectors}
    if len(norms) > 1 or len(cosets) > 1:
        raise ValueError("orbit reduction needs a single norm and coset")
    gens = lat.action_generators()
    den = 1
    for v in vectors:
        for c in v.coords:
            den = den * c.denominator // math.gcd(den, c.denominator)
    start = [tuple(int(c * den) for c in v.coords) for v in vectors]
    cap = reduction_cap * den

    parent = list(range(len(vectors)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    owner: dict[tuple, int] = {}
    frontier: list[tuple] = []
    for i, w in enumerate(start):
        if w in owner:
            union(i, owner[w])
        else:
            owner[w] = i
            frontier.append(w)
    states = len(owner)
    while frontier and states < max_states:
        new_frontier = []
        for w in frontier:
            src = owner[w]
            wv = np.array(w, dtype=np.int64)
            for g in gens:
                img = tuple(int(x) for x in (g @ wv))
                if max(abs(x) for x in img) > cap:
                    continue
                if img in owner:
                    union(src, owner[img])
                else:
                    owner[img] = find(src)
                    new_frontier.append(img)
                    states += 1
        frontier = new_frontier

    classes: dict[int, list[LatticeVector]] = {}
    for i, v in enumerate(vectors):
        classes.setdefault(find(i), []).append(v)
    cls = [sorted(c, key=lambda v: (max(abs(x) for x in v.coords), v.coords))
           for c in classes.values()]
    cls.sort(key=lambda c: c[0].coords)
    reps = [c[0] for c in cls]
    undecided = []
    for a, b in itertools.combinations(reps, 2):
        if _content(lat, a.coords) == _content(lat, b.coords):
            inva = _split_invariants(lat, a)
            invb = _split_invariants(lat, b)
            if inva == invb:
                undecided.append((a, b))
    return OrbitReport(reps, cls, undecided, reduction_cap)


def _split_invariants(lat, v: LatticeVector):
    """Cheap exact invariants distinguishing orbits: Smith form of the
    orthogonal-splitting Gram matrices (only for negative norm)."""
    if v.norm >= 0:
        return None
    sp = split_sublattices(lat, v)
    _u, dp, _w = smith_normal_form(sp.p_gram)
    return (tuple(dp[i][i] for i in range(3)), sp.m)


def intersects_cycle(lat: HilbertLattice, x: LatticeVector, y: LatticeVector) -> bool:
    """T_X and C_Y intersect iff (X, Y) = 0 (for Q(X) < 0 < Q(Y))."""
    if not (x.norm < 0 < y.norm):
        raise ValueError("need Q(X) < 0 < Q(Y)")
    return lat.bilinear(x.coords, y.coords) == 0


# -- orthogonal splitting -------------------------------------------------------

@dataclass
class SublatticeSplit:
    lattice: HilbertLattice
    x: LatticeVector
    p_basis: list[list[int]]       # columns: basis of P in L-coordinates
    p_gram: list[list[int]]
    eta: tuple[int, int, int, int]  # primitive generator of N, positively
                                    # proportional to X
    m: int                          # Q(eta) = -M
    index: int                      # [L : P + N]

    @property
    def n_gram(self):
        return [[-2 * self.m]]

    def p_fq(self) -> FqModule:
        return FqModule(self.p_gram, (2, 1))

    def n_fq(self) -> FqModule:
        return FqModule(self.n_gram, (0, 1))

    def pn_basis(self) -> list[list[int]]:
        """4x4 basis of P + N (columns: P-basis then eta)."""
        return [[self.p_basis[i][j] for j in range(3)] + [self.eta[i]]
                for i in range(4)]

    def p_coords_to_l(self, v: Sequence[Fraction]) -> Vec:
        return tuple(sum(Fraction(self.p_basis[i][j]) * Fraction(v[j])
                         for j in range(3)) for i in range(4))


def _primitive_integer_vector(coords: Sequence[Fraction]) -> tuple[int, ...]:
    den = 1
    for c in coords:
        den = den * c.denominator // math.gcd(den, c.denominator)
    w = [int(c * den) for c in coords]
    g = 0
    for x in w:
        g = math.gcd(g, abs(x))
    return tuple(x // g for x in w)


def _kernel_basis(rows: list[list[int]]) -> list[list[int]]:
    """Basis of the (saturated) integer kernel of the given integer matrix,
    as columns of a (ncols x k) list-of-rows matrix."""
    n = len(rows[0])
    u, dmat, v = smith_normal_form(rows)
    rank = sum(1 for i in range(min(len(rows), n)) if dmat[i][i] != 0)
    # kernel = V columns rank..n-1
    cols = []
    for j in range(rank, n):
        cols.append([v[i][j] for i in range(n)])
    # rows of output: coordinate index; columns: basis vectors
    return [[cols[k][i] for k in range(len(cols))] for i in range(n)]


def split_sublattices(lat: HilbertLattice, x: LatticeVector) -> SublatticeSplit:
    """P = L cap (QX)^perp and N = L cap QX for Q(X) < 0."""
    if x.norm >= 0:
        raise ValueError("need Q(X) < 0")
    eta = _primitive_integer_vector(x.coords)
    # orient eta along X
    for e, c in zip(eta, x.coords):
        if c != 0:
            if (c > 0) != (e > 0):
                eta = tuple(-t for t in eta)
            break
    qeta = lat.norm(eta)
    assert qeta < 0 and qeta.denominator == 1
    m = int(-qeta)
    # linear form y -> (y, eta), integer on L
    row = [int(lat.bilinear([int(i == j) for j in range(4)], eta)) for i in range(4)]
    pb = _kernel_basis([row])
    assert len(pb[0]) == 3
    p_gram = [[int(sum(pb[i][a] * lat.gram[i][j] * pb[j][b]
                       for i in range(4) for j in range(4)))
               for b in range(3)] for a in range(3)]
    eigs = np.linalg.eigvalsh(np.array(p_gram, dtype=float))
    if not (np.sum(eigs > 0) == 2 and np.sum(eigs < 0) == 1):
        raise AssertionError("P does not have signature (2,1)")
    full = [[pb[i][j] for j in range(3)] + [eta[i]] for i in range(4)]
    det_full = _det4(full)
    index = abs(det_full)
    det_p = _det3(p_gram)
    # |det P| * |det N| = |det L| * index^2
    assert abs(det_p) * 2 * m == lat.d * index * index
    return SublatticeSplit(lat, x, pb, p_gram, eta, m, index)


def _det3(m):
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def _det4(m):
    total = 0
    for j in range(4):
        minor = [[m[i][k] for k in range(4) if k != j] for i in range(1, 4)]
        total += (-1) ** j * m[0][j] * _det3(minor)
    return total


# -- ternary isotropy (Hasse-Minkowski) ----------------------------------------

def _hilbert_symbol(a: int, b: int, p: int) -> int:
    """Hilbert symbol (a, b)_p for a, b nonzero integers, p prime or 0 (= R)."""
    if p == 0:
        return -1 if (a < 0 and b < 0) else 1

    def split(n):
        v = 0
        while n % p == 0:
            n //= p
            v += 1
        return v, n

    alpha, u = split(a)
    beta, v = split(b)
    if p == 2:
        def eps(n):
            return ((n - 1) // 2) % 2

        def om(n):
            return ((n * n - 1) // 8) % 2

        s = eps(u) * eps(v) + alpha * om(v) + beta * om(u)
        return -1 if s % 2 else 1
    # odd p
    s = alpha * beta * (((p - 1) // 2) % 2)
    leg = 1
    if beta % 2:
        leg *= _legendre(u, p)
    if alpha % 2:
        leg *= _legendre(v, p)
    return leg * (-1 if s % 2 else 1)


def _legendre(a: int, p: int) -> int:
    a %= p
    if a == 0:
        return 0
    r = pow(a, (p - 1) // 2, p)
    return 1 if r == 1 else -1


def _prime_factors(n: int) -> list[int]:
    n = abs(n)
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


def _diagonalize_form(gram) -> list[int]:
    """Orthogonal diagonalization over Q; returns squarefree integer entries
    representing the form up to squares."""
    n = len(gram)

    def bil(u, v):
        return sum(u[i] * Fraction(gram[i][j]) * v[j] for i in range(n) for j in range(n))

    diag = []
    remaining = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    while remaining:
        # find vector of nonzero norm, fixing isotropic leads if needed
        piv = next((v for v in remaining if bil(v, v) != 0), None)
        if piv is None:
            v0 = remaining[0]
            other = next((w for w in remaining[1:] if bil(v0, w) != 0), None)
            if other is None:
                break  # degenerate tail
            piv = [x + y for x, y in zip(v0, other)]
            if bil(piv, piv) == 0:
                piv = [x - y for x, y in zip(v0, other)]
        q = bil(piv, piv)
        diag.append(q)
        new_rem = []
        for w in remaining:
            coef = bil(piv, w) / q
            nw = [x - coef * y for x, y in zip(w, piv)]
            if any(c != 0 for c in nw):
                new_rem.append(nw)
        # drop dependent vectors: keep a maximal independent subset lazily
        remaining = _independent(new_rem)
    out = []
    for q in diag:
        r = q.numerator * q.denominator
        s = 1
        dd = 2
        r0 = abs(r)
        while dd * dd <= r0:
            while r0 % (dd * dd) == 0:
                r0 //= dd * dd
            dd += 1
        out.append(r0 if r > 0 else -r0)
    return out


def _independent(vecs):
    if not vecs:
        return []
    out = []
    mat = []
    for v in vecs:
        cand = mat + [[Fraction(x) for x in v]]
        if _rank(cand) > len(mat):
            mat = cand
            out.append(v)
    return out


def _rank(rows):
    rows = [r[:] for r in rows]
    rank = 0
    ncols = len(rows[0])
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        pv = rows[r][c]
        rows[r] = [x / pv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        r += 1
        rank += 1
    return rank


def ternary_is_isotropic(gram) -> bool:
    """Hasse-Minkowski decision for a nondegenerate ternary integral form."""
    d = _diagonalize_form(gram)
    if len(d) != 3:
        raise ValueError("form is degenerate")
    signs = [1 if x > 0 else -1 for x in d]
    if abs(sum(signs)) == 3:
        return False  # definite
    det = d[0] * d[1] * d[2]
    primes = set(_prime_factors(2 * det))
    for p in primes:
        eps = (_hilbert_symbol(d[0], d[1], p)
               * _hilbert_symbol(d[0], d[2], p)
               * _hilbert_symbol(d[1], d[2], p))
        if eps != _hilbert_symbol(-1, -det, p):
            return False
    return True


# -- isotropic lines and widths --------------------------------------------------

@dataclass
class IsotropicLineData:
    split: SublatticeSplit
    ell: tuple[int, int, int]          # P-coordinates, primitive
    ell_prime: tuple[Fraction, ...]    # P-coordinates in P', isotropic, (l,l')=1
    kappa: tuple[int, int, int]        # primitive generator of K_ell, oriented
    n_ell: int                          # K_ell Gram = [2 n_ell]
    width_rat: Fraction                 # alpha_ell = width_rat * sqrt(n_ell)
    width_matrix: np.ndarray            # Eichler certificate, 4x4 on L
    width_complete: bool

    def k_fq(self) -> FqModule:
        return FqModule([[2 * self.n_ell]], (1, 0))

    def to_json(self):
        return {
            "ell": list(self.ell),
            "ell_prime": [str(c) for c in self.ell_prime],
            "kappa": list(self.kappa),
            "n_ell": self.n_ell,
            "width": [str(self.width_rat), self.n_ell],
            "width_complete": self.width_complete,
        }


@dataclass
class IsotropicLinesReport:
    lines: list[IsotropicLineData]
    anisotropic: bool
    converged: bool
    height_bound: int


def _pgram_bilinear(p_gram, u, v):
    return sum(Fraction(u[i]) * p_gram[i][j] * Fraction(v[j])
               for i in range(3) for j in range(3))


def _find_isotropic_vectors(p_gram, bound) -> list[tuple[int, int, int]]:
    g = np.array(p_gram, dtype=np.int64)
    rng = np.arange(-bound, bound + 1, dtype=np.int64)
    v1, v2, v3 = np.meshgrid(rng, rng, rng, indexing="ij")
    pts = np.stack([v1.ravel(), v2.ravel(), v3.ravel()], axis=1)
    vals = np.einsum("ni,ij,nj->n", pts, g, pts)
    cand = pts[vals == 0]
    out = set()
    for v in cand:
        v = tuple(int(x) for x in v)
        if v == (0, 0, 0):
            continue
        gg = math.gcd(math.gcd(abs(v[0]), abs(v[1])), abs(v[2]))
        v = tuple(x // gg for x in v)
        out.add(_line_canonical(v))
    return sorted(out, key=lambda v: (max(abs(x) for x in v), v))


def _line_canonical(v):
    for x in v:
        if x != 0:
            return v if x > 0 else tuple(-t for t in v)
    return v


def eichler_matrix(lat: HilbertLattice, u4: Sequence[Fraction],
                   v4: Sequence[Fraction]) -> np.ndarray | None:
    """Matrix of the Eichler transformation E(u, v):
    y -> y + (y,u) v - (y,v) u - Q(v) (y,u) u, for isotropic u with (u,v)=0.

    Returns the 4x4 matrix on L-coordinates if it is integral and acts
    trivially on the discriminant group, else None.
    """
    qv = lat.norm(v4)
    cols = []
    for i in range(4):
        e = [Fraction(int(i == j)) for j in range(4)]
        yu = lat.bilinear(e, u4)
        yv = lat.bilinear(e, v4)
        img = [e[k] + yu * Fraction(v4[k]) - yv * Fraction(u4[k])
               - qv * yu * Fraction(u4[k]) for k in range(4)]
        cols.append(img)
    mat = [[cols[j][i] for j in range(4)] for i in range(4)]
    for row in mat:
        for x in row:
            if Fraction(x).denominator != 1:
                return None
    m = np.array([[int(x) for x in row] for row in mat], dtype=np.int64)
    # gram preservation (sanity, exact)
    g = lat.gram_np
    if not (m.T @ g @ m == g).all():
        return None
    # trivial action on L'/L
    for e in lat.fq.elements():
        c = lat.fq.dual_coords(e)
        img = [sum(Fraction(int(m[i, j])) * c[j] for j in range(4)) for i in range(4)]
        diff = [a - b for a, b in zip(img, c)]
        if any(x.denominator != 1 for x in diff):
            return None
    return m


def isotropic_lines(split: SublatticeSplit, height_bound: int = 8,
                    group_cap: int = 6) -> IsotropicLinesReport:
    """Isotropic lines of P up to the partial stabilizer action, with
    certified cusp widths.

    Isotropy of P is decided by Hasse-Minkowski; representatives are found
    by bounded search, grouped under words in the discovered Eichler
    transformations, and the grouping is flagged converged only if doubling
    the height bound does not change the orbit classes.
    """
    if not ternary_is_isotropic(split.p_gram):
        return IsotropicLinesReport([], True, True, height_bound)

    def classes_at(bound):
        vecs = _find_isotropic_vectors(split.p_gram, bound)
        return vecs

    vecs = classes_at(height_bound)
    bound = height_bound
    while not vecs:
        bound *= 2
        if bound > 512:
            raise RuntimeError("isotropic vector search exhausted (P is isotropic)")
        vecs = classes_at(bound)

    lines = [_line_data(split, v) for v in vecs]
    grouped = _group_lines(split, lines, group_cap)
    lines2 = [_line_data(split, v) for v in classes_at(2 * bound)]
    grouped2 = _group_lines(split, lines2, group_cap)
    converged = len(grouped) == len(grouped2)
    return IsotropicLinesReport(grouped, False, converged, bound)


def _line_data(split: SublatticeSplit, ell) -> IsotropicLineData:
    lat = split.lattice
    pg = split.p_gram
    # ell' in P' with (ell, ell') = 1: writing u = Gp y (integer for y in P'),
    # the condition is ell . u = 1, solvable since ell is primitive
    row = [int(_pgram_bilinear(pg, ell, [int(i == j) for j in range(3)]))
           for i in range(3)]
    u0 = _solve_gcd_one(list(ell))
    ginv = _mat_inv_fractions(pg)
    kernel = _kernel_basis([list(ell)])  # integer u with ell . u = 0
    best = None
    for s1 in range(-3, 4):
        for s2 in range(-3, 4):
            u = [u0[i] + s1 * kernel[i][0] + s2 * kernel[i][1] for i in range(3)]
            y = [sum(ginv[i][j] * u[j] for j in range(3)) for i in range(3)]
            h = max(abs(c) for c in y)
            if best is None or (h, y) < best:
                best = (h, y)
    ell_prime = best[1]
    # isotropize
    qlp = _pgram_bilinear(pg, ell_prime, ell_prime) / 2
    ell_prime = tuple(c - qlp * e for c, e in zip(ell_prime, ell))
    assert _pgram_bilinear(pg, ell, ell_prime) == 1
    assert _pgram_bilinear(pg, ell_prime, ell_prime) == 0
    # K = P cap ell-perp cap ell'-perp
    den = 1
    for c in ell_prime:
        den = den * c.denominator // math.gcd(den, c.denominator)
    row2 = [int(den * _pgram_bilinear(pg, ell_prime, [int(i == j) for j in range(3)]))
            for i in range(3)]
    kb = _kernel_basis([row, row2])
    assert len(kb[0]) == 1
    kappa = tuple(kb[i][0] for i in range(3))
    n_ell = _pgram_bilinear(pg, kappa, kappa) / 2
    assert n_ell.denominator == 1 and n_ell > 0
    n_ell = int(n_ell)
    # orientation: det(ell, kappa, ell', X) > 0 in L-coordinates
    l4 = split.p_coords_to_l(ell)
    k4 = split.p_coords_to_l(kappa)
    lp4 = split.p_coords_to_l(ell_prime)
    x4 = split.x.coords
    detm = _det4_frac([list(l4), list(k4), list(lp4), list(x4)])
    assert detm != 0
    if detm < 0:
        kappa = tuple(-c for c in kappa)
        k4 = split.p_coords_to_l(kappa)
    # width: minimal t > 0 with E(t kappa) in Gamma_X; denominators divide
    # the content of (ell, L)
    c_full = 0
    for i in range(4):
        c_full = math.gcd(c_full, abs(int(lat.bilinear(
            [int(i == j) for j in range(4)], l4))))
    width_rat = None
    width_mat = None
    for num in range(1, 3 * c_full + 1):
        t = Fraction(num, c_full)
        mat = eichler_matrix(lat, l4, [t * Fraction(c) for c in k4])
        if mat is not None:
            width_rat = t
            width_mat = mat
            break
    assert width_rat is not None, "Eichler search failed at t <= 3"
    return IsotropicLineData(split, tuple(ell), tuple(ell_prime), kappa,
                             n_ell, width_rat, width_mat, True)


def _solve_gcd_one(row) -> list[int]:
    """Integer u with row . u = 1 (requires gcd(row) = 1)."""
    g, coeffs = _xgcd_list(row)
    if abs(g) != 1:
        raise ValueError("no solution: functional not surjective")
    return [c * (1 if g > 0 else -1) for c in coeffs]


def _xgcd_list(nums):
    g, cs = 0, []
    coeffs = [0] * len(nums)
    for i, n in enumerate(nums):
        if g == 0:
            g = n
            coeffs = [0] * len(nums)
            coeffs[i] = 1
            continue
        gg, a, b = _xgcd(g, n)
        coeffs = [a * c for c in coeffs]
        coeffs[i] = b
        g = gg
    return g, coeffs


def _xgcd(a, b):
    if b == 0:
        return a, 1, 0
    g, x, y = _xgcd(b, a % b)
    return g, y, x - (a // b) * y


def _det4_frac(m):
    mm = [[Fraction(x) for x in row] for row in m]
    det = Fraction(1)
    n = 4
    for col in range(n):
        piv = next((r for r in range(col, n) if mm[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            mm[col], mm[piv] = mm[piv], mm[col]
            det = -det
        det *= mm[col][col]
        inv = 1 / mm[col][col]
        for r in range(col + 1, n):
            f = mm[r][col] * inv
            if f:
                mm[r] = [x - f * y for x, y in zip(mm[r], mm[col])]
    return det


def _group_lines(split, lines: list[IsotropicLineData], cap: int,
                 max_states: int = 4000):
    """Merge lines equivalent under words in the discovered stabilizer
    elements; keep the minimal-height representative of each class.

    A single shared closure over line keys: every encountered line becomes
    a union-find node, so equivalences through intermediate lines are found
    without per-line ball duplication.
    """
    if len(lines) <= 1:
        return lines
    gens = []
    seen_g = set()
    for ln in lines:
        for g in (ln.width_matrix,
                  np.rint(np.linalg.inv(ln.width_matrix)).astype(np.int64)):
            key = g.tobytes()
            if key not in seen_g:
                seen_g.add(key)
                gens.append(g)

    def line_key(v):
        v = tuple(int(x) for x in v)
        g = 0
        for x in v:
            g = math.gcd(g, abs(x))
        v = tuple(x // g for x in v)
        return _line_canonical(v)

    keys = [line_key([int(c) for c in split.p_coords_to_l(ln.ell)])
            for ln in lines]
    height_cap = 64 * max(max(abs(x) for x in k) for k in keys)

    node_of: dict[tuple, int] = {}
    parent: list[int] = []

    def node(k):
        if k not in node_of:
            node_of[k] = len(parent)
            parent.append(len(parent))
        return node_of[k]

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    input_nodes = [node(k) for k in keys]
    frontier = list(dict.fromkeys(keys))
    for _ in range(cap):
        if not frontier or len(parent) > max_states:
            break
        nxt = []
        for k in frontier:
            src = node(k)
            kv = np.array(k, dtype=np.int64)
            for g in gens:
                img = line_key(g @ kv)
                if max(abs(x) for x in img) > height_cap:
                    continue
                known = img in node_of
                union(src, node(img))
                if not known:
                    nxt.append(img)
        frontier = nxt

    classes: dict[int, list[IsotropicLineData]] = {}
    for i, ln in enumerate(lines):
        classes.setdefault(find(input_nodes[i]), []).append(ln)
    out = []
    for group in classes.values():
        group.sort(key=lambda ln: (max(abs(x) for x in ln.ell), ln.ell))
        out.append(group[0])
    out.sort(key=lambda ln: (max(abs(x) for x in ln.ell), ln.ell))
    return out


# -- stabilizer and diagonalizer --------------------------------------------------

@dataclass
class StabilizerReport:
    elements: list[np.ndarray]     # 4x4 integral isometries fixing X
    complete: bool
    search_bound: int


def stabilizer_generators(lat: HilbertLattice, x: LatticeVector,
                          search_bound: int = 8) -> StabilizerReport:
    """Elements of Gamma_X as integral isometries of L: the identity plus all
    Eichler transformations attached to discovered isotropic lines of P.
    The list is possibly incomplete; the flag records the search bound.
    """
    out = [np.eye(4, dtype=np.int64)]
    split = split_sublattices(lat, x)
    rep = isotropic_lines(split, height_bound=search_bound)
    for ln in rep.lines:
        out.append(ln.width_matrix)
    for g in out[1:]:
        xi = np.array([int(c * _common_den(x.coords)) for c in x.coords])
        assert (g @ xi == xi).all()
    return StabilizerReport(out, False, search_bound)


def _common_den(coords):
    den = 1
    for c in coords:
        den = den * c.denominator // math.gcd(den, c.denominator)
    return den


def diagonalizer(lat: HilbertLattice, x: LatticeVector):
    """Numeric gamma = (gamma_1, I) in SL2(R)^2 with gamma^{-1}.X = sqrt|Q| e4."""
    if x.norm >= 0:
        raise ValueError("need Q(X) < 0")
    a, b, cx, cy = (float(c) for c in x.coords)
    d = lat.d
    s = math.sqrt(d)
    w1, w2 = (d + s) / 2, (d - s) / 2
    n1 = cx + cy * w1
    n2 = cx + cy * w2
    xm = np.array([[a, n2], [n1, b]], dtype=float)
    scale = math.sqrt(abs(float(x.norm)))
    xhat = xm / scale
    e4_inv = np.array([[0.0, 1.0], [-1.0, 0.0]])
    g1 = xhat @ e4_inv
    return g1, np.eye(2)


def apply_pair_action(g1: np.ndarray, g2: np.ndarray, xm: np.ndarray) -> np.ndarray:
    """(g1, g2).X = g1 X g2^t on numeric 2x2 matrices."""
    return g1 @ xm @ g2.T


def vector_as_matrix(lat: HilbertLattice, coords) -> np.ndarray:
    a, b, cx, cy = (float(Fraction(c)) for c in coords)
    s = math.sqrt(lat.d)
    w1, w2 = (lat.d + s) / 2, (lat.d - s) / 2
    return np.array([[a, cx + cy * w2], [cx + cy * w1, b]], dtype=float)
