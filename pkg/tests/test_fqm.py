"""Discriminant forms and Weil representation matrices."""

import cmath
import math
from fractions import Fraction

import numpy as np
import pytest

from hztrace.fqm import (
    FqModule,
    discriminant_form,
    milgram_residual,
    relation_residuals,
    smith_normal_form,
    weil_S,
    weil_T,
    weil_T_matrix,
)

GRAM_D5 = [[0, -1, 0, 0], [-1, 0, 0, 0], [0, 0, 2, 5], [0, 0, 5, 10]]


def brute_force_cosets_rank1(two_n):
    """Oracle: dual-lattice cosets of the rank-1 lattice with Gram [two_n].

    L = Z kappa with (kappa,kappa) = two_n; L' = (1/two_n) Z kappa.  Returns
    the list of Q-values of j*kappa/two_n for j = 0..two_n-1.
    """
    out = []
    for j in range(abs(two_n)):
        q = Fraction(j * j, 2 * two_n)
        out.append(q - (q.numerator // q.denominator))
    return out


def test_hyperbolic_plane_trivial():
    fq = discriminant_form([[0, 1], [1, 0]], (1, 1))
    assert fq.order == 1
    assert fq.divisors == ()
    assert fq.elements() == [()]


def test_gram_2_gives_z2_with_q_one_quarter():
    fq = discriminant_form([[2]], (1, 0))
    assert fq.divisors == (2,)
    oracle = brute_force_cosets_rank1(2)
    got = sorted(fq.q_values.values())
    assert sorted(oracle) == got
    nonzero = [e for e in fq.elements() if e != fq.zero()][0]
    assert fq.q_value(nonzero) == Fraction(1, 4)


def test_d5_lattice_cyclic_of_order_5():
    fq = discriminant_form(GRAM_D5, (2, 2))
    assert fq.order == 5
    assert fq.divisors == (5,)
    # values of Q on L'/L are -j^2/5 mod 1 (nu = j/sqrt(5) cosets)
    vals = sorted(fq.q_values.values())
    expected = sorted(
        Fraction(-j * j, 5) - ((-j * j) // 5) for j in range(5)
    )
    assert vals == expected


def test_degenerate_gram_rejected():
    with pytest.raises(ValueError, match="singular"):
        discriminant_form([[2, 2], [2, 2]], (1, 1))


def test_odd_gram_rejected():
    with pytest.raises(ValueError, match="even"):
        discriminant_form([[1]], (1, 0))


def test_snf_diagonal_divisibility():
    u, d, v = smith_normal_form(GRAM_D5)
    diag = [d[i][i] for i in range(4)]
    for i in range(3):
        assert diag[i + 1] % max(diag[i], 1) == 0 or diag[i + 1] == 0
    un = np.array(u)
    vn = np.array(v)
    assert round(abs(np.linalg.det(un))) == 1
    assert round(abs(np.linalg.det(vn))) == 1
    assert (un @ np.array(GRAM_D5) @ vn == np.array(d)).all()


def test_weil_T_phases():
    fq = discriminant_form(GRAM_D5, (2, 2))
    ph = weil_T(fq)
    # rho(T) e_b = e(Q(b)) e_b
    for e, q in fq.q_values.items():
        assert ph[e] == q
    beta = next(e for e in fq.elements() if fq.q_value(e) == Fraction(1, 5))
    assert weil_T(fq)[beta] == Fraction(1, 5)
    assert weil_T(fq, dual=True)[beta] == Fraction(4, 5)
    assert weil_T(fq)[fq.zero()] == 0


def test_weil_T_quarter_negation():
    fq = discriminant_form([[2]], (1, 0))
    beta = (1,)
    assert weil_T(fq)[beta] == Fraction(1, 4)
    assert weil_T(fq, dual=True)[beta] == Fraction(3, 4)


def test_weil_S_trivial_group():
    fq = discriminant_form([[0, 1], [1, 0]], (1, 1))
    # pretend ambient signature (2,2): build the module with that signature
    fq = FqModule([[0, 1], [1, 0]], (2, 2))
    s = weil_S(fq).complex_matrix()
    assert s.shape == (1, 1)
    assert abs(s[0, 0] - 1) < 1e-14


def test_weil_S_z2_explicit():
    # gram [[2]], signature (1,0): (1/sqrt 2) e(-1/8) [[1,1],[1,-1]]
    fq = discriminant_form([[2]], (1, 0))
    s = weil_S(fq).complex_matrix()
    pref = cmath.exp(-2j * cmath.pi / 8) / math.sqrt(2)
    expected = pref * np.array([[1, 1], [1, -1]], dtype=complex)
    # element order: (0,), (1,)
    assert np.max(np.abs(s - expected)) < 1e-14


def test_relations_d5():
    fq = discriminant_form(GRAM_D5, (2, 2))
    res = relation_residuals(fq)
    assert res["unitary"] < 1e-12
    assert res["braid"] < 1e-12
    assert res["s4"] < 1e-12


@pytest.mark.parametrize("gram,sig", [
    ([[2]], (1, 0)),
    ([[-4]], (0, 1)),
    (GRAM_D5, (2, 2)),
    ([[2, 1], [1, 2]], (2, 0)),
])
def test_relations_generic(gram, sig):
    fq = discriminant_form(gram, sig)
    res = relation_residuals(fq)
    assert max(res.values()) < 1e-12
    res_dual = relation_residuals(fq, dual=True)
    assert max(res_dual.values()) < 1e-12


def test_dual_is_conjugate():
    fq = discriminant_form(GRAM_D5, (2, 2))
    s = weil_S(fq).complex_matrix()
    s_dual = weil_S(fq, dual=True).complex_matrix()
    assert np.max(np.abs(s_dual - s.conj())) < 1e-13
    t = weil_T_matrix(fq)
    t_dual = weil_T_matrix(fq, dual=True)
    assert np.max(np.abs(t_dual - t.conj())) < 1e-13
    # the dual module gives the same matrices as the dual flag
    fqd = fq.dual()
    assert np.max(np.abs(weil_S(fqd).complex_matrix() - s.conj())) < 1e-13


def test_milgram():
    for gram, sig in [([[2]], (1, 0)), (GRAM_D5, (2, 2)), ([[-4]], (0, 1))]:
        assert milgram_residual(discriminant_form(gram, sig)) < 1e-10


def test_q_of_minus_gamma():
    fq = discriminant_form(GRAM_D5, (2, 2))
    for e in fq.elements():
        assert fq.q_value(e) == fq.q_value(fq.neg(e))


def test_bilinear_from_q():
    fq = discriminant_form([[2, 1], [1, 2]], (2, 0))
    for a in fq.elements():
        for b in fq.elements():
            lhs = fq.bilinear(a, b)
            rhs = fq.q_value(fq.add(a, b)) - fq.q_value(a) - fq.q_value(b)
            assert (lhs - rhs) % 1 == 0


def test_direct_sum_and_coset_roundtrip():
    fq = discriminant_form([[2]], (1, 0))
    fq2 = discriminant_form([[-4]], (0, 1))
    s = fq.direct_sum(fq2)
    assert s.order == 8
    for e in s.elements():
        assert s.coset_of_dual(s.dual_coords(e)) == e


def test_json_roundtrip_shape():
    fq = discriminant_form(GRAM_D5, (2, 2))
    js = fq.to_json()
    assert js["divisors"] == [5]
    assert js["signature"] == [2, 2]
    assert len(js["q_values"]) == 5
