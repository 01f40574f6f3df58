"""Floating-point evaluation of the analytic objects and residual checks.

This is the certification layer behind the exact modules: it evaluates
truncated q-expansions, lattice theta functions and locally harmonic sums
at working precision (mpmath), and checks the transformation laws and
differential identities with explicit truncation-error reporting.  A check
passes only when the residual is below tolerance AND the tolerance
dominates the truncation bound by a factor 10.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath as mp
import numpy as np

from .fqm import FqModule, weil_S, weil_T
from .lattice import HilbertLattice, LatticeVector, enumerate_vectors
from .qseries import QSeries


@dataclass
class EvalConfig:
    height: int = 6                  # lattice-sum truncation height
    precision_bits: int = 128
    fd_step: float = 1e-5            # finite-difference step for xi-operators
    tolerances: dict = field(default_factory=dict)

    def tol(self, name: str, default: float) -> float:
        return self.tolerances.get(name, default)


@dataclass
class CheckResult:
    name: str
    residual: float
    truncation_bound: float
    tolerance: float
    precision_bits: int

    @property
    def passed(self) -> bool:
        return (self.residual < self.tolerance
                and self.tolerance > 10 * self.truncation_bound)

    def to_json(self):
        return {
            "name": self.name,
            "residual": self.residual,
            "truncation_bound": self.truncation_bound,
            "tolerance": self.tolerance,
            "precision_bits": self.precision_bits,
            "passed": self.passed,
        }


def _e(x):
    return mp.e ** (2j * mp.pi * x)


def _mpf_frac(x: Fraction):
    return mp.mpf(x.numerator) / mp.mpf(x.denominator)


# -- q-series evaluation -------------------------------------------------------

def qseries_components(f: QSeries, tau) -> dict:
    """Evaluate each component of the (holomorphic part of the) series."""
    out = {e: mp.mpc(0) for e in f.fq.elements()}
    for (b, n), c in f.coeffs.items():
        out[b] += (_mpf_frac(c.rat) * mp.sqrt(c.rad)) * _e(_mpf_frac(n) * tau)
    return out


def qseries_tail_bound(f: QSeries, v: float) -> float:
    """Crude tail bound: largest coefficient magnitude times the geometric
    tail of e(n tau) beyond the ceiling."""
    if not f.coeffs:
        return 0.0
    cmax = max(abs(float(c)) for c in f.coeffs.values())
    q = math.exp(-2 * math.pi * float(v))
    ceil = float(f.ceiling)
    # polynomially growing coefficients: give a margin factor
    return 20 * max(1.0, cmax) * q ** max(ceil, 0.5) / (1 - q)


class HarmonicCompletion:
    """Harmonic completion f = plus + minus of a candidate holomorphic part
    with prescribed cuspidal shadow g = sum b(d, beta) q^d e_beta of weight
    2 - k.  The non-holomorphic part for weight k is

        minus(tau) = - sum_beta sum_{d>0} b(d,beta) (4 pi d)^(k-1) ...

    specialized here to k = 1/2:

        minus(tau) = - sum b(d,beta)/sqrt(4 pi d) Gamma(1/2, 4 pi d v) q^{-d} e_beta.
    """

    def __init__(self, plus: QSeries, shadow: QSeries):
        if plus.dual or not shadow.dual:
            raise ValueError("plus part must be non-dual, shadow dual")
        if plus.fq != shadow.fq:
            raise ValueError("module mismatch between plus part and shadow")
        if plus.weight != Fraction(1, 2) or shadow.weight != Fraction(3, 2):
            raise ValueError("completion implemented for weights (1/2, 3/2)")
        self.plus = plus
        self.shadow = shadow
        self.fq = plus.fq
        self.weight = plus.weight

    def components(self, tau) -> dict:
        out = qseries_components(self.plus, tau)
        v = tau.imag
        for (b, d), c in self.shadow.coeffs.items():
            if d <= 0:
                raise ValueError("shadow must be cuspidal")
            coef = _mpf_frac(c.rat) * mp.sqrt(c.rad)
            x = 4 * mp.pi * _mpf_frac(d) * v
            out[b] -= (coef / mp.sqrt(4 * mp.pi * _mpf_frac(d))
                       * mp.gammainc(mp.mpf("0.5"), x)
                       * _e(-_mpf_frac(d) * tau))
        return out

    def tail_bound(self, v: float) -> float:
        # Gamma(1/2, x) e^{2 pi d v} decays like e^{-2 pi d v}
        return (qseries_tail_bound(self.plus, v)
                + qseries_tail_bound(self.shadow, v))


def _as_vector(components: dict, fq: FqModule):
    return mp.matrix([components[e] for e in fq.elements()])


def _weil_S_mp(fq: FqModule, dual: bool):
    sm = weil_S(fq, dual=dual)
    n = len(sm.elements)
    scale = _mpf_frac(sm.rat) * mp.sqrt(sm.radicand)
    out = mp.matrix(n, n)
    for i in range(n):
        for j in range(n):
            out[i, j] = scale * _e(_mpf_frac(sm.phases[i][j]))
    return out


def _weil_T_mp(fq: FqModule, dual: bool):
    ph = weil_T(fq, dual=dual)
    n = fq.order
    out = mp.matrix(n, n)
    for i, e in enumerate(fq.elements()):
        out[i, i] = _e(_mpf_frac(ph[e]))
    return out


def s_transform_residual(obj, tau, cfg: EvalConfig | None = None,
                         name: str = "S-residual", tolerance: float = 1e-8) -> CheckResult:
    """Residual of f(-1/tau) = tau^w rho(S) f(tau) (principal branch)."""
    cfg = cfg or EvalConfig()
    with mp.workprec(cfg.precision_bits):
        tau = mp.mpc(tau)
        if isinstance(obj, HarmonicCompletion):
            comp, fq, dual, w = obj.components, obj.fq, False, obj.weight
            tb = obj.tail_bound(min(tau.imag, (-1 / tau).imag))
        else:
            comp, fq, dual, w = (lambda t: qseries_components(obj, t),
                                 obj.fq, obj.dual, obj.weight)
            tb = qseries_tail_bound(obj, float(min(tau.imag, (-1 / tau).imag)))
        lhs = _as_vector(comp(-1 / tau), fq)
        smat = _weil_S_mp(fq, dual)
        phi = mp.e ** (_mpf_frac(Fraction(w)) * mp.log(tau))
        rhs = phi * (smat * _as_vector(comp(tau), fq))
        resid = max(abs(lhs[i] - rhs[i]) for i in range(fq.order))
        scale = max(1.0, max(abs(rhs[i]) for i in range(fq.order)))
        return CheckResult(name, float(resid / scale), tb, tolerance,
                           cfg.precision_bits)


def t_transform_residual(obj, tau, cfg: EvalConfig | None = None,
                         name: str = "T-residual", tolerance: float = 1e-8) -> CheckResult:
    cfg = cfg or EvalConfig()
    with mp.workprec(cfg.precision_bits):
        tau = mp.mpc(tau)
        if isinstance(obj, HarmonicCompletion):
            comp, fq, dual = obj.components, obj.fq, False
            tb = obj.tail_bound(float(tau.imag))
        else:
            comp, fq, dual = (lambda t: qseries_components(obj, t),
                              obj.fq, obj.dual)
            tb = qseries_tail_bound(obj, float(tau.imag))
        lhs = _as_vector(comp(tau + 1), fq)
        tmat = _weil_T_mp(fq, dual)
        rhs = tmat * _as_vector(comp(tau), fq)
        resid = max(abs(lhs[i] - rhs[i]) for i in range(fq.order))
        scale = max(1.0, max(abs(rhs[i]) for i in range(fq.order)))
        return CheckResult(name, float(resid / scale), tb, tolerance,
                           cfg.precision_bits)


def xi_operator_fd(comp_fn, tau, weight, h: float = 1e-5):
    """xi_k f = 2 i v^k conj(d f / d taubar) by central differences."""
    h = mp.mpf(h)
    fu_p = comp_fn(tau + h)
    fu_m = comp_fn(tau - h)
    fv_p = comp_fn(tau + 1j * h)
    fv_m = comp_fn(tau - 1j * h)
    v = tau.imag
    out = {}
    for b in fu_p:
        du = (fu_p[b] - fu_m[b]) / (2 * h)
        dv = (fv_p[b] - fv_m[b]) / (2 * h)
        dtaubar = (du + 1j * dv) / 2
        out[b] = 2j * v ** _mpf_frac(Fraction(weight)) * mp.conj(dtaubar)
    return out


def check_completion(plus: QSeries, shadow: QSeries,
                     tau_samples: Sequence = (mp.mpc(0.13, 0.99),
                                              mp.mpc(-0.17, 1.03)),
                     cfg: EvalConfig | None = None) -> list[CheckResult]:
    """Certify a xi-preimage holomorphic part: attach the canonical
    non-holomorphic completion and test S-modularity (< 1e-6) and finite-
    difference recovery of the shadow (< 1e-4)."""
    cfg = cfg or EvalConfig()
    comp = HarmonicCompletion(plus, shadow)
    out = []
    with mp.workprec(max(cfg.precision_bits, 128)):
        for i, tau in enumerate(tau_samples):
            tau = mp.mpc(tau)
            out.append(s_transform_residual(
                comp, tau, cfg, name=f"completion-S@{i}",
                tolerance=cfg.tol("completion_s", 1e-6)))
        for i, tau in enumerate(tau_samples):
            tau = mp.mpc(tau)
            xi = xi_operator_fd(comp.components, tau, Fraction(1, 2), cfg.fd_step)
            target = qseries_components(shadow, tau)
            resid = max(abs(xi[b] - target[b]) for b in xi)
            scale = max(1.0, max(abs(t) for t in target.values()))
            tb = (qseries_tail_bound(shadow, float(tau.imag))
                  + comp.tail_bound(float(tau.imag)) / cfg.fd_step * 1e-20)
            out.append(CheckResult(f"completion-xi@{i}", float(resid / scale),
                                   tb, cfg.tol("completion_xi", 1e-4),
                                   cfg.precision_bits))
    return out


# -- lattice sums ---------------------------------------------------------------

def _embed_data(lat: HilbertLattice):
    s = math.sqrt(lat.d)
    return (lat.d + s) / 2, (lat.d - s) / 2


def _vectors_np(vectors: Iterable[LatticeVector], lat: HilbertLattice):
    """(a, b, nu1, nu2) rows for numpy evaluation."""
    w1, w2 = _embed_data(lat)
    rows = []
    for v in vectors:
        a, b, x, y = (float(c) for c in v.coords)
        rows.append((a, b, x + y * w1, x + y * w2))
    return np.array(rows, dtype=float).reshape(-1, 4)


def _qz_np(rows: np.ndarray, z1, z2):
    a, b, n1, n2 = rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3]
    return -b * z1 * z2 + n1 * z1 + n2 * z2 - a


def _pz_np(rows: np.ndarray, z1, z2):
    a, b, n1, n2 = rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3]
    return (-b * np.conj(z1) * z2 + n1 * np.conj(z1) + n2 * z2 - a) / z1.imag


def eval_omega(lat: HilbertLattice, k: int, q, coset, z1, z2,
               cfg: EvalConfig | None = None):
    """omega^{cusp/mero}_{q, beta}(Z) = sum_{Y in L_{q,beta}, |Y| <= H} q_Z(Y)^{-k}.

    Returns (value, tail_estimate).  Raises near the singular locus.
    """
    cfg = cfg or EvalConfig()
    vecs = enumerate_vectors(lat, coset, Fraction(q), cfg.height)
    if not vecs:
        return 0j, 0.0
    rows = _vectors_np(vecs, lat)
    qv = _qz_np(rows, complex(z1), complex(z2))
    amin = np.min(np.abs(qv))
    if amin < 1e-6:
        raise ValueError("Z is within tolerance of a singular cycle")
    heights = np.array([max(abs(float(c)) for c in v.coords) for v in vecs])
    vals = qv ** (-k)
    # tail estimate: contribution of the outermost height shell, times a margin
    outer = heights >= cfg.height - 1
    tail = 10 * float(np.sum(np.abs(vals[outer])))
    return complex(np.sum(vals)), tail


def eval_theta(kind: str, lat: HilbertLattice, k: int, tau, z1, z2,
               cfg: EvalConfig | None = None):
    """Doi-Naganuma / Millson theta functions as C[L'/L]-valued sums.

    kind in {"DN", "M1", "M2"}; returns (dict coset -> complex, tail_estimate).
    """
    cfg = cfg or EvalConfig()
    tau = complex(tau)
    z1, z2 = complex(z1), complex(z2)
    u, v = tau.real, tau.imag
    y1, y2 = z1.imag, z2.imag
    out = {e: 0j for e in lat.fq.elements()}
    tail = 0.0
    for e in lat.fq.elements():
        vecs = _coset_box(lat, e, cfg.height)
        if not len(vecs):
            continue
        rows = _vectors_np([LatticeVector(lat, tuple(map(Fraction, c)))
                            for c in vecs], lat)
        qv = _qz_np(rows, z1, z2)
        pv = _pz_np(rows, z1, z2)
        qz_norm = np.abs(qv) ** 2 / (4 * y1 * y2)          # Q(lambda_Z)
        pz_norm = -(y1 / (4 * y2)) * np.abs(pv) ** 2       # Q(lambda_{Zperp})
        phase = np.exp(2j * np.pi * (qz_norm * tau + pz_norm * np.conj(tau)))
        if kind == "DN":
            vals = v * (qv ** k / (y1 * y2) ** k) * phase
        elif kind == "M1":
            vals = v ** k * qv ** (k - 1) * pv * phase
        elif kind == "M2":
            vals = v ** k * (y1 / y2) * qv ** (k - 1) * np.conj(pv) * phase
        else:
            raise ValueError(f"unknown theta kind {kind}")
        out[e] = complex(np.sum(vals))
        heights = np.max(np.abs(np.array(vecs, dtype=float)), axis=1)
        outer = heights >= cfg.height - 1
        tail += 10 * float(np.sum(np.abs(vals[outer])))
    return out, tail


_COSET_BOX_CACHE: dict = {}


def _coset_box(lat: HilbertLattice, e, height: int):
    key = (lat.d, e, height)
    if key in _COSET_BOX_CACHE:
        return _COSET_BOX_CACHE[key]
    offset = [c - (c.numerator // c.denominator) for c in lat.fq.dual_coords(e)]
    axes = []
    for i in range(4):
        off = offset[i]
        lo = math.ceil(-height - off)
        hi = math.floor(height - off)
        axes.append([off + n for n in range(lo, hi + 1)])
    box = [c for c in itertools.product(*axes)]
    _COSET_BOX_CACHE[key] = box
    return box


def eval_locally_harmonic(lat: HilbertLattice, k: int, q, coset, z1, z2,
                          cfg: EvalConfig | None = None):
    """The two components of the locally harmonic form:

    Omega_1 = sum y1^{k-2} y2^k conj(q_Z(Y))^{1-k} / conj(p_Z(Y)),
    Omega_2 = sum y1^k y2^{k-2} conj(q_Z(Y))^{1-k} / ((y1/y2) p_Z(Y)).
    """
    cfg = cfg or EvalConfig()
    vecs = enumerate_vectors(lat, coset, Fraction(q), cfg.height)
    rows = _vectors_np(vecs, lat)
    z1, z2 = complex(z1), complex(z2)
    y1, y2 = z1.imag, z2.imag
    qv = _qz_np(rows, z1, z2)
    pv = _pz_np(rows, z1, z2)
    if np.min(np.abs(pv)) < 1e-6:
        raise ValueError("Z is within tolerance of a real-analytic cycle")
    o1 = y1 ** (k - 2) * y2 ** k * np.sum(np.conj(qv) ** (1 - k) / np.conj(pv))
    o2 = y1 ** k * y2 ** (k - 2) * np.sum(np.conj(qv) ** (1 - k) / ((y1 / y2) * pv))
    heights = np.array([max(abs(float(c)) for c in v.coords) for v in vecs])
    outer = heights >= cfg.height - 1
    tail = 10 * float(np.sum(np.abs(np.conj(qv[outer]) ** (1 - k) / pv[outer])))
    tail *= max(y1 ** (k - 2) * y2 ** k, y1 ** k * y2 ** (k - 2))
    return complex(o1), complex(o2), tail


# -- unary theta with Hermite weight (numeric, any k) ------------------------------

def unary_theta_numeric(two_n: int, k: int, tau, trunc: int = 60):
    """Theta_{K, k+1/2}(tau) = (2 sqrt(2 pi v))^{-k} sum H_k(sqrt(2 pi v)(lam,w))
    e(Q(lam) tau) e_lam for the rank-1 lattice with Gram [two_n]."""
    tau = mp.mpc(tau)
    v = tau.imag
    out = {(j % two_n,): mp.mpc(0) for j in range(two_n)}
    s = mp.sqrt(2 * mp.pi * v)
    pref = (2 * s) ** (-k)
    for j in range(-trunc, trunc + 1):
        # lambda = j kappa / two_n: Q = j^2/(2 two_n), (lambda, w) = j/sqrt(two_n)
        x = s * j / mp.sqrt(two_n)
        h = mp.hermite(k, x)
        q = mp.mpf(j * j) / (2 * two_n)
        out[(j % two_n,)] += pref * h * _e(q * tau)
    return out


def check_raising_lemma(two_n: int, tau, cfg: EvalConfig | None = None,
                        tolerance: float = 1e-5) -> CheckResult:
    """R_{1/2} Theta_{K,1/2} = -2 pi Theta_{K,5/2} via finite differences,
    R_k = 2i d/dtau + k/v."""
    cfg = cfg or EvalConfig()
    with mp.workprec(max(cfg.precision_bits, 128)):
        tau = mp.mpc(tau)
        h = mp.mpf(cfg.fd_step)

        def theta_half(t):
            return unary_theta_numeric(two_n, 0, t)

        fu_p, fu_m = theta_half(tau + h), theta_half(tau - h)
        fv_p, fv_m = theta_half(tau + 1j * h), theta_half(tau - 1j * h)
        base = theta_half(tau)
        target = unary_theta_numeric(two_n, 2, tau)
        resid = mp.mpf(0)
        scale = mp.mpf(1)
        v = tau.imag
        for b in base:
            du = (fu_p[b] - fu_m[b]) / (2 * h)
            dv = (fv_p[b] - fv_m[b]) / (2 * h)
            dtau = (du - 1j * dv) / 2
            lhs = 2j * dtau + base[b] / (2 * v)
            rhs = -2 * mp.pi * target[b]
            resid = max(resid, abs(lhs - rhs))
            scale = max(scale, abs(rhs))
        qv = math.exp(-2 * math.pi * float(v))
        tb = 50 * qv ** ((55 ** 2) / (2 * two_n))
        return CheckResult(f"raising[{two_n}]@{complex(tau)}",
                           float(resid / scale), tb, tolerance,
                           cfg.precision_bits)


def check_difftheta(lat: HilbertLattice, k: int, tau, z1, z2,
                    cfg: EvalConfig | None = None,
                    tolerance: float = 1e-4) -> CheckResult:
    """Prop. difftheta: -y2^{-k} xi_{2-k,z1} Theta^{M1} - y1^{-k} xi_{2-k,z2}
    Theta^{M2} = 2 xi_{k,tau} Theta^{DN} (all by central differences)."""
    cfg = cfg or EvalConfig()
    h = cfg.fd_step
    tau = complex(tau)
    z1, z2 = complex(z1), complex(z2)
    y1, y2 = z1.imag, z2.imag

    def m1(zz1, zz2):
        return eval_theta("M1", lat, k, tau, zz1, zz2, cfg)[0]

    def m2(zz1, zz2):
        return eval_theta("M2", lat, k, tau, zz1, zz2, cfg)[0]

    def dn(t):
        return eval_theta("DN", lat, k, t, z1, z2, cfg)[0]

    elts = lat.fq.elements()

    def xi_z(fn, z, other_fixed_first: bool, weight):
        # xi_{w,z} F = 2 i y^w conj(dF/dzbar)
        if other_fixed_first:
            fp, fm = fn(z + h, z2), fn(z - h, z2)
            gp, gm = fn(z + 1j * h, z2), fn(z - 1j * h, z2)
        else:
            fp, fm = fn(z1, z + h), fn(z1, z - h)
            gp, gm = fn(z1, z + 1j * h), fn(z1, z - 1j * h)
        out = {}
        y = z.imag
        for b in elts:
            du = (fp[b] - fm[b]) / (2 * h)
            dv = (gp[b] - gm[b]) / (2 * h)
            dzbar = (du + 1j * dv) / 2
            out[b] = 2j * y ** weight * np.conj(dzbar)
        return out

    xi1 = xi_z(m1, z1, True, 2 - k)
    xi2 = xi_z(m2, z2, False, 2 - k)
    # xi_{k,tau} on the conjugate-weight side
    fp, fm = dn(tau + h), dn(tau - h)
    gp, gm = dn(tau + 1j * h), dn(tau - 1j * h)
    v = tau.imag
    resid, scale = 0.0, 1.0
    _, tail = eval_theta("DN", lat, k, tau, z1, z2, cfg)
    for b in elts:
        du = (fp[b] - fm[b]) / (2 * h)
        dv = (gp[b] - gm[b]) / (2 * h)
        dtaubar = (du + 1j * dv) / 2
        xitau = 2j * v ** k * np.conj(dtaubar)
        lhs = -y2 ** float(-k) * xi1[b] - y1 ** float(-k) * xi2[b]
        rhs = 2 * xitau
        resid = max(resid, abs(lhs - rhs))
        scale = max(scale, abs(rhs))
    return CheckResult("difftheta", float(resid / scale), tail / scale,
                       tolerance, 53)


def check_xi_locally_harmonic(lat: HilbertLattice, k: int, q, coset, z1, z2,
                              cfg: EvalConfig | None = None,
                              tolerance: float = 1e-4) -> CheckResult:
    """Prop 1.3: -y2^{-k} xi_{2-k,z1} Omega_1 - y1^{-k} xi_{2-k,z2} Omega_2
    = -2 (k-1) omega^{cusp} (finite differences)."""
    cfg = cfg or EvalConfig()
    h = cfg.fd_step
    z1, z2 = complex(z1), complex(z2)
    y1, y2 = z1.imag, z2.imag

    def om1(zz1, zz2):
        return eval_locally_harmonic(lat, k, q, coset, zz1, zz2, cfg)[0]

    def om2(zz1, zz2):
        return eval_locally_harmonic(lat, k, q, coset, zz1, zz2, cfg)[1]

    def xi(fn, wrt1: bool, weight):
        if wrt1:
            du = (fn(z1 + h, z2) - fn(z1 - h, z2)) / (2 * h)
            dv = (fn(z1 + 1j * h, z2) - fn(z1 - 1j * h, z2)) / (2 * h)
            y = y1
        else:
            du = (fn(z1, z2 + h) - fn(z1, z2 - h)) / (2 * h)
            dv = (fn(z1, z2 + 1j * h) - fn(z1, z2 - 1j * h)) / (2 * h)
            y = y2
        dzbar = (du + 1j * dv) / 2
        return 2j * y ** weight * np.conj(dzbar)

    lhs = -y2 ** float(-k) * xi(om1, True, 2 - k) \
        - y1 ** float(-k) * xi(om2, False, 2 - k)
    om, tail = eval_omega(lat, k, q, coset, z1, z2, cfg)
    rhs = -2 * (k - 1) * om
    scale = max(1.0, abs(rhs))
    return CheckResult("xi-locally-harmonic", float(abs(lhs - rhs) / scale),
                       tail / scale, tolerance, 53)
