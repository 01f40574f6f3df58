"""Exact unary theta series, their negative-definite companions, the view
of a K_ell-theta as a form for rho_P, and xi-preimage holomorphic parts.

For a rank-1 positive lattice K with Gram [2N] (generator kappa, w =
kappa/|kappa|) the two holomorphic cases are

    weight 1/2:  sum_j q^(j^2/4N) e_j,
    weight 3/2:  (1/sqrt(2N)) sum_j j q^(j^2/4N) e_j,

both over K'/K = Z/2N.  For the rank-1 negative lattice N = Z eta with
Q(eta) = -M und a vector X = c eta (c > 0),

    Theta_{N^-}  = sum_j q^(j^2/4M) e_j                    (weight 1/2, dual rep),
    Theta*_{N^-} = -(1/sqrt M) sum_j j q^(j^2/4M) e_j      (weight 3/2, dual rep).

Every exact series here must pass the numeric S/T residual gate; the
rho_P-view in particular is *defined* subject to that gate, because the
coset pushforward convention comes from a cited construction.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from importlib import resources
from pathlib import Path

import mpmath as mp

from .fqm import FqModule
from .lattice import (IsotropicLineData, SublatticeSplit, _pgram_bilinear,
                      _xgcd_list)
from .numeric import EvalConfig, check_completion, s_transform_residual
from .qseries import QSeries, QuadScalar


def unary_theta(two_n_gram: int, weight: Fraction, ceiling) -> QSeries:
    """Holomorphic unary theta of the rank-1 lattice with Gram [two_n_gram].

    weight 1/2 is the Hermite index 0 series, weight 3/2 the index 1 series;
    higher Hermite indices are not q-series (v-dependent) and live in the
    numeric module.
    """
    weight = Fraction(weight)
    ceiling = Fraction(ceiling)
    if two_n_gram <= 0 or two_n_gram % 2:
        raise ValueError("need a positive even rank-1 Gram [2N]")
    two_n = two_n_gram
    fq = FqModule([[two_n]], (1, 0))
    if weight == Fraction(1, 2):
        hermite = 0
    elif weight == Fraction(3, 2):
        hermite = 1
    else:
        raise ValueError("non-holomorphic; use the numeric module")
    coeffs: dict = {}
    jmax = math.isqrt(int(2 * two_n * ceiling)) + two_n + 1
    for j in range(-jmax, jmax + 1):
        n = Fraction(j * j, 2 * two_n)
        if n > ceiling:
            continue
        key = ((j % two_n,), n)
        if hermite == 0:
            c = QuadScalar.of(1)
        else:
            # (lambda_j, w) = j/sqrt(2N)
            c = QuadScalar.of(Fraction(j, two_n), two_n)
        coeffs[key] = coeffs.get(key, QuadScalar.of(0)) + c
    return QSeries(fq, False, weight, coeffs, ceiling)


def theta_N_negative(m: int, ceiling) -> QSeries:
    """Theta_{N^-} = sum_{lam in N'} e(-Q(lam) tau) e_lam: weight 1/2 for the
    dual representation of N = [-2M]."""
    if m < 1:
        raise ValueError("M must be >= 1")
    ceiling = Fraction(ceiling)
    fq = FqModule([[-2 * m]], (0, 1))
    coeffs: dict = {}
    jmax = math.isqrt(int(4 * m * ceiling)) + 2 * m + 1
    for j in range(-jmax, jmax + 1):
        n = Fraction(j * j, 4 * m)
        if n > ceiling:
            continue
        key = ((j % (2 * m),), n)
        coeffs[key] = coeffs.get(key, QuadScalar.of(0)) + QuadScalar.of(1)
    return QSeries(fq, True, Fraction(1, 2), coeffs, ceiling)


def theta_N_star(m: int, ceiling, orientation: int = 1) -> QSeries:
    """Theta*_{N^-} = sum (lam, X)/sqrt|Q(X)| e(-Q(lam) tau) e_lam for X
    positively proportional to eta (orientation=+1); weight 3/2, dual rep."""
    if m < 1:
        raise ValueError("M must be >= 1")
    if orientation not in (1, -1):
        raise ValueError("orientation must be +-1")
    ceiling = Fraction(ceiling)
    fq = FqModule([[-2 * m]], (0, 1))
    coeffs: dict = {}
    jmax = math.isqrt(int(4 * m * ceiling)) + 2 * m + 1
    for j in range(-jmax, jmax + 1):
        n = Fraction(j * j, 4 * m)
        if n > ceiling:
            continue
        key = ((j % (2 * m),), n)
        c = QuadScalar.of(Fraction(-orientation * j, m), m)  # -j/sqrt(M)
        coeffs[key] = coeffs.get(key, QuadScalar.of(0)) + c
    return QSeries(fq, True, Fraction(3, 2), coeffs, ceiling)


# -- view of the K_ell theta as a modular form for rho_P -------------------------

def _pushforward_map(split: SublatticeSplit, line: IsotropicLineData):
    """Coset pushforward p: P'_0/P -> K'/K along the isotropic line.

    With N_lev Z = (ell, P), zeta in P with (ell, zeta) = N_lev, and
    pi_K(v) = v - (v, ell') ell - (v, ell) ell', the map is

        p(gamma) = pi_K(gamma - ((gamma, ell)/N_lev) zeta)   mod K

    for gamma with (gamma, ell) == 0 mod N_lev, undefined otherwise.
    """
    pg = split.p_gram
    p_fq = split.p_fq()
    k_fq = line.k_fq()
    ell = [Fraction(c) for c in line.ell]
    ellp = [Fraction(c) for c in line.ell_prime]
    kappa = [Fraction(c) for c in line.kappa]
    two_n = 2 * line.n_ell
    # N_lev Z = (ell, P); zeta in P with (ell, zeta) = N_lev
    row = [int(_pgram_bilinear(pg, ell, [int(i == j) for j in range(3)]))
           for i in range(3)]
    g, coeffs = _xgcd_list(row)
    n_lev = abs(g)
    zeta = [Fraction(c * (1 if g > 0 else -1)) for c in coeffs]

    def bil(u, v):
        return _pgram_bilinear(pg, u, v)

    mapping: dict = {}
    for gamma in p_fq.elements():
        gc = p_fq.dual_coords(gamma)
        t = bil(gc, ell)
        assert t.denominator == 1
        if int(t) % n_lev != 0:
            mapping[gamma] = None   # outside P'_0
            continue
        shift = [gc[i] - Fraction(t, n_lev) * zeta[i] for i in range(3)]
        # project to K along <ell, ell'>
        a = bil(shift, ellp)
        b = bil(shift, ell)
        proj = [shift[i] - a * ell[i] - b * ellp[i] for i in range(3)]
        # coordinates along kappa: proj = s * kappa with s in (1/2N) Z
        s = bil(proj, kappa) / Fraction(two_n)
        jj = s * two_n
        if jj.denominator != 1:
            mapping[gamma] = None
            continue
        mapping[gamma] = (int(jj) % two_n,)
    return mapping, k_fq, p_fq


def view_in_rhoP(theta_k: QSeries, split: SublatticeSplit,
                 line: IsotropicLineData, cfg: EvalConfig | None = None,
                 gate_tolerance: float = 1e-8) -> QSeries:
    """Pull the K_ell theta back to a rho_P-indexed series and certify it by
    the numeric S-transformation gate (hard error on failure)."""
    mapping, k_fq, p_fq = _pushforward_map(split, line)
    if theta_k.fq != k_fq:
        raise ValueError("theta series is not over this line's K lattice")
    out: dict = {}
    for gamma, kcoset in mapping.items():
        if kcoset is None:
            continue
        for (b, n), c in theta_k.coeffs.items():
            if b == kcoset:
                out[(gamma, n)] = c
    view = QSeries(p_fq, False, theta_k.weight, out, theta_k.ceiling)
    cfg = cfg or EvalConfig()
    res = [
        s_transform_residual(view, mp.mpc(0.1, 1.0), cfg,
                             name="rhoP-view-S", tolerance=gate_tolerance),
        s_transform_residual(view, mp.mpc(-0.37, 0.81), cfg,
                             name="rhoP-view-S2", tolerance=gate_tolerance),
    ]
    for r in res:
        if not r.passed:
            raise ValueError(
                f"rhoP-view rejected: residual {r.residual:.3g} "
                f"(truncation {r.truncation_bound:.3g}) at tolerance {r.tolerance}")
    return view


# -- xi-preimages -----------------------------------------------------------------

_TABLE_CACHE: dict = {}


def _table_path() -> Path:
    return Path(resources.files("hztrace").joinpath("data/preimages.json"))


def load_preimage_table(path: Path | None = None) -> dict:
    path = path or _table_path()
    with open(path) as fh:
        return json.load(fh)


def xi_preimage_plus(m: int, ceiling, table_path: Path | None = None,
                     certify: bool = True,
                     cfg: EvalConfig | None = None) -> QSeries:
    """Holomorphic part of a xi-preimage of Theta*_{N^-} for N = [-2M]:
    weight 1/2 for rho_N, rational coefficients, small principal part.

    Entries are data (shipped JSON table), certified at load time by the
    completion test.  M = 1 returns the zero series (the shadow vanishes).
    """
    ceiling = Fraction(ceiling)
    if m < 1:
        raise ValueError("M must be >= 1")
    fq = FqModule([[-2 * m]], (0, 1))
    if m == 1:
        return QSeries(fq, False, Fraction(1, 2), {}, ceiling)
    key = (m, table_path)
    if key not in _TABLE_CACHE:
        table = load_preimage_table(table_path)
        entry = next((e for e in table["entries"] if e["M"] == m), None)
        if entry is None:
            raise KeyError(f"preimage table miss: M = {m}")
        coeffs = {}
        for coset, n, rat in entry["coeffs"]:
            coeffs[(tuple(coset), Fraction(n))] = QuadScalar.of(Fraction(rat))
        series = QSeries(fq, False, Fraction(1, 2), coeffs,
                         Fraction(entry["ceiling"]))
        if certify:
            shadow = theta_N_star(m, series.ceiling)
            results = check_completion(series, shadow, cfg=cfg)
            bad = [r for r in results if not r.passed]
            if bad:
                raise ValueError(
                    f"preimage table entry M={m} failed certification: "
                    + "; ".join(f"{r.name}: {r.residual:.3g}" for r in bad))
        _TABLE_CACHE[key] = series
    series = _TABLE_CACHE[key]
    if ceiling > series.ceiling:
        raise ValueError(
            f"preimage table entry M={m} only valid up to {series.ceiling}")
    return series.truncate(ceiling)
