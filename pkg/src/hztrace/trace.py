"""Exact traces of cycle integrals of the meromorphic Hilbert modular forms.

For a weakly holomorphic input f of weight 2-k (dual representation) and a
negative-norm vector X, the trace is assembled per isotropic line ell of
P = L cap (QX)^perp as

    g_ell   = [Theta_{K_ell, 3/2} (as rho_P), Theta~*+_{N^-}]_{(k-2)/2},
    term_ell = alpha_ell * CT< f_{P + N}, g_ell >,
    value   = sqrt(2) * (sum_ell term_ell) / C,
    C       = binom(k-3, k/2-1) (k-1) 16 Q(X)^{k/2},

and the result is a rational number r meaning  trace = r * pi * i.  Every
radical (sqrt 2, sqrt N_ell, 1/sqrt(2 N_ell)) must cancel exactly; a
non-collapsing radical is an internal invariant breach, not an input error.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .lattice import (HilbertLattice, IsotropicLineData, LatticeVector,
                      enumerate_vectors, isotropic_lines, orbit_classes,
                      split_sublattices)
from .numeric import EvalConfig
from .qseries import (QSeries, QuadScalar, SublatticeMap, arrow_down,
                      arrow_up, ct_pair, rc_bracket)
from .theta import unary_theta, view_in_rhoP, xi_preimage_plus
from .wforms import WeakForm


class PreconditionError(ValueError):
    """Violated input precondition (e.g. intersecting cycles)."""


class InvariantError(AssertionError):
    """Breach of an internal exactness invariant (e.g. radical non-collapse)."""


def constant_C(k: int, qx: Fraction) -> Fraction:
    """C = binom(k-3, k/2-1) (k-1) 16 Q(X)^{k/2}."""
    if k % 2 or k < 4:
        raise PreconditionError("k must be even and >= 4")
    qx = Fraction(qx)
    return (Fraction(math.comb(k - 3, k // 2 - 1))
            * (k - 1) * 16 * qx ** (k // 2))


@dataclass
class LineTerm:
    line: IsotropicLineData
    ct_value: QuadScalar
    contribution: QuadScalar   # alpha_ell * ct, radicand 2 (or zero)

    def to_json(self):
        return {
            "line": self.line.to_json(),
            "ct": {"rat": str(self.ct_value.rat), "rad": self.ct_value.rad},
            "contribution": {"rat": str(self.contribution.rat),
                             "rad": self.contribution.rad},
        }


@dataclass
class TraceResult:
    value: Fraction            # trace = value * pi * i
    per_line_terms: list[LineTerm]
    flags: dict = field(default_factory=dict)
    inputs_digest: str = ""

    @property
    def clean(self) -> bool:
        return all(self.flags.get(k, True) for k in
                   ("lines_converged", "widths_complete", "orbits_decided"))

    def to_json(self):
        return {
            "value": str(self.value),
            "meaning": "trace = value * pi * i",
            "per_line_terms": [t.to_json() for t in self.per_line_terms],
            "flags": self.flags,
            "inputs_digest": self.inputs_digest,
        }


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, default=str).encode())
    return h.hexdigest()[:16]


def _check_no_intersections(lat: HilbertLattice, f: QSeries, x: LatticeVector,
                            height: int):
    offenders = []
    for (beta, n), _c in f.principal_part().items():
        m = -n
        for y in enumerate_vectors(lat, beta, m, height):
            if lat.bilinear(x.coords, y.coords) == 0:
                offenders.append((m, beta, y.coords))
    if offenders:
        raise PreconditionError(
            "cycles intersect: T_X meets C_Y for "
            + "; ".join(f"Y={[str(c) for c in y]} in L_{{{m},{b}}}"
                        for m, b, y in offenders))


def _apply_m_filter(f: QSeries, m_filter) -> QSeries:
    m, beta = m_filter
    m = Fraction(m)
    beta = tuple(beta)
    keep = {beta, f.fq.neg(beta)}
    coeffs = {k: v for k, v in f.coeffs.items()
              if k[0] in keep and k[1] == -m}
    return QSeries(f.fq, f.dual, f.weight, coeffs, f.ceiling, check=False)


def trace_for_X(f: WeakForm, x: LatticeVector, k: int,
                m_filter=None, ceiling=None,
                intersection_height: int = 4,
                line_height: int = 8,
                via: str = "down",
                cfg: EvalConfig | None = None) -> TraceResult:
    """Exact trace of the cycle-integral pairing of f against omega_X^mero.

    `via` selects the evaluation order used for the constant-term pairing:
    "down" pairs arrow_down(f) against the bracket; "up" pairs f against
    arrow_up(bracket).  Both give identical exact values (adjointness).
    """
    lat = x.lattice
    if x.norm >= 0:
        raise PreconditionError("need Q(X) < 0")
    if f.series.weight != Fraction(2 - k):
        raise PreconditionError(f"weight mismatch: f has weight "
                                f"{f.series.weight}, expected {2 - k}")
    series = f.series
    if m_filter is not None:
        series = _apply_m_filter(series, m_filter)
    _check_no_intersections(lat, f.series, x, intersection_height)
    max_pole = -series.exponent_floor()
    if ceiling is None:
        ceiling = max_pole + 1
    ceiling = Fraction(ceiling)
    if ceiling < max_pole:
        raise PreconditionError("ceiling below the pole order of f")

    split = split_sublattices(lat, x)
    qx = x.norm
    c_const = constant_C(k, qx)
    digest = _digest(f.to_json(), [str(c) for c in x.coords], k,
                     str(m_filter), str(ceiling))
    lines_report = isotropic_lines(split, height_bound=line_height)
    flags = {
        "anisotropic": lines_report.anisotropic,
        "lines_converged": lines_report.converged,
        "widths_complete": all(ln.width_complete for ln in lines_report.lines),
        "intersection_check_height": intersection_height,
    }
    if lines_report.anisotropic:
        return TraceResult(Fraction(0), [], flags, digest)

    pre = xi_preimage_plus(split.m, ceiling + 2, cfg=cfg)
    pn_map = SublatticeMap.from_basis(lat.fq, lat.gram, split.pn_basis())
    n = (k - 2) // 2
    terms = []
    total = QuadScalar.of(0)
    for line in lines_report.lines:
        theta = unary_theta(2 * line.n_ell, Fraction(3, 2), ceiling + 2)
        theta_p = view_in_rhoP(theta, split, line, cfg=cfg)
        g = rc_bracket(theta_p, pre, n)
        if via == "down":
            ct = ct_pair(arrow_down(series, pn_map), g)
        elif via == "up":
            ct = ct_pair(series, arrow_up(g, pn_map))
        else:
            raise ValueError("via must be 'down' or 'up'")
        alpha = QuadScalar.of(line.width_rat, line.n_ell)
        contribution = alpha * ct
        if contribution and contribution.rad != 2:
            raise InvariantError(
                f"radical non-collapse in line term: {contribution}")
        terms.append(LineTerm(line, ct, contribution))
        total = total + contribution
    value = QuadScalar.of(1, 2) * total * (1 / c_const)
    if value and value.rad != 1:
        raise InvariantError(f"radical non-collapse in trace value: {value}")
    return TraceResult(value.rat, terms, flags, digest)


def trace_total(f: WeakForm, lat: HilbertLattice, k: int, n, mu,
                enum_height: int = 4, reduction_cap: int = 16,
                **kwargs) -> TraceResult:
    """Sum of trace_for_X over the Gamma-orbit representatives of L_{n, mu}.

    Refuses (PreconditionError) if the orbit partition leaves undecided
    pairs at the given heights.
    """
    n = Fraction(n)
    if n >= 0:
        raise PreconditionError("need n < 0")
    vecs = enumerate_vectors(lat, mu, n, enum_height)
    if not vecs:
        return TraceResult(Fraction(0), [], {"orbits_decided": True,
                                             "empty": True}, "")
    report = orbit_classes(vecs, lat, reduction_cap)
    if not report.decided:
        pairs = [([str(c) for c in a.coords], [str(c) for c in b.coords])
                 for a, b in report.undecided_pairs]
        raise PreconditionError(f"undecided orbit pairs at cap "
                                f"{report.height_cap}: {pairs}")
    total = Fraction(0)
    all_terms = []
    flags = {"orbits_decided": True,
             "orbit_count": len(report.representatives)}
    for rep in report.representatives:
        res = trace_for_X(f, rep, k, **kwargs)
        total += res.value
        all_terms.extend(res.per_line_terms)
        for key in ("lines_converged", "widths_complete"):
            flags[key] = flags.get(key, True) and res.flags.get(key, True)
    return TraceResult(total, all_terms, flags,
                       _digest(f.to_json(), str(n), list(mu)))
