"""Degree-based boundedness certificates, phi selection, and dwell-time bounds.

A phi function is the axis-aligned even-power form sum_i x_i^(2 d_i).  The
syntactic degree test certifies p <= Lambda*phi on any bounded box, with a
constructive Lambda that the dwell-time bound then rests on.  The dwell time
itself comes from inverting

    h(delta) = lam * L1 * exp(L2*delta) * delta / (lam - exp(L2*delta))

on (0, log(lam)/L2), where L1 bounds the second derivative of the candidate
CLF along a mode and L2 bounds the logarithmic growth of phi along it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .poly import Box, Monomial, Polynomial


@dataclass(frozen=True)
class PhiFunction:
    """phi(x) = sum_i x_i^(2*d_i); positive everywhere, definite iff all d_i >= 1."""

    d: Tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.d)

    def is_definite(self) -> bool:
        return all(di >= 1 for di in self.d)

    def is_constant(self) -> bool:
        return all(di == 0 for di in self.d)

    def as_polynomial(self) -> Polynomial:
        terms: Dict[Monomial, float] = {}
        for i, di in enumerate(self.d):
            m = Monomial({i: 2 * di}) if di > 0 else Monomial()
            terms[m] = terms.get(m, 0.0) + 1.0
        return Polynomial(terms)

    def eval(self, x: Sequence[float]) -> float:
        return sum(float(x[i]) ** (2 * di) for i, di in enumerate(self.d))


@dataclass(frozen=True)
class BoundCertificate:
    """Per-mode constants: Vddot_q <= lambda1*phi_q and phidot_q <= lambda2*phi_q on P."""

    lambda1: float
    lambda2: float


@dataclass(frozen=True)
class DwellBound:
    """Certified minimum dwell time delta_lb for scale constant lam > 1."""

    lam: float
    delta_lb: float
    per_mode: Tuple[float, ...]


class PhiSelectionWarning(UserWarning):
    """Raised-as-warning when only the constant phi (d = 0) is admissible."""


def phi_bounded_check(p: Polynomial, phi: PhiFunction) -> bool:
    """Degree test certifying p <= Lambda*phi on bounded regions.

    For each monomial m of p and each variable x_i occurring in m the test
    requires 2*d_i <= degree(m); a constant monomial requires min_i d_i = 0
    (so that phi >= 1 near the origin).  Only variables occurring in m are
    constrained: the unit-box covering argument compares m against the largest
    of its own variables.  Purely syntactic; the zero polynomial passes
    trivially.
    """
    return support_bounded_check(p.monomials(), phi)


def support_bounded_check(monos: Sequence[Monomial], phi: PhiFunction) -> bool:
    """:func:`phi_bounded_check` applied to a bare monomial support set."""
    dmin = min(phi.d, default=0)
    for m in monos:
        vars_m = m.variables()
        if not vars_m:
            if dmin != 0:
                return False
            continue
        deg = m.degree
        if any(2 * phi.d[i] > deg for i in vars_m):
            return False
    return True


def _symbolic_second_lie_support(
    template_monomials: Sequence[Monomial], field: Sequence[Polynomial]
) -> Tuple[Monomial, ...]:
    """Union of monomial supports of the second Lie derivative over all template
    coefficients treated as nonzero."""
    support = set()
    for m in template_monomials:
        p = Polynomial({m: 1.0})
        ddot = p.lie_derivative(field).lie_derivative(field)
        support.update(ddot.monomials())
    return tuple(sorted(support, key=lambda m: m.grlex_key()))


def select_phi(
    template_monomials: Sequence[Monomial],
    field: Sequence[Polynomial],
) -> PhiFunction:
    """Choose the componentwise-maximal admissible exponents d for one mode.

    The exponents must make both the symbolic support of the second Lie
    derivative of the template and the first Lie derivative of phi itself pass
    the degree test.  Since the admissible support of phidot depends on d, the
    search runs a decreasing fixpoint from the maximal seed
    d_i = floor(min-degree(support)/2); d only decreases over a finite lattice,
    so it terminates.
    """
    n = len(field)
    support = _symbolic_second_lie_support(template_monomials, field)
    if not support:
        return PhiFunction(tuple([0] * n))
    seed = min(m.degree for m in support) // 2
    d = [seed] * n
    while True:
        phi = PhiFunction(tuple(d))
        phidot = phi.as_polynomial().lie_derivative(field)
        ok = phi_bounded_check(phidot, phi) and support_bounded_check(support, phi)
        if ok:
            return phi
        if all(di == 0 for di in d):
            # Degree test with d = 0 always passes; unreachable in theory.
            return phi
        # Lower the exponents bounding the worst violating monomial.
        bad_deg = min(
            [m.degree for m in phidot.monomials()] + [m.degree for m in support]
        )
        new_cap = bad_deg // 2
        d = [min(di, max(new_cap, 0)) for di in d]


def lambda_bound(p: Polynomial, phi: PhiFunction, box: Box) -> float:
    """Constructive Lambda with p(x) <= Lambda*phi(x) for all x in the box.

    Requires the degree test to pass.  The certified value is
    Lambda0^degree(p) * sum|c_i| with Lambda0 = max coordinate magnitude of the
    box (clamped to >= 1 so the unit-box monomial bound applies).
    """
    if not phi_bounded_check(p, phi):
        raise ValueError("polynomial is not phi-bounded: degree test fails")
    if p.is_zero():
        return 0.0
    lambda0 = max(box.radius(), 1.0)
    return lambda0 ** p.degree * p.coeff_l1()


def _h(delta: float, lambda1: float, lambda2: float, lam: float) -> float:
    e = math.exp(lambda2 * delta)
    return lam * lambda1 * e * delta / (lam - e)


def dwell_time(
    eps: Sequence[float],
    bounds: Sequence[BoundCertificate],
    lam: float = 2.0,
    rel_tol: float = 1e-10,
) -> DwellBound:
    """Per-mode lower bounds h^{-1}(eps_q) and their minimum.

    h is strictly increasing from 0 to +inf on (0, log(lam)/lambda2), so each
    inverse is found by bisection; lambda2 = 0 degenerates to the closed form
    delta = (lam-1)*eps/(lam*lambda1).
    """
    if lam <= 1.0:
        raise ValueError("scale constant must satisfy lam > 1")
    if len(eps) != len(bounds):
        raise ValueError("eps and bounds must align per mode")
    per_mode = []
    for e_q, b in zip(eps, bounds):
        if e_q <= 0.0:
            raise ValueError("dwell bound requires eps_q > 0")
        if not (math.isfinite(b.lambda1) and math.isfinite(b.lambda2)):
            raise ValueError("non-finite Lambda bound")
        if b.lambda1 <= 0.0:
            # Vdot_q can never rise back to the switch threshold; no finite
            # bound is needed, but keep the closed form with a tiny Lambda1.
            per_mode.append(math.inf)
            continue
        if b.lambda2 == 0.0:
            per_mode.append((lam - 1.0) * e_q / (lam * b.lambda1))
            continue
        hi = math.log(lam) / b.lambda2
        lo = 0.0
        # h(hi^-) = +inf > eps, h(0) = 0 < eps: valid bracket.
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _h(mid, b.lambda1, b.lambda2, lam) < e_q:
                lo = mid
            else:
                hi = mid
            if hi - lo <= rel_tol * max(hi, 1e-300):
                break
        per_mode.append(0.5 * (lo + hi))
    return DwellBound(lam=lam, delta_lb=min(per_mode), per_mode=tuple(per_mode))


def h_of(delta: float, bound: BoundCertificate, lam: float) -> float:
    """Evaluate h(delta) for one mode; closed linear form when lambda2 = 0."""
    if bound.lambda2 == 0.0:
        return lam * bound.lambda1 * delta / (lam - 1.0)
    return _h(delta, bound.lambda1, bound.lambda2, lam)
