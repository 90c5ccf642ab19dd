"""Moment relaxation of the CLF synthesis constraints.

Every constraint polynomial p is rewritten as a linear functional <A, Z> of a
single moment matrix Z, where the exact semantics Z = m(x) m(x)^T (a rank-1
lift over the monomial basis vector m) is relaxed to: Z PSD, Z inside the
entrywise interval box obtained from interval arithmetic over the domain, and
aliased entries (distinct index pairs representing the same product monomial)
equal.  The relaxation keeps the coefficient vector c of the candidate V
linear: V(c, .) lifts to sum_j c_j F_j and -Vdot_q(c, .) to sum_j c_j Fq[q][j].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .phi import PhiFunction
from .plant import StabilitySpec, SwitchedPlant
from .poly import Box, Monomial, ONE, Polynomial


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered monomial vector m with the product-alias table.

    ``pair_table`` maps each product monomial m_i * m_j to every ordered pair
    (i, j), i <= j, producing it; it is total over the pairwise products of the
    basis, so any polynomial supported on those products has a Gram form.
    """

    monomials: Tuple[Monomial, ...]
    index: Dict[Monomial, int]
    pair_table: Dict[Monomial, Tuple[Tuple[int, int], ...]]

    @property
    def size(self) -> int:
        return len(self.monomials)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vals = np.ones(len(self.monomials))
        for k, m in enumerate(self.monomials):
            for i, e in m.powers:
                vals[k] *= x[i] ** e
        return vals

    def gram(self, p: Polynomial) -> np.ndarray:
        """Symmetric A with <A, m(x)m(x)^T> = p(x).

        The coefficient of each monomial is split equally across its alias
        pairs (and symmetrically across (i,j)/(j,i)), making the matrix unique
        and symmetric.
        """
        B = self.size
        A = np.zeros((B, B))
        for mono, coeff in p.terms.items():
            pairs = self.pair_table.get(mono)
            if not pairs:
                raise KeyError(f"monomial {mono} not representable in basis")
            share = coeff / len(pairs)
            for i, j in pairs:
                if i == j:
                    A[i, i] += share
                else:
                    A[i, j] += share / 2.0
                    A[j, i] += share / 2.0
        return A

    def alias_equalities(self) -> Tuple[Tuple[Tuple[int, int], Tuple[int, int]], ...]:
        """Entry-pair equalities satisfied exactly by every rank-1 lift."""
        out = []
        for pairs in self.pair_table.values():
            for extra in pairs[1:]:
                out.append((pairs[0], extra))
        return tuple(out)


@dataclass(frozen=True)
class LiftedBox:
    """Entrywise interval bounds containing m(x)m(x)^T for all x in the box."""

    lower: np.ndarray
    upper: np.ndarray

    def contains(self, Z: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(
            np.all(Z >= self.lower - tol) and np.all(Z <= self.upper + tol)
        )


@dataclass(frozen=True)
class RelaxedProblem:
    basis: MonomialBasis
    lifted_box: LiftedBox
    G: np.ndarray                       # positivity floor alpha
    GQ: Tuple[np.ndarray, ...]          # per mode: eps_q * phi_q
    F: Tuple[np.ndarray, ...]           # per template coefficient: m_j
    Fq: Tuple[Tuple[np.ndarray, ...], ...]  # per mode, per coefficient: -Vdot
    exclusion_threshold: float
    template: Tuple[Monomial, ...]
    eps: Tuple[float, ...]

    @property
    def num_modes(self) -> int:
        return len(self.GQ)

    @property
    def num_coeffs(self) -> int:
        return len(self.F)

    def F_of(self, c: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(c, dtype=float), np.stack(self.F), axes=1)

    def Fq_of(self, q: int, c: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(c, dtype=float), np.stack(self.Fq[q]), axes=1)

    def to_json(self) -> dict:
        return {
            "basis": [repr(m) for m in self.basis.monomials],
            "exclusion_threshold": self.exclusion_threshold,
            "eps": list(self.eps),
            "G": self.G.tolist(),
            "GQ": [M.tolist() for M in self.GQ],
            "F": [M.tolist() for M in self.F],
            "Fq": [[M.tolist() for M in row] for row in self.Fq],
            "box_lower": self.lifted_box.lower.tolist(),
            "box_upper": self.lifted_box.upper.tolist(),
        }

    def dump(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)


def _half_split(mono: Monomial) -> Tuple[Monomial, Monomial]:
    lo = {i: e // 2 for i, e in mono.powers if e // 2}
    hi = {i: e - e // 2 for i, e in mono.powers if e - e // 2}
    return Monomial(lo), Monomial(hi)


def build_basis(
    plant: SwitchedPlant,
    template: Sequence[Monomial],
    alpha: Polynomial,
    phis: Sequence[Polynomial],
    depth: int = 1,
) -> MonomialBasis:
    """Smallest half-split basis covering all relaxed constraint polynomials.

    The constraint support is the union over: alpha, every eps-weighted phi_q,
    every template monomial, and the Lie derivative of every template monomial
    along every mode.  Each support monomial contributes its floor/ceil degree
    halves, so it is always a product of two basis elements; the constant and
    the coordinates are kept unconditionally for point lifting and exclusion.

    ``depth`` > 1 additionally includes every monomial of total degree up to
    ``depth``.  The extra members create product aliases whose consistency
    constraints tighten the relaxation when the minimal basis admits spurious
    mixed witnesses.
    """
    if not template:
        raise ValueError("empty template")
    n = plant.n
    support: set = set()
    polys: List[Polynomial] = [alpha, *phis]
    for m in template:
        as_poly = Polynomial.monomial(dict(m.powers))
        polys.append(as_poly)
        for mode in plant.modes:
            polys.append(as_poly.lie_derivative(mode.field))
    for p in polys:
        support.update(p.monomials())

    members = {ONE}
    members.update(Monomial({i: 1}) for i in range(n))
    if depth > 1:
        frontier = [ONE]
        for _ in range(depth):
            frontier = [m * Monomial({i: 1}) for m in frontier for i in range(n)]
            members.update(frontier)
    for mono in support:
        lo, hi = _half_split(mono)
        members.add(lo)
        members.add(hi)
    ordered = tuple(sorted(members, key=lambda m: m.grlex_key()))
    index = {m: i for i, m in enumerate(ordered)}

    pair_table: Dict[Monomial, List[Tuple[int, int]]] = {}
    for i, mi in enumerate(ordered):
        for j in range(i, len(ordered)):
            prod = mi * ordered[j]
            pair_table.setdefault(prod, []).append((i, j))
    frozen = {k: tuple(v) for k, v in pair_table.items()}
    return MonomialBasis(monomials=ordered, index=index, pair_table=frozen)


def build_lifted_box(basis: MonomialBasis, box: Box) -> LiftedBox:
    B = basis.size
    lower = np.zeros((B, B))
    upper = np.zeros((B, B))
    for i, mi in enumerate(basis.monomials):
        for j in range(i, B):
            prod = Polynomial.monomial(dict((mi * basis.monomials[j]).powers))
            lo, hi = prod.interval_eval(box)
            lower[i, j] = lower[j, i] = lo
            upper[i, j] = upper[j, i] = hi
    return LiftedBox(lower=lower, upper=upper)


def lift_point(basis: MonomialBasis, x: np.ndarray) -> np.ndarray:
    """Exact rank-1 moment matrix of a concrete point."""
    v = basis.evaluate(np.asarray(x, dtype=float))
    return np.outer(v, v)


def assemble(
    plant: SwitchedPlant,
    template: Sequence[Monomial],
    alpha: Polynomial,
    phis: Sequence[PhiFunction],
    eps: Sequence[float],
    spec: StabilitySpec,
    depth: int = 1,
) -> RelaxedProblem:
    """Build all Gram matrices and the lifted box for one synthesis problem.

    The exclusion threshold reuses the positivity functional: counterexamples
    must satisfy <G, Z> strictly above alpha's value on the boundary of the
    excluded region (0 for the origin, alpha at radius r for a target ball).
    """
    if len(phis) != len(plant.modes) or len(eps) != len(plant.modes):
        raise ValueError("need one phi and one eps per mode")
    for e in eps:
        if e < 0.0:
            raise ValueError("eps must be non-negative")
    phi_polys = [phi.as_polynomial() for phi in phis]
    basis = build_basis(plant, template, alpha, phi_polys, depth=depth)
    lifted = build_lifted_box(basis, plant.domain)
    G = basis.gram(alpha)
    GQ = tuple(
        basis.gram(phi_p.scale(e)) if e > 0.0 else np.zeros((basis.size, basis.size))
        for phi_p, e in zip(phi_polys, eps)
    )
    F = tuple(basis.gram(Polynomial.monomial(dict(m.powers))) for m in template)
    Fq = tuple(
        tuple(
            basis.gram(
                -Polynomial.monomial(dict(m.powers)).lie_derivative(mode.field)
            )
            for m in template
        )
        for mode in plant.modes
    )
    if spec.kind == "RS":
        # alpha is radially monotone (a positive multiple of sum x_i^2), so its
        # value at radius r separates the target ball from the rest of P.
        r = spec.target_radius
        probe = np.zeros(plant.n)
        probe[0] = r
        threshold = alpha.eval(probe)
    else:
        threshold = 0.0
    return RelaxedProblem(
        basis=basis, lifted_box=lifted, G=G, GQ=GQ, F=F, Fq=Fq,
        exclusion_threshold=float(threshold), template=tuple(template),
        eps=tuple(float(e) for e in eps),
    )
