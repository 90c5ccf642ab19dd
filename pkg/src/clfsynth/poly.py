"""Sparse multivariate polynomial arithmetic over named variables.

A :class:`Monomial` is a canonical sparse exponent map (no zero powers) and a
:class:`Polynomial` is a canonical sparse term map (no zero coefficients,
tolerance ``ZERO_TOL``).  Both are immutable and hashable, so they can be used
as dictionary keys and shared freely between threads.

Coefficients are double-precision floats.  Iteration over terms is always in
graded lexicographic order so that every derived object (moment bases,
serialized JSON, reports) is reproducible across runs.
"""

from __future__ import annotations

import json
from typing import Dict, Iterable, Iterator, Mapping, Sequence, Tuple

import numpy as np

# Canonicalization tolerance: coefficients with |c| <= ZERO_TOL are dropped.
ZERO_TOL = 1e-12


class Monomial:
    """A product of variable powers, stored sparsely as (index, power) pairs."""

    __slots__ = ("_powers", "_hash")

    def __init__(self, powers: Mapping[int, int] | Iterable[Tuple[int, int]] = ()):
        items = powers.items() if isinstance(powers, Mapping) else powers
        cleaned = []
        for idx, exp in items:
            if exp < 0:
                raise ValueError(f"negative exponent {exp} for variable {idx}")
            if exp > 0:
                cleaned.append((int(idx), int(exp)))
        cleaned.sort()
        self._powers: Tuple[Tuple[int, int], ...] = tuple(cleaned)
        self._hash = hash(self._powers)

    @property
    def powers(self) -> Tuple[Tuple[int, int], ...]:
        return self._powers

    @property
    def degree(self) -> int:
        return sum(e for _, e in self._powers)

    def exponent(self, var: int) -> int:
        for idx, exp in self._powers:
            if idx == var:
                return exp
        return 0

    def variables(self) -> Tuple[int, ...]:
        return tuple(idx for idx, _ in self._powers)

    def dense(self, n: int) -> Tuple[int, ...]:
        out = [0] * n
        for idx, exp in self._powers:
            if idx >= n:
                raise ValueError(f"monomial uses variable {idx}, only {n} declared")
            out[idx] = exp
        return tuple(out)

    def __mul__(self, other: "Monomial") -> "Monomial":
        merged: Dict[int, int] = dict(self._powers)
        for idx, exp in other._powers:
            merged[idx] = merged.get(idx, 0) + exp
        return Monomial(merged)

    def grlex_key(self) -> Tuple:
        # Graded order first, then lexicographic on the sparse exponent list.
        # Negated exponents make x0^2 sort before x0*x1 at equal degree.
        return (self.degree, tuple((idx, -exp) for idx, exp in self._powers))

    def __eq__(self, other) -> bool:
        return isinstance(other, Monomial) and self._powers == other._powers

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        if not self._powers:
            return "1"
        return "*".join(
            f"x{idx}" if exp == 1 else f"x{idx}^{exp}" for idx, exp in self._powers
        )


ONE = Monomial()


class Polynomial:
    """Sparse polynomial: canonical map from :class:`Monomial` to coefficient."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Monomial, float] | Iterable[Tuple[Monomial, float]] = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        collected: Dict[Monomial, float] = {}
        for mono, coeff in items:
            c = collected.get(mono, 0.0) + float(coeff)
            collected[mono] = c
        self._terms: Dict[Monomial, float] = {
            m: c for m, c in sorted(collected.items(), key=lambda t: t[0].grlex_key())
            if abs(c) > ZERO_TOL
        }

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero() -> "Polynomial":
        return Polynomial()

    @staticmethod
    def constant(c: float) -> "Polynomial":
        return Polynomial({ONE: c})

    @staticmethod
    def variable(idx: int) -> "Polynomial":
        return Polynomial({Monomial({idx: 1}): 1.0})

    @staticmethod
    def monomial(powers: Mapping[int, int], coeff: float = 1.0) -> "Polynomial":
        return Polynomial({Monomial(powers): coeff})

    # -- views --------------------------------------------------------------

    @property
    def terms(self) -> Mapping[Monomial, float]:
        return self._terms

    def monomials(self) -> Tuple[Monomial, ...]:
        return tuple(self._terms.keys())

    def coefficient(self, mono: Monomial) -> float:
        return self._terms.get(mono, 0.0)

    @property
    def degree(self) -> int:
        """Maximum total degree; 0 for the zero polynomial."""
        return max((m.degree for m in self._terms), default=0)

    def min_degree(self) -> int:
        return min((m.degree for m in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def variables(self) -> Tuple[int, ...]:
        seen = set()
        for m in self._terms:
            seen.update(m.variables())
        return tuple(sorted(seen))

    def coeff_l1(self) -> float:
        return sum(abs(c) for c in self._terms.values())

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "Polynomial") -> "Polynomial":
        merged = dict(self._terms)
        for m, c in other._terms.items():
            merged[m] = merged.get(m, 0.0) + c
        return Polynomial(merged)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        merged = dict(self._terms)
        for m, c in other._terms.items():
            merged[m] = merged.get(m, 0.0) - c
        return Polynomial(merged)

    def __neg__(self) -> "Polynomial":
        return Polynomial({m: -c for m, c in self._terms.items()})

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        out: Dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                prod = m1 * m2
                out[prod] = out.get(prod, 0.0) + c1 * c2
        return Polynomial(out)

    def scale(self, k: float) -> "Polynomial":
        return Polynomial({m: c * k for m, c in self._terms.items()})

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self._terms == other._terms

    def __hash__(self) -> int:
        return hash(tuple(self._terms.items()))

    # -- calculus -----------------------------------------------------------

    def partial(self, var: int) -> "Polynomial":
        out: Dict[Monomial, float] = {}
        for m, c in self._terms.items():
            exp = m.exponent(var)
            if exp == 0:
                continue
            lowered = {idx: e for idx, e in m.powers if idx != var}
            if exp > 1:
                lowered[var] = exp - 1
            dm = Monomial(lowered)
            out[dm] = out.get(dm, 0.0) + c * exp
        return Polynomial(out)

    def lie_derivative(self, field: Sequence["Polynomial"]) -> "Polynomial":
        """Directional derivative along ``field``: sum_i (dp/dx_i) * field_i.

        ``field`` must have one component per state variable; any variable the
        polynomial uses must be covered.
        """
        n = len(field)
        for v in self.variables():
            if v >= n:
                raise ValueError(
                    f"polynomial uses variable {v} but field has {n} components"
                )
        total = Polynomial.zero()
        for i in range(n):
            dp = self.partial(i)
            if not dp.is_zero():
                total = total + dp * field[i]
        return total

    # -- evaluation ---------------------------------------------------------

    def __call__(self, point: Sequence[float]) -> float:
        return self.eval(point)

    def eval(self, point: Sequence[float]) -> float:
        pt = np.asarray(point, dtype=float)
        for v in self.variables():
            if v >= pt.shape[0]:
                raise ValueError(
                    f"polynomial uses variable {v} but point has {pt.shape[0]} coords"
                )
        total = 0.0
        for m, c in self._terms.items():
            val = c
            for idx, exp in m.powers:
                val *= pt[idx] ** exp
            total += val
        return float(total)

    def pack(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Return (coeffs, exponent matrix) arrays for vectorized evaluation."""
        t = len(self._terms)
        coeffs = np.empty(t, dtype=np.float64)
        exps = np.zeros((t, n), dtype=np.int64)
        for k, (m, c) in enumerate(self._terms.items()):
            coeffs[k] = c
            for idx, exp in m.powers:
                if idx >= n:
                    raise ValueError(f"monomial uses variable {idx}, only {n} declared")
                exps[k, idx] = exp
        return coeffs, exps

    def interval_eval(self, box: "Box") -> Tuple[float, float]:
        """Sound enclosure of the range of the polynomial over ``box``.

        Per-monomial exact power intervals (even/odd case analysis) multiplied
        together, then interval-summed.  The result contains the true range but
        is not necessarily tight.
        """
        lo_total, hi_total = 0.0, 0.0
        for m, c in self._terms.items():
            lo, hi = 1.0, 1.0
            for idx, exp in m.powers:
                plo, phi = _interval_pow(box.lower[idx], box.upper[idx], exp)
                lo, hi = _interval_mul(lo, hi, plo, phi)
            lo, hi = _interval_mul(lo, hi, c, c)
            lo_total += lo
            hi_total += hi
        return lo_total, hi_total

    # -- serialization ------------------------------------------------------

    def to_json(self, variables: Sequence[str]) -> list:
        """Serialize to the term-list format used by model files.

        Format: ``[{"coeff": c, "powers": {"name": e, ...}}, ...]``.
        """
        out = []
        for m, c in self._terms.items():
            powers = {variables[idx]: exp for idx, exp in m.powers}
            out.append({"coeff": c, "powers": powers})
        return out

    @staticmethod
    def from_json(data: Iterable[Mapping], variables: Sequence[str]) -> "Polynomial":
        index = {name: i for i, name in enumerate(variables)}
        terms: Dict[Monomial, float] = {}
        for entry in data:
            powers = {}
            for name, exp in entry.get("powers", {}).items():
                if name not in index:
                    raise ValueError(f"unknown variable {name!r} in polynomial term")
                powers[index[name]] = int(exp)
            m = Monomial(powers)
            terms[m] = terms.get(m, 0.0) + float(entry["coeff"])
        return Polynomial(terms)

    def __repr__(self) -> str:
        if not self._terms:
            return "0"
        return " + ".join(f"{c:g}*{m!r}" for m, c in self._terms.items())


class Box:
    """Axis-aligned box: per-variable [lower, upper] bounds."""

    __slots__ = ("lower", "upper")

    def __init__(self, lower: Sequence[float], upper: Sequence[float]):
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower/upper must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("box has lower[i] > upper[i]")
        self.lower = lo
        self.upper = hi
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        pt = np.asarray(point, dtype=float)
        return bool(
            np.all(pt >= self.lower - tol) and np.all(pt <= self.upper + tol)
        )

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.dim))

    def vertices(self) -> np.ndarray:
        n = self.dim
        out = np.empty((2 ** n, n))
        for k in range(2 ** n):
            for i in range(n):
                out[k, i] = self.upper[i] if (k >> i) & 1 else self.lower[i]
        return out

    def radius(self) -> float:
        return float(np.max(np.abs(np.stack([self.lower, self.upper]))))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Box)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __repr__(self) -> str:
        parts = ", ".join(
            f"[{lo:g},{hi:g}]" for lo, hi in zip(self.lower, self.upper)
        )
        return f"Box({parts})"


def _interval_pow(lo: float, hi: float, exp: int) -> Tuple[float, float]:
    """Exact interval power using even/odd case analysis."""
    if exp == 0:
        return 1.0, 1.0
    if exp % 2 == 1 or lo >= 0.0:
        return lo ** exp, hi ** exp
    if hi <= 0.0:
        return hi ** exp, lo ** exp
    # Even power over an interval straddling zero.
    return 0.0, max(lo ** exp, hi ** exp)


def _interval_mul(alo: float, ahi: float, blo: float, bhi: float) -> Tuple[float, float]:
    prods = (alo * blo, alo * bhi, ahi * blo, ahi * bhi)
    return min(prods), max(prods)
