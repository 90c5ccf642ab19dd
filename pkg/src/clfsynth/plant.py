"""Plant data model, model-file loading, and the vertex reduction of
control-affine systems to switched systems.

Model JSON schema (the single source of truth for all benchmark systems):

    {
      "name": str,
      "variables": [str, ...],
      "domain": {"lower": [...], "upper": [...]},
      "kind": "switched" | "affine",
      "modes": [{"id": str, "field": [poly, ...]}, ...]          (switched)
      "drift": [poly, ...], "g": [[poly, ...], ...],
      "vertices": [[u1, ...], ...]                                (affine)
      "spec": {"kind": "AS" | "RS", "target_radius": r, "init_radius": r},
      "defaults": {"eps": e, "alpha_scale": a,
                   "template": "quad" | [poly-term, ...]}
    }

Polynomials use the term-list format of :meth:`clfsynth.poly.Polynomial.to_json`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .poly import Box, Monomial, Polynomial


class ModelError(ValueError):
    """Raised for schema violations, dimension mismatches, or invariant failures."""


@dataclass(frozen=True)
class Mode:
    id: str
    field: Tuple[Polynomial, ...]


@dataclass(frozen=True)
class StabilitySpec:
    kind: str  # "AS" | "RS"
    target_radius: float = 0.0
    init_radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("AS", "RS"):
            raise ModelError(f"unknown stability spec kind {self.kind!r}")
        if self.kind == "AS" and self.target_radius != 0.0:
            raise ModelError("AS spec must have target_radius = 0")
        if self.target_radius < 0 or self.init_radius < 0:
            raise ModelError("radii must be non-negative")


@dataclass(frozen=True)
class ModelDefaults:
    """Catalog-supplied synthesis defaults attached to a model file."""

    eps: float = 0.0
    alpha_scale: float = 1.0
    # Half-width of the coefficient search box for the template coefficients;
    # must exceed alpha's scale so positivity has room to hold strictly.
    c0: float = 1.0
    # "quad" expands to the homogeneous quadratic template; otherwise an
    # explicit monomial list.
    template: Union[str, Tuple[Monomial, ...]] = "quad"
    notes: str = ""


@dataclass(frozen=True)
class SwitchedPlant:
    name: str
    variables: Tuple[str, ...]
    modes: Tuple[Mode, ...]
    domain: Box
    spec: StabilitySpec
    defaults: ModelDefaults = dc_field(default_factory=ModelDefaults)
    # Vertex modes of an affine reduction need not vanish at the origin even
    # for an AS drift; the plain-CLF workflow applies there instead.
    from_affine: bool = False

    @property
    def n(self) -> int:
        return len(self.variables)

    def __post_init__(self):
        if not self.modes:
            raise ModelError("plant has no modes")
        if self.domain.dim != self.n:
            raise ModelError("domain dimension does not match variable count")
        for mode in self.modes:
            if len(mode.field) != self.n:
                raise ModelError(
                    f"mode {mode.id!r} has {len(mode.field)} components, expected {self.n}"
                )
        if self.spec.kind == "AS" and not self.from_affine:
            zero = np.zeros(self.n)
            if not any(
                all(abs(c.eval(zero)) <= 1e-9 for c in mode.field)
                for mode in self.modes
            ):
                raise ModelError(
                    "AS spec requires at least one mode with an equilibrium at the origin"
                )

    def mode_ids(self) -> Tuple[str, ...]:
        return tuple(m.id for m in self.modes)


@dataclass(frozen=True)
class ControlAffinePlant:
    name: str
    variables: Tuple[str, ...]
    drift: Tuple[Polynomial, ...]
    input_matrix: Tuple[Tuple[Polynomial, ...], ...]  # n rows, p columns
    input_polytope_vertices: Tuple[Tuple[float, ...], ...]
    domain: Box
    spec: StabilitySpec
    defaults: ModelDefaults = dc_field(default_factory=ModelDefaults)

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def p(self) -> int:
        return len(self.input_matrix[0]) if self.input_matrix else 0

    def __post_init__(self):
        n = self.n
        if len(self.drift) != n or len(self.input_matrix) != n:
            raise ModelError("drift/input matrix must have one row per variable")
        p = self.p
        for row in self.input_matrix:
            if len(row) != p:
                raise ModelError("ragged input matrix")
        if not self.input_polytope_vertices:
            raise ModelError("input polytope has no vertices")
        for v in self.input_polytope_vertices:
            if len(v) != p:
                raise ModelError("input vertex dimension mismatch")
        if self.domain.dim != n:
            raise ModelError("domain dimension does not match variable count")
        if self.spec.kind == "AS":
            zero = np.zeros(n)
            if not all(abs(f.eval(zero)) <= 1e-9 for f in self.drift):
                raise ModelError("AS spec requires drift to vanish at the origin")
            hull = np.asarray(self.input_polytope_vertices, dtype=float)
            if not _origin_in_hull(hull):
                raise ModelError("input polytope must contain u = 0")


def _origin_in_hull(vertices: np.ndarray) -> bool:
    """Check 0 in conv(vertices) by a small LP-free test: solve least squares
    over the simplex via scipy linprog."""
    from scipy.optimize import linprog

    k, p = vertices.shape
    # find lambda >= 0, sum lambda = 1, V^T lambda = 0
    A_eq = np.vstack([vertices.T, np.ones((1, k))])
    b_eq = np.concatenate([np.zeros(p), [1.0]])
    res = linprog(np.zeros(k), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * k, method="highs")
    return bool(res.success)


def affine_to_switched(plant: ControlAffinePlant) -> SwitchedPlant:
    """One switched mode per input-polytope vertex u, with field drift + g*u.

    Justified by linearity of the input in the CLF decrease condition: if any
    convex combination of the vertices decreases V, some vertex does.
    """
    modes = []
    for v in plant.input_polytope_vertices:
        comps = []
        for i in range(plant.n):
            comp = plant.drift[i]
            for j, uj in enumerate(v):
                if uj != 0.0:
                    comp = comp + plant.input_matrix[i][j].scale(uj)
            comps.append(comp)
        label = "q_" + "_".join(f"{u:g}" for u in v)
        modes.append(Mode(id=label, field=tuple(comps)))
    return SwitchedPlant(
        name=plant.name, variables=plant.variables, modes=tuple(modes),
        domain=plant.domain, spec=plant.spec, defaults=plant.defaults,
        from_affine=True,
    )


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------

def quadratic_template(n: int, include_linear: bool) -> Tuple[Monomial, ...]:
    """All degree-2 monomials, optionally with the degree-1 monomials.

    Linear terms are included for region-stability problems (the equilibrium
    is not a fixed point of any single mode there); for asymptotic stability
    the template is the homogeneous quadratic form.
    """
    monos: List[Monomial] = []
    if include_linear:
        monos.extend(Monomial({i: 1}) for i in range(n))
    for i in range(n):
        monos.append(Monomial({i: 2}))
        for j in range(i + 1, n):
            monos.append(Monomial({i: 1, j: 1}))
    return tuple(sorted(monos, key=lambda m: m.grlex_key()))


def resolve_template(
    template: Union[str, Sequence[Monomial]], n: int, spec: StabilitySpec
) -> Tuple[Monomial, ...]:
    if isinstance(template, str):
        if template != "quad":
            raise ModelError(f"unknown template name {template!r}")
        return quadratic_template(n, include_linear=False)
    return tuple(template)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _load_defaults(doc: Mapping, variables: Sequence[str]) -> ModelDefaults:
    d = doc.get("defaults", {})
    template: Union[str, Tuple[Monomial, ...]] = d.get("template", "quad")
    if not isinstance(template, str):
        monos = []
        for entry in template:
            poly = Polynomial.from_json([entry], variables)
            if len(poly.terms) != 1:
                raise ModelError("template entries must be single monomials")
            monos.append(next(iter(poly.terms)))
        template = tuple(monos)
    return ModelDefaults(
        eps=float(d.get("eps", 0.0)),
        alpha_scale=float(d.get("alpha_scale", 1.0)),
        c0=float(d.get("c0", 1.0)),
        template=template,
        notes=str(d.get("notes", "")),
    )


def load_model(source: Union[str, Mapping]) -> Union[SwitchedPlant, ControlAffinePlant]:
    """Construct a plant from a model document (path, JSON text, or dict)."""
    if isinstance(source, Mapping):
        doc = source
    else:
        text = source
        if not text.lstrip().startswith("{"):
            with open(source, "r") as fh:
                text = fh.read()
        doc = json.loads(text)

    try:
        name = doc["name"]
        variables = tuple(doc["variables"])
        domain = Box(doc["domain"]["lower"], doc["domain"]["upper"])
        kind = doc.get("kind", "switched")
        spec_doc = doc.get("spec", {"kind": "AS"})
        spec = StabilitySpec(
            kind=spec_doc.get("kind", "AS"),
            target_radius=float(spec_doc.get("target_radius", 0.0)),
            init_radius=float(spec_doc.get("init_radius", 0.0)),
        )
    except KeyError as exc:
        raise ModelError(f"missing required model field: {exc}") from exc

    defaults = _load_defaults(doc, variables)

    if kind == "switched":
        modes_doc = doc.get("modes", [])
        if not modes_doc:
            raise ModelError("switched model must declare at least one mode")
        modes = tuple(
            Mode(
                id=str(m["id"]),
                field=tuple(Polynomial.from_json(c, variables) for c in m["field"]),
            )
            for m in modes_doc
        )
        return SwitchedPlant(
            name=name, variables=variables, modes=modes, domain=domain,
            spec=spec, defaults=defaults,
        )
    if kind == "affine":
        drift = tuple(Polynomial.from_json(c, variables) for c in doc["drift"])
        g = tuple(
            tuple(Polynomial.from_json(entry, variables) for entry in row)
            for row in doc["g"]
        )
        vertices = tuple(tuple(float(u) for u in v) for v in doc["vertices"])
        return ControlAffinePlant(
            name=name, variables=variables, drift=drift, input_matrix=g,
            input_polytope_vertices=vertices, domain=domain, spec=spec,
            defaults=defaults,
        )
    raise ModelError(f"unknown model kind {kind!r}")
