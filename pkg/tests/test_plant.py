"""Model schema, validation invariants, and the affine-to-switched reduction."""

import numpy as np
import pytest

from clfsynth.plant import (
    ControlAffinePlant,
    Mode,
    ModelError,
    StabilitySpec,
    SwitchedPlant,
    affine_to_switched,
    load_model,
    quadratic_template,
    resolve_template,
)
from clfsynth.poly import Box, Monomial, Polynomial

X0 = Polynomial.variable(0)
X1 = Polynomial.variable(1)


def two_mode_plant():
    return SwitchedPlant(
        name="toy",
        variables=("x", "y"),
        modes=(
            Mode("a", (-X0, X1)),
            Mode("b", (X0, -X1)),
        ),
        domain=Box([-1, -1], [1, 1]),
        spec=StabilitySpec("AS"),
    )


class TestValidation:
    def test_valid_plant_builds(self):
        assert two_mode_plant().n == 2

    def test_no_modes_rejected(self):
        with pytest.raises(ModelError):
            SwitchedPlant("p", ("x",), (), Box([-1], [1]), StabilitySpec("AS"))

    def test_field_dimension_mismatch(self):
        with pytest.raises(ModelError):
            SwitchedPlant(
                "p", ("x", "y"), (Mode("a", (-X0,)),),
                Box([-1, -1], [1, 1]), StabilitySpec("AS"),
            )

    def test_as_needs_equilibrium_mode(self):
        drift = (X0 + Polynomial.constant(1.0),)
        with pytest.raises(ModelError):
            SwitchedPlant(
                "p", ("x",), (Mode("a", drift),),
                Box([-1], [1]), StabilitySpec("AS"),
            )

    def test_bad_spec_kind(self):
        with pytest.raises(ModelError):
            StabilitySpec("XX")

    def test_as_spec_forbids_target_radius(self):
        with pytest.raises(ModelError):
            StabilitySpec("AS", target_radius=0.5)

    def test_affine_requires_origin_in_input_polytope(self):
        with pytest.raises(ModelError):
            ControlAffinePlant(
                "p", ("x",), (Polynomial.zero(),),
                ((Polynomial.constant(1.0),),),
                ((1.0,), (2.0,)),  # u in [1, 2]: 0 not inside
                Box([-1], [1]), StabilitySpec("AS"),
            )


class TestAffineReduction:
    def make_affine(self):
        # xdot = -x + u, udot in conv{-1, 1}
        return ControlAffinePlant(
            "aff", ("x",), (-X0,),
            ((Polynomial.constant(1.0),),),
            ((-1.0,), (1.0,)),
            Box([-2], [2]), StabilitySpec("AS"),
        )

    def test_one_mode_per_vertex(self):
        sw = affine_to_switched(self.make_affine())
        assert len(sw.modes) == 2
        assert sw.from_affine

    def test_vertex_fields(self):
        sw = affine_to_switched(self.make_affine())
        x = np.array([0.5])
        vals = sorted(m.field[0].eval(x) for m in sw.modes)
        # f(x) + g(x) u at u = -1 and u = +1: -x - 1 and -x + 1.
        assert vals == pytest.approx([-1.5, 0.5])

    def test_domain_and_spec_preserved(self):
        a = self.make_affine()
        sw = affine_to_switched(a)
        assert sw.domain == a.domain
        assert sw.spec == a.spec


class TestTemplate:
    def test_quadratic_template_homogeneous(self):
        t = quadratic_template(3, include_linear=False)
        assert len(t) == 6  # x^2 y^2 z^2 xy xz yz
        assert all(m.degree == 2 for m in t)

    def test_quadratic_template_with_linear(self):
        t = quadratic_template(2, include_linear=True)
        assert len(t) == 5

    def test_resolve_quad_keyword(self):
        plant = two_mode_plant()
        t = resolve_template(plant, "quad")
        assert all(m.degree == 2 for m in t)

    def test_resolve_explicit_passthrough(self):
        plant = two_mode_plant()
        explicit = (Monomial({0: 2}), Monomial({1: 4}))
        assert resolve_template(plant, explicit) == explicit


class TestLoadModel:
    def doc(self):
        return {
            "name": "toy",
            "variables": ["x", "y"],
            "domain": {"lower": [-1, -1], "upper": [1, 1]},
            "spec": {"kind": "AS"},
            "modes": [
                {"id": "a", "field": [[{"coeff": -1.0, "x": 1}], [{"coeff": 1.0, "y": 1}]]},
                {"id": "b", "field": [[{"coeff": 1.0, "x": 1}], [{"coeff": -1.0, "y": 1}]]},
            ],
        }

    def test_round_trip_eval(self):
        plant = load_model(self.doc())
        assert isinstance(plant, SwitchedPlant)
        assert plant.modes[0].field[0].eval(np.array([2.0, 0.0])) == -2.0

    def test_missing_field_rejected(self):
        doc = self.doc()
        del doc["modes"]
        with pytest.raises(ModelError):
            load_model(doc)

    def test_unknown_variable_rejected(self):
        doc = self.doc()
        doc["modes"][0]["field"][0] = [{"coeff": 1.0, "z": 1}]
        with pytest.raises(ModelError):
            load_model(doc)
