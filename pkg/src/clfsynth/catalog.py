"""The 21-system benchmark catalog.

Each system ships as a model JSON file under ``data/benchmarks``; this module
holds the builders that generated those files (kept so the catalog can be
regenerated or extended) plus the loader.  The heater family (systems 9 and
11-14) is produced parametrically by :func:`heater_model`.

Trigonometric systems (19 pendulum, 20 Tora, 21 ducted fan) are polynomialized
with the degree-3 Taylor truncations sin(t) ~ t - t^3/6 and cos(t) ~ 1 - t^2/2,
which keep the equilibrium at the origin; the remainder bound over the stated
domain is recorded in the model's ``defaults.notes``.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

from .plant import ControlAffinePlant, SwitchedPlant, load_model

NUM_SYSTEMS = 21
SWITCHED_IDS = tuple(range(1, 15))
AFFINE_IDS = tuple(range(15, 22))

# Qualitative outcome of the reference evaluation: systems whose failure is
# tolerated by the benchmark pattern (relaxation gap for 2, scale for 21).
ALLOWED_FAIL_IDS = (2, 21)


def _term(coeff: float, **powers: int) -> dict:
    return {"coeff": coeff, "powers": {k: v for k, v in powers.items() if v}}


def _lin(variables: Sequence[str], coeffs: Sequence[float], const: float = 0.0) -> list:
    terms = [
        _term(c, **{v: 1}) for v, c in zip(variables, coeffs) if c != 0.0
    ]
    if const != 0.0:
        terms.append(_term(const))
    return terms


def _linear_modes(variables: Sequence[str], mats: Sequence[Sequence[Sequence[float]]],
                  consts: Sequence[Sequence[float]] | None = None) -> list:
    modes = []
    for k, A in enumerate(mats):
        b = consts[k] if consts is not None else [0.0] * len(variables)
        modes.append({
            "id": f"q{k + 1}",
            "field": [_lin(variables, row, bi) for row, bi in zip(A, b)],
        })
    return modes


def _model(name, variables, lower, upper, spec, defaults, **kw) -> dict:
    doc = {
        "name": name,
        "variables": list(variables),
        "domain": {"lower": list(lower), "upper": list(upper)},
        "spec": spec,
        "defaults": defaults,
    }
    doc.update(kw)
    return doc


# ---------------------------------------------------------------------------
# Heater family generator
# ---------------------------------------------------------------------------

def heater_model(rooms: int, heater_groups: Sequence[Sequence[int]], name: str,
                 eps: float = 0.001, alpha_scale: float = 0.001) -> dict:
    """Multi-room heater benchmark on a ring of rooms.

    Mode 0 is all-off; mode k > 0 turns the heaters of ``heater_groups[k-1]``
    on.  Per room j (temperatures are offsets from the 21-degree setpoint):

        100 * dt_j = -a_j (t_j + 21) + sum_{k in ring(j)} 5 (t_k + 21) + b_j

    with (a_j, b_j) = (11.5, 55) when room j is heated and (10.5, 5) when not.
    The 3-room instance is fully connected, which coincides with a ring; larger
    instances keep the ring coupling so each room exchanges heat with exactly
    two neighbours and the thermal matrix stays diagonally dominant.
    """
    variables = [f"t{j + 1}" for j in range(rooms)]
    modes = []
    groups: List[Tuple[int, ...]] = [tuple()] + [tuple(g) for g in heater_groups]
    for k, heated in enumerate(groups):
        field = []
        for j in range(rooms):
            a = 11.5 if j in heated else 10.5
            b = 55.0 if j in heated else 5.0
            if rooms == 1:
                neighbors: Tuple[int, ...] = ()
            elif rooms == 2:
                neighbors = (1 - j,)
            else:
                neighbors = ((j - 1) % rooms, (j + 1) % rooms)
            coeffs = [0.0] * rooms
            coeffs[j] = -a / 100.0
            for nb in neighbors:
                coeffs[nb] += 5.0 / 100.0
            const = (21.0 * (5.0 * len(neighbors) - a) + b) / 100.0
            field.append(_lin(variables, coeffs, const))
        modes.append({"id": f"q{k}", "field": field})
    return _model(
        name, variables, [-5.0] * rooms, [5.0] * rooms,
        spec={"kind": "RS", "target_radius": 1.0, "init_radius": 2.5},
        defaults={"eps": eps, "alpha_scale": alpha_scale, "template": "quad"},
        kind="switched", modes=modes,
    )


# ---------------------------------------------------------------------------
# Individual system builders
# ---------------------------------------------------------------------------

def _sys1() -> dict:
    mats = [
        [[0.0403, 0.5689], [0.6771, -0.2556]],
        [[0.2617, -0.2747], [1.2134, -0.1331]],
        [[1.4725, -1.2173], [0.0557, -0.0412]],
        [[-0.5217, 0.8701], [-1.4320, 0.8075]],
        [[-2.1707, -1.0106], [-0.0592, 0.6145]],
    ]
    return _model(
        "sys1-switched-linear-2d", ["x", "y"], [-1, -1], [1, 1],
        spec={"kind": "AS"},
        defaults={"eps": 0.01, "alpha_scale": 0.01, "template": "quad"},
        kind="switched", modes=_linear_modes(["x", "y"], mats),
    )


def _sys2() -> dict:
    # DC motor about the operating point (omega = 20, i = 0); source voltage
    # u in {-1, +1} gives two modes.
    B, J, k, R, L = 1e-4, 25e-5, 0.05, 0.5, 15e-4
    v = ["w", "i"]
    modes = []
    for label, u in (("q_minus", -1.0), ("q_plus", 1.0)):
        field = [
            _lin(v, [-B / J, k / J], -B / J * 20.0),
            _lin(v, [-k / L, -R / L], -k / L * 20.0 + u / L),
        ]
        modes.append({"id": label, "field": field})
    return _model(
        "sys2-dc-motor", v, [-10, -10], [10, 10],
        spec={"kind": "RS", "target_radius": 0.5, "init_radius": 4.0},
        defaults={"eps": 0.001, "alpha_scale": 0.01, "template": "quad"},
        kind="switched", modes=modes,
    )


def _sys3() -> dict:
    v = ["i", "v"]
    modes = [
        {"id": "q1", "field": [
            _lin(v, [0.0167, 0.0], 0.3558),
            _lin(v, [0.0, -0.0142], -0.08023),
        ]},
        {"id": "q2", "field": [
            _lin(v, [-0.0183, -0.0663], -0.0660),
            _lin(v, [0.0711, -0.0142], 0.0158),
        ]},
    ]
    return _model(
        "sys3-dcdc-boost", v, [-0.7, -0.7], [0.45, 0.7],
        spec={"kind": "RS", "target_radius": 0.04, "init_radius": 0.3},
        defaults={"eps": 0.0001, "alpha_scale": 0.0001, "template": "quad"},
        kind="switched", modes=modes,
    )


def _sys4() -> dict:
    v = ["x1", "x2"]
    common_x1 = _lin(v, [-1.5, -1.0]) + [_term(-0.5, x1=3)]
    modes = [
        {"id": "q1", "field": [common_x1, _lin(v, [1.0, 0.0], 2.0) + [_term(-1.0, x2=2)]]},
        {"id": "q2", "field": [common_x1, _lin(v, [1.0, -1.0])]},
        {"id": "q3", "field": [
            _lin(v, [-1.5, -1.0], 2.0) + [_term(-0.5, x1=3)],
            _lin(v, [1.0, 0.0], 10.0),
        ]},
    ]
    return _model(
        "sys4-tulip-2d", v, [-2.25, -3.25], [2.75, 3.25],
        spec={"kind": "RS", "target_radius": 0.25, "init_radius": 1.0},
        defaults={"eps": 0.01, "alpha_scale": 0.1, "template": "quad"},
        kind="switched", modes=modes,
    )


def _sys5() -> dict:
    mats = [
        [[1.8631, -0.0053, 0.9129], [0.2681, -6.4962, 0.0370], [2.2497, -6.7180, 1.6428]],
        [[-2.4311, -5.1032, 0.4565], [-0.0869, 0.0869, 0.0185], [0.0369, -5.9869, 0.8214]],
        [[0.0372, -0.0821, -2.7388], [0.1941, 0.2904, -0.1110], [-1.0360, 3.0486, -4.9284]],
    ]
    return _model(
        "sys5-switched-linear-3d", ["x", "y", "z"], [-1] * 3, [1] * 3,
        spec={"kind": "AS"},
        defaults={"eps": 0.1, "alpha_scale": 0.1, "template": "quad"},
        kind="switched", modes=_linear_modes(["x", "y", "z"], mats),
    )


def _sys6() -> dict:
    mats = [
        [[0.1764, 0.8192, -0.3179], [-1.8379, -0.2346, -0.7963], [-1.5023, -1.6316, 0.6908]],
        [[-0.0420, -1.0286, 0.6892], [0.3240, 0.0994, 1.8833], [0.5065, -0.1164, 0.3254]],
        [[-0.0952, -1.7313, 0.3868], [0.0312, 0.4788, 0.0540], [-0.6138, -0.4478, -0.4861]],
        [[0.2445, 0.1338, 1.1991], [0.7183, -1.0062, -2.5773], [0.1535, 1.3065, -2.0863]],
        [[-1.4132, -1.4928, -0.3459], [-0.5918, -0.0867, 0.9863], [0.5189, -0.0126, 0.6433]],
    ]
    return _model(
        "sys6-switched-linear-3d-5mode", ["x", "y", "z"], [-3] * 3, [3] * 3,
        spec={"kind": "AS"},
        defaults={"eps": 0.1, "alpha_scale": 0.1, "template": "quad"},
        kind="switched", modes=_linear_modes(["x", "y", "z"], mats),
    )


def _sys7() -> dict:
    mats = [
        [[4.15, -1.06, -6.7], [5.74, 4.78, -4.68], [26.38, -6.38, -8.29]],
        [[-3.2, -7.6, -2.0], [0.9, 1.2, -1.0], [1.0, 6.0, 5.0]],
        [[5.75, -16.48, -2.41], [9.51, -9.49, 19.55], [16.19, 4.64, 14.05]],
        [[-12.38, 18.42, 0.54], [-11.9, 3.24, -16.32], [-26.5, -8.64, -16.6]],
    ]
    consts = [
        [1.0, -4.0, 1.0],
        [4.0, -2.0, -1.0],
        [-2.0, 1.0, -1.0],
        [-1.0, 2.0, 1.0],
    ]
    return _model(
        "sys7-no-equilibrium-3d", ["x", "y", "z"], [-1] * 3, [1] * 3,
        spec={"kind": "RS", "target_radius": 0.1, "init_radius": 0.5},
        defaults={"eps": 0.01, "alpha_scale": 0.05, "template": "quad"},
        kind="switched", modes=_linear_modes(["x", "y", "z"], mats, consts),
    )


def _sys8() -> dict:
    v = ["tc", "t1", "t2"]
    row_t1 = _lin(v, [4.04, -7.13, 2.85], 4.04)
    row_t2 = _lin(v, [4.04, 2.85, -7.13], 4.04)
    modes = [
        {"id": "q1", "field": [_lin(v, [-9.26, 2.25, 2.25], -14.54), row_t1, row_t2]},
        {"id": "q2", "field": [_lin(v, [-4.5, 2.25, 2.25], 4.5), row_t1, row_t2]},
    ]
    return _model(
        "sys8-radiant-3d", v, [-6] * 3, [6] * 3,
        spec={"kind": "RS", "target_radius": 1.0, "init_radius": 3.0},
        defaults={"eps": 0.01, "alpha_scale": 1.0, "c0": 10.0, "template": "quad"},
        kind="switched", modes=modes,
    )


def _sys9() -> dict:
    doc = heater_model(3, [[0], [1], [2]], "sys9-heater-3room")
    doc["defaults"]["eps"] = 0.001
    doc["defaults"]["alpha_scale"] = 0.001
    return doc


def _sys10() -> dict:
    v = ["w", "x", "y", "z"]
    mats = [
        [[-0.693, -1.099, 2.197, 3.296], [0.0, -1.792, 2.197, 4.394],
         [0.0, -1.097, 1.504, 2.197], [0.0, 0.0, 0.0, 0.406]],
        [[-1.792, -1.099, 2.197, 1.099], [0.0, 0.406, -2.197, 0.0],
         [0.0, 0.0, -0.693, 0.0], [-2.197, -1.099, 2.197, 1.504]],
        [[0.406, 0.0, 0.0, 0.0], [1.099, -0.144, 0.549, -0.549],
         [0.0, 0.549, -0.144, -0.549], [1.099, 0.0, 0.0, -0.693]],
        [[-0.693, 2.0, 0.0, 0.0], [0.0, -0.693, 0.0, 0.0],
         [0.0, 0.0, -0.693, 0.0], [0.0, 4.0, -4.0, -0.693]],
    ]
    u_cols = [
        [-7.820, -8.735, -2.746, 3.244],
        [6.696, 4.734, 2.773, 4.263],
        [0.811, 1.910, 3.871, 4.970],
        [1.863, 4.159, 2.773, -1.069],
    ]
    modes = []
    for k in range(4):
        for u in (-1.0, 1.0):
            consts = [u * c for c in u_cols[k]]
            modes.append({
                "id": f"q{k + 1}{'p' if u > 0 else 'm'}",
                "field": [_lin(v, row, ci) for row, ci in zip(mats[k], consts)],
            })
    return _model(
        "sys10-switched-lqr-4d", v, [-1] * 4, [1] * 4,
        spec={"kind": "RS", "target_radius": 0.1, "init_radius": 0.1},
        defaults={"eps": 0.001, "alpha_scale": 0.001, "template": "quad"},
        kind="switched", modes=modes,
    )


def _sys11() -> dict:
    return heater_model(4, [[0], [1], [2], [3]], "sys11-heater-4room")


def _sys12() -> dict:
    return heater_model(5, [[0], [1], [2], [3], [4]], "sys12-heater-5room")


def _sys13() -> dict:
    return heater_model(6, [[0, 3], [1, 4], [2, 5]], "sys13-heater-6room")


def _sys14() -> dict:
    return heater_model(9, [[0, 3, 6], [1, 4, 7], [2, 5, 8]], "sys14-heater-9room")


def _sys15() -> dict:
    v = ["x", "y"]
    return _model(
        "sys15-harmonic-oscillator", v, [-5, -5], [5, 5],
        spec={"kind": "AS"},
        defaults={"eps": 0.1, "alpha_scale": 1.0, "c0": 10.0, "template": "quad"},
        kind="affine",
        drift=[_lin(v, [0.0, 1.0]), _lin(v, [-1.0, 0.0])],
        g=[[[]], [[_term(1.0)]]],
        vertices=[[-1.0], [1.0]],
    )


def _sys16() -> dict:
    v = ["x", "y"]
    return _model(
        "sys16-sliding-cubic", v, [-1, -1], [1, 1],
        spec={"kind": "AS"},
        defaults={"eps": 0.0, "alpha_scale": 1.0, "c0": 10.0, "template": "quad"},
        kind="affine",
        drift=[[], [_term(1.0, x=1, y=2)]],
        g=[[[_term(1.0)]], [[]]],
        vertices=[[-4.0], [4.0]],
    )


def _sys17() -> dict:
    v = ["x", "y"]
    # s(x, y) = 0.1 + (x + y)^2
    s = [_term(0.1), _term(1.0, x=2), _term(2.0, x=1, y=1), _term(1.0, y=2)]
    neg_x_s = [_term(-0.1, x=1), _term(-1.0, x=3), _term(-2.0, x=2, y=1), _term(-1.0, x=1, y=2)]
    x_s = [_term(0.1, x=1), _term(1.0, x=3), _term(2.0, x=2, y=1), _term(1.0, x=1, y=2)]
    return _model(
        "sys17-sliding-surface", v, [-5, -5], [5, 5],
        spec={"kind": "AS"},
        defaults={"eps": 0.05, "alpha_scale": 1.0, "c0": 10.0, "template": "quad"},
        kind="affine",
        drift=[neg_x_s, x_s],
        g=[[[]], [list(s)]],
        vertices=[[-2.0], [2.0]],
    )


def _sys18() -> dict:
    v = ["x", "y"]
    return _model(
        "sys18-cubic-integrator", v, [-10, -10], [10, 10],
        spec={"kind": "AS"},
        defaults={"eps": 0.0, "alpha_scale": 1.0, "c0": 10.0, "template": "quad"},
        kind="affine",
        drift=[[_term(1.0, y=1), _term(-1.0, x=3)], []],
        g=[[[]], [[_term(1.0)]]],
        vertices=[[-1.0], [1.0]],
    )


def _sys19() -> dict:
    v = ["th", "om"]
    # sin(th) ~ th - th^3/6 on [-1, 1]: |remainder| <= 1/120.
    sin_t = [_term(1.0, th=1), _term(-1.0 / 6.0, th=3)]
    cos_t = [_term(1.0), _term(-0.5, th=2)]
    drift = [
        [_term(1.0, om=1)],
        [_term(4.9, th=1), _term(-4.9 / 6.0, th=3), _term(-1.0, om=1)],
    ]
    return _model(
        "sys19-inverted-pendulum", v, [-1, -3], [1, 3],
        spec={"kind": "AS"},
        defaults={
            "eps": 1.0, "alpha_scale": 1.0, "c0": 10.0, "template": "quad",
            "notes": "sin/cos truncated at degree 3; |sin rem| <= 1/120, "
                     "|cos rem| <= 1/24 on |th| <= 1",
        },
        kind="affine",
        drift=drift,
        g=[[[]], [list(cos_t)]],
        vertices=[[-30.0], [30.0]],
    )


def _sys20() -> dict:
    v = ["w", "x", "y", "z"]
    template = [
        _term(1.0, w=2), _term(1.0, x=2), _term(1.0, y=2), _term(1.0, z=2),
        _term(1.0, x=1, y=1), _term(1.0, w=1, y=1), _term(1.0, w=1, y=3),
        _term(1.0, y=4), _term(1.0, y=6),
    ]
    drift = [
        [_term(1.0, x=1)],
        [_term(-1.0, w=1), _term(0.1, y=1), _term(-0.1 / 6.0, y=3)],
        [_term(1.0, z=1)],
        [],
    ]
    return _model(
        "sys20-tora", v, [-1] * 4, [1] * 4,
        spec={"kind": "AS"},
        defaults={
            "eps": 0.0, "alpha_scale": 1.0, "c0": 10.0, "template": template,
            "notes": "sin truncated at degree 3; |rem| <= 1/120 on |y| <= 1",
        },
        kind="affine",
        drift=drift,
        g=[[[]], [[]], [[]], [[_term(1.0)]]],
        vertices=[[-10.0], [10.0]],
    )


def _sys21() -> dict:
    v = ["x", "y", "th", "vx", "vy", "vth"]
    m, grav, d, r, J = 11.2, 0.28, 0.1, 0.156, 0.0462
    sin_t = [_term(1.0, th=1), _term(-1.0 / 6.0, th=3)]
    cos_t = [_term(1.0), _term(-0.5, th=2)]
    drift = [
        [_term(1.0, vx=1)],
        [_term(1.0, vy=1)],
        [_term(1.0, vth=1)],
        [_term(-grav, th=1), _term(grav / 6.0, th=3), _term(-d / m, vx=1)],
        [_term(-grav / 2.0, th=2), _term(-d / m, vy=1)],
        [],
    ]
    g_mat = [
        [[], []],
        [[], []],
        [[], []],
        [[_term(1.0 / m), _term(-0.5 / m, th=2)],
         [_term(-1.0 / m, th=1), _term(1.0 / (6.0 * m), th=3)]],
        [[_term(1.0 / m, th=1), _term(-1.0 / (6.0 * m), th=3)],
         [_term(1.0 / m), _term(-0.5 / m, th=2)]],
        [[_term(r / J)], []],
    ]
    vertices = [[u1, u2] for u1 in (-10.0, 10.0) for u2 in (-10.0, 10.0)]
    return _model(
        "sys21-ducted-fan", v, [-1] * 6, [1] * 6,
        spec={"kind": "AS"},
        defaults={
            "eps": 0.0, "alpha_scale": 1.0, "c0": 10.0, "template": "quad",
            "notes": "sin/cos truncated at degree 3 on |th| <= 1; "
                     "domain not stated in the source, unit box assumed",
        },
        kind="affine",
        drift=drift,
        g=g_mat,
        vertices=vertices,
    )


_BUILDERS = {
    1: _sys1, 2: _sys2, 3: _sys3, 4: _sys4, 5: _sys5, 6: _sys6, 7: _sys7,
    8: _sys8, 9: _sys9, 10: _sys10, 11: _sys11, 12: _sys12, 13: _sys13,
    14: _sys14, 15: _sys15, 16: _sys16, 17: _sys17, 18: _sys18, 19: _sys19,
    20: _sys20, 21: _sys21,
}


def build_model_doc(bench_id: int) -> dict:
    if bench_id not in _BUILDERS:
        raise KeyError(f"unknown benchmark id {bench_id}")
    return _BUILDERS[bench_id]()


def data_dir() -> Path:
    return Path(importlib.resources.files("clfsynth")) / "data" / "benchmarks"


def regenerate(target: Union[str, Path, None] = None) -> None:
    """Write all 21 model files (used once at build time; kept for extension)."""
    target = Path(target) if target is not None else data_dir()
    target.mkdir(parents=True, exist_ok=True)
    for bench_id in range(1, NUM_SYSTEMS + 1):
        doc = build_model_doc(bench_id)
        path = target / f"sys{bench_id:02d}.json"
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_benchmark(bench_id: int) -> Union[SwitchedPlant, ControlAffinePlant]:
    path = data_dir() / f"sys{bench_id:02d}.json"
    if not path.exists():
        raise FileNotFoundError(f"benchmark file missing: {path}")
    return load_model(str(path))


def benchmark_catalog() -> List[Tuple[int, Union[SwitchedPlant, ControlAffinePlant]]]:
    """All 21 systems with their catalog defaults attached, in id order."""
    return [(i, load_benchmark(i)) for i in range(1, NUM_SYSTEMS + 1)]
