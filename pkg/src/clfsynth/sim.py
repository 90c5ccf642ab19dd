"""Closed-loop simulation of the synthesized switching controller.

The active mode integrates with fixed-step RK4; at every step the switching
law compares the active mode's decrease rate against its relaxed threshold
-eps*phi/lam and, when that fires, hands control to the eligible mode with
the steepest normalized descent (ties broken by lowest index).  Switch
instants are refined by bisection inside the triggering step.  The audit
checks the certificate's promises on the recorded trace: V non-increasing
between switches, containment in the invariant sublevel region, and the
minimum dwell time.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .engine import Certificate
from .kernels import (
    STATUS_DOMAIN_EXIT,
    STATUS_HORIZON,
    STATUS_NO_ELIGIBLE_MODE,
    STATUS_TARGET_REACHED,
    simulate_switched,
)
from .plant import SwitchedPlant
from .poly import Polynomial

STATUS_NAMES = {
    STATUS_HORIZON: "horizon",
    STATUS_DOMAIN_EXIT: "domain-exit",
    STATUS_TARGET_REACHED: "target-reached",
    STATUS_NO_ELIGIBLE_MODE: "no-eligible-mode",
}


class PreconditionError(ValueError):
    """The initial state is outside the certified invariant region."""


@dataclass(frozen=True)
class SwitchingLaw:
    """The certificate-driven mode selection rule."""

    certificate: Certificate
    vdots: Tuple[Polynomial, ...]
    lam: float

    @property
    def num_modes(self) -> int:
        return len(self.vdots)


@dataclass(frozen=True)
class Trace:
    t: np.ndarray            # (N,)
    x: np.ndarray            # (N, n)
    mode: np.ndarray         # (N,) int
    V: np.ndarray            # (N,)
    Vdot: np.ndarray         # (N,)
    switch_t: np.ndarray     # (S,)
    switch_from: np.ndarray  # (S,) int
    switch_to: np.ndarray    # (S,) int
    status: str
    step: float


@dataclass(frozen=True)
class AuditReport:
    min_switch_gap: Optional[float]
    dwell_bound: Optional[float]
    dwell_ok: bool
    max_v_increase: float
    decrease_tolerance: float
    decrease_ok: bool
    containment_violations: int
    target_entry_time: Optional[float]
    status: str

    @property
    def passed(self) -> bool:
        return (
            self.dwell_ok and self.decrease_ok
            and self.containment_violations == 0
            and self.status != "no-eligible-mode"
            and self.status != "domain-exit"
        )

    def to_json(self) -> Dict:
        return {
            "min_switch_gap": self.min_switch_gap,
            "dwell_bound": self.dwell_bound,
            "dwell_ok": self.dwell_ok,
            "max_v_increase": self.max_v_increase,
            "decrease_tolerance": self.decrease_tolerance,
            "decrease_ok": self.decrease_ok,
            "containment_violations": self.containment_violations,
            "target_entry_time": self.target_entry_time,
            "status": self.status,
            "passed": self.passed,
        }


def make_law(plant: SwitchedPlant, certificate: Certificate) -> SwitchingLaw:
    vdots = tuple(
        certificate.V.lie_derivative(mode.field) for mode in plant.modes
    )
    return SwitchingLaw(certificate=certificate, vdots=vdots, lam=certificate.lam)


def select_mode(law: SwitchingLaw, q_current: int, x: np.ndarray) -> int:
    """The switching rule at one state (reference implementation).

    Keeps the current mode unless its decrease rate has degraded to the
    threshold -eps*phi/lam; then picks, among modes whose decrease rate
    satisfies the full margin -eps*phi, the one minimizing Vdot/phi.
    Raises if the threshold fires and no mode is eligible: the certificate
    promises this cannot happen away from the equilibrium.
    """
    cert = law.certificate
    phi_q = cert.phi[q_current].eval(x)
    vdot_q = law.vdots[q_current].eval(x)
    if vdot_q < -cert.eps[q_current] * phi_q / law.lam:
        return q_current
    best, best_ratio = -1, np.inf
    for q in range(law.num_modes):
        ph = cert.phi[q].eval(x)
        vd = law.vdots[q].eval(x)
        if ph > 0.0 and vd <= -cert.eps[q] * ph:
            ratio = vd / ph
            if ratio < best_ratio - 1e-15:
                best, best_ratio = q, ratio
    if best < 0:
        if float(np.dot(x, x)) == 0.0:
            return q_current
        raise RuntimeError(
            "switching threshold fired with no eligible mode at "
            f"x={np.asarray(x).tolist()}; the certificate promises one exists"
        )
    return best if best != q_current else q_current


# ---------------------------------------------------------------------------
# Packing for the integration kernel
# ---------------------------------------------------------------------------


def _pack_group(polys: Sequence[Polynomial], n: int):
    coeffs: List[np.ndarray] = []
    exps: List[np.ndarray] = []
    off = [0]
    for p in polys:
        c, e = p.pack(n)
        coeffs.append(c)
        exps.append(e.astype(np.int64).reshape(-1, n))
        off.append(off[-1] + len(c))
    return (
        np.concatenate(coeffs) if coeffs else np.zeros(0),
        np.concatenate(exps) if exps else np.zeros((0, n), dtype=np.int64),
        np.array(off, dtype=np.int64),
    )


def pack_closed_loop(
    plant: SwitchedPlant, certificate: Certificate
) -> Dict[str, np.ndarray]:
    n = plant.n
    fields = [comp for mode in plant.modes for comp in mode.field]
    fc, fe, foff = _pack_group(fields, n)
    law = make_law(plant, certificate)
    vdc, vde, vdoff = _pack_group(list(law.vdots), n)
    phc, phe, phoff = _pack_group(
        [p.as_polynomial() for p in certificate.phi], n
    )
    vc, ve = certificate.V.pack(n)
    return {
        "field_coeffs": fc, "field_exps": fe, "field_off": foff,
        "vdot_coeffs": vdc, "vdot_exps": vde, "vdot_off": vdoff,
        "phi_coeffs": phc, "phi_exps": phe, "phi_off": phoff,
        "v_coeffs": vc, "v_exps": ve.astype(np.int64).reshape(-1, n),
        "eps": np.asarray(certificate.eps, dtype=float),
        "lam": float(certificate.lam),
        "p_lo": np.asarray(plant.domain.lower, dtype=float),
        "p_hi": np.asarray(plant.domain.upper, dtype=float),
        "target_radius_sq": float(plant.spec.target_radius) ** 2,
    }


def default_step(certificate: Certificate) -> float:
    """One twentieth of the dwell bound, clamped to a practical range."""
    if certificate.dwell_lb is None or not np.isfinite(certificate.dwell_lb):
        return 1e-3
    return float(min(max(certificate.dwell_lb / 20.0, 1e-4), 1e-2))


def in_invariant_region(
    plant: SwitchedPlant, certificate: Certificate, x: np.ndarray,
    tol: float = 0.0,
) -> bool:
    return bool(
        plant.domain.contains(x, tol)
        and certificate.V.eval(np.asarray(x, dtype=float))
        < certificate.beta_lb + tol
    )


def simulate(
    plant: SwitchedPlant,
    certificate: Certificate,
    x0: Sequence[float],
    horizon: float,
    step: Optional[float] = None,
    q0: Optional[int] = None,
    stride: int = 1,
) -> Trace:
    """Closed-loop run from x0 (must be in the invariant region P*)."""
    x0 = np.asarray(x0, dtype=float)
    if not in_invariant_region(plant, certificate, x0):
        raise PreconditionError(
            f"initial state {x0.tolist()} is outside the invariant region "
            f"(V={certificate.V.eval(x0):.6g}, threshold "
            f"{certificate.beta_lb:.6g})"
        )
    if step is None:
        step = default_step(certificate)
    if step <= 0 or not np.isfinite(horizon):
        raise ValueError("step must be positive and horizon finite")
    law = make_law(plant, certificate)
    if q0 is None:
        # Start in the steepest-descent eligible mode (0 if none is, e.g. at
        # the equilibrium itself).
        best, best_ratio = 0, np.inf
        for q in range(law.num_modes):
            ph = certificate.phi[q].eval(x0)
            vd = law.vdots[q].eval(x0)
            if ph > 0.0 and vd / ph < best_ratio - 1e-15:
                best, best_ratio = q, vd / ph
        q0 = best
    packed = pack_closed_loop(plant, certificate)
    status, t, x, mode, v, vdot, sw_t, sw_from, sw_to = simulate_switched(
        packed, x0, int(q0), float(horizon), float(step), int(stride)
    )
    return Trace(
        t=t, x=x, mode=mode, V=v, Vdot=vdot,
        switch_t=sw_t, switch_from=sw_from, switch_to=sw_to,
        status=STATUS_NAMES[int(status)], step=float(step),
    )


def audit_trace(
    trace: Trace, certificate: Certificate, plant: SwitchedPlant
) -> AuditReport:
    """Check the trace against the certificate's guarantees (report-only)."""
    if len(trace.t) == 0:
        return AuditReport(
            min_switch_gap=None, dwell_bound=certificate.dwell_lb,
            dwell_ok=True, max_v_increase=0.0, decrease_tolerance=0.0,
            decrease_ok=True, containment_violations=0,
            target_entry_time=None, status=trace.status,
        )
    gaps = np.diff(trace.switch_t)
    min_gap = float(np.min(gaps)) if len(gaps) else None
    dwell = certificate.dwell_lb
    dwell_ok = (
        dwell is None or min_gap is None or min_gap >= dwell - trace.step
    )

    # V must not increase between samples that lie within one dwell interval.
    scale = max(1.0, float(np.max(np.abs(trace.V))))
    tol = 10.0 * trace.step ** 4 * scale
    dv = np.diff(trace.V)
    # A sample pair straddling a switch instant is exempt (the mode changed
    # mid-interval, so the pairwise difference mixes two flows).
    crossed = np.zeros(len(dv), dtype=bool)
    for s in trace.switch_t:
        i = int(np.searchsorted(trace.t, s, side="right")) - 1
        if 0 <= i < len(dv):
            crossed[i] = True
    within = dv[~crossed]
    max_inc = float(np.max(within)) if len(within) else 0.0
    decrease_ok = max_inc <= tol

    lo = np.asarray(plant.domain.lower)
    hi = np.asarray(plant.domain.upper)
    inside_box = np.all((trace.x >= lo - 1e-9) & (trace.x <= hi + 1e-9), axis=1)
    below = trace.V < certificate.beta_lb + tol
    containment = int(np.sum(~(inside_box & below)))

    entry = None
    r = plant.spec.target_radius
    if r > 0.0:
        inside = np.sum(trace.x * trace.x, axis=1) <= r * r
        idx = np.argmax(inside) if inside.any() else -1
        if idx >= 0:
            entry = float(trace.t[idx])

    return AuditReport(
        min_switch_gap=min_gap, dwell_bound=dwell, dwell_ok=bool(dwell_ok),
        max_v_increase=max_inc, decrease_tolerance=tol,
        decrease_ok=bool(decrease_ok), containment_violations=containment,
        target_entry_time=entry, status=trace.status,
    )


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def write_trace_csv(
    trace: Trace, path: str, variables: Sequence[str]
) -> None:
    """One row per sample: t, x1..xn, mode, V, Vdot; switches in a sidecar."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *variables, "mode", "V", "Vdot"])
        for i in range(len(trace.t)):
            w.writerow(
                [repr(float(trace.t[i]))]
                + [repr(float(v)) for v in trace.x[i]]
                + [int(trace.mode[i]),
                   repr(float(trace.V[i])), repr(float(trace.Vdot[i]))]
            )
    sidecar = {
        "status": trace.status,
        "step": trace.step,
        "switches": [
            {"t": float(t), "from": int(a), "to": int(b)}
            for t, a, b in zip(trace.switch_t, trace.switch_from, trace.switch_to)
        ],
    }
    with open(path + ".switches.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
