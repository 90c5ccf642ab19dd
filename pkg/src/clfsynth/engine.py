"""Synthesis driver: alternate candidate search and counterexample checking.

The loop keeps a finite witness set, asks the candidate layer for template
coefficients consistent with every witness, and asks the violation programs
for a state refuting the candidate.  On success the candidate is confirmed by
dense sampling, a sublevel threshold certifying positive invariance is
computed, and (when every mode has a positive strictness epsilon and the
degree test certifies the needed bounds) a minimum dwell time is attached.
"""

from __future__ import annotations

import json
import heapq
import time
from dataclasses import dataclass, field as dc_field
from itertools import count, product
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from .candidate import (
    SearchBudgetExceeded,
    WitnessProvenance,
    WitnessRejected,
    WitnessSet,
    add_witness,
    build_system,
    find_candidate,
)
from .phi import BoundCertificate, DwellBound, PhiFunction, dwell_time, lambda_bound, phi_bounded_check
from .plant import ControlAffinePlant, SwitchedPlant, affine_to_switched, resolve_template
from .poly import Box, Monomial, Polynomial
from .relax import RelaxedProblem, assemble, lift_point
from .sdp import ToleranceSet, check_candidate, dump_problem, violation_programs


# ---------------------------------------------------------------------------
# Configuration and result containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisConfig:
    """Knobs for one synthesis run; ``None`` falls back to model defaults."""

    template: Optional[Union[str, Tuple[Monomial, ...]]] = None
    eps: Optional[float] = None
    alpha_scale: Optional[float] = None
    c0: Optional[float] = None
    lam: float = 2.0
    max_iters: int = 200
    seed: int = 0
    confirm_samples: int = 100_000
    tol: ToleranceSet = dc_field(default_factory=ToleranceSet)
    dump_relaxation: Optional[str] = None
    dump_sdp: Optional[str] = None


@dataclass(frozen=True)
class Certificate:
    """Everything needed to deploy and audit the synthesized controller."""

    V: Polynomial
    c: Tuple[float, ...]
    template: Tuple[Monomial, ...]
    phi: Tuple[PhiFunction, ...]
    eps: Tuple[float, ...]
    lambda1: Tuple[Optional[float], ...]
    lambda2: Tuple[Optional[float], ...]
    beta_lb: float
    dwell_lb: Optional[float]
    lam: float
    iterations: int
    witness_count: int
    confirmation: Mapping[str, float]
    variables: Tuple[str, ...]

    def to_json(self) -> Dict:
        return {
            "V": self.V.to_json(self.variables),
            "c": list(self.c),
            "phi": [list(p.d) for p in self.phi],
            "eps": list(self.eps),
            "lambda1": list(self.lambda1),
            "lambda2": list(self.lambda2),
            "beta_lb": self.beta_lb,
            "dwell_lb": self.dwell_lb,
            "lambda": self.lam,
            "iterations": self.iterations,
            "witness_count": self.witness_count,
            "confirmation": dict(self.confirmation),
        }

    def dump(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    condition: Optional[str]
    gamma: float
    positivity_gamma: float
    decrease_gamma: float
    realized: bool


@dataclass(frozen=True)
class SynthesisResult:
    # Success | CandidateUnsat | IterationCap | NumericalFailure |
    # ConfirmationFailed
    status: str
    certificate: Optional[Certificate]
    iterations: int
    witness_count: int
    history: Tuple[IterationRecord, ...]
    reason: Optional[str] = None
    elapsed: float = 0.0

    @property
    def success(self) -> bool:
        return self.status == "Success"


# ---------------------------------------------------------------------------
# Problem setup
# ---------------------------------------------------------------------------


def _as_switched(plant: Union[SwitchedPlant, ControlAffinePlant]) -> SwitchedPlant:
    if isinstance(plant, SwitchedPlant):
        return plant
    return affine_to_switched(plant)


def default_phi(n: int) -> PhiFunction:
    """The sum-of-squares strictness shape used for every benchmark mode."""
    return PhiFunction(d=(1,) * n)


def _setup(plant: SwitchedPlant, config: SynthesisConfig):
    n = plant.n
    defaults = plant.defaults
    template_spec = config.template if config.template is not None else defaults.template
    template = resolve_template(template_spec, n, plant.spec)
    ascale = config.alpha_scale if config.alpha_scale is not None else defaults.alpha_scale
    alpha = sum(
        (Polynomial.monomial({i: 2}, ascale) for i in range(n)), Polynomial.zero()
    )
    eps_val = config.eps if config.eps is not None else defaults.eps
    eps = tuple(float(eps_val) for _ in plant.modes)
    phis = tuple(default_phi(n) for _ in plant.modes)
    c0 = config.c0 if config.c0 is not None else defaults.c0
    m = len(template)
    c_box = (np.full(m, -float(c0)), np.full(m, float(c0)))
    return template, alpha, phis, eps, c_box


# ---------------------------------------------------------------------------
# Confirmation by sampling
# ---------------------------------------------------------------------------


def eval_batch(poly: Polynomial, X: np.ndarray) -> np.ndarray:
    """Evaluate a polynomial at each row of ``X`` (N, n) -> (N,)."""
    n = X.shape[1]
    coeffs, exps = poly.pack(n)
    if len(coeffs) == 0:
        return np.zeros(len(X))
    return np.prod(X[:, None, :] ** exps[None, :, :], axis=2) @ coeffs


def confirm_by_sampling(
    plant: SwitchedPlant,
    c: np.ndarray,
    template: Sequence[Monomial],
    alpha: Polynomial,
    phis: Sequence[PhiFunction],
    eps: Sequence[float],
    samples: int = 100_000,
    seed: int = 0,
    tol: float = 1e-7,
    return_points: bool = False,
) -> Dict[str, float]:
    """Pointwise audit of the certificate conditions on uniform samples.

    Samples are drawn from the domain box; for a target-ball problem the
    excluded ball is removed.  Reports the worst positivity margin
    (V - alpha, should stay >= -tol) and the worst decrease margin
    (-min_q(Vdot_q + eps_q phi_q), should stay >= -tol).  With
    ``return_points`` the worst violating states are returned alongside the
    report so the caller can refute the candidate with them.
    """
    rng = np.random.default_rng(seed)
    n = plant.n
    box = plant.domain
    V = polynomial_from_coefficients(c, template)
    vdots = [V.lie_derivative(mode.field) for mode in plant.modes]
    lo = np.asarray(box.lower)
    hi = np.asarray(box.upper)
    X = rng.uniform(lo, hi, size=(samples, n))
    if plant.spec.kind == "RS":
        r = plant.spec.target_radius
        X = X[np.sum(X * X, axis=1) > r * r]
    pos_margin = eval_batch(V - alpha, X)
    dec = np.full(len(X), np.inf)
    for q, vd in enumerate(vdots):
        g = vd + phis[q].as_polynomial().scale(eps[q])
        dec = np.minimum(dec, eval_batch(g, X))
    dec_margin = -dec
    if return_points:
        bad = []
        if len(X):
            if np.min(pos_margin) < -tol:
                bad.append(X[int(np.argmin(pos_margin))])
            if np.min(dec_margin) < -tol:
                bad.append(X[int(np.argmin(dec_margin))])
        return _confirmation_dict(X, pos_margin, dec_margin, tol), bad
    return _confirmation_dict(X, pos_margin, dec_margin, tol)


def _confirmation_dict(X, pos_margin, dec_margin, tol):
    return {
        "samples": float(len(X)),
        "worst_positivity_margin": float(np.min(pos_margin)) if len(X) else np.inf,
        "worst_decrease_margin": float(np.min(dec_margin)) if len(X) else np.inf,
        "positivity_violations": float(np.sum(pos_margin < -tol)),
        "decrease_violations": float(np.sum(dec_margin < -tol)),
        "tolerance": tol,
    }


def polynomial_from_coefficients(
    c: Sequence[float], template: Sequence[Monomial]
) -> Polynomial:
    total = Polynomial.zero()
    for coeff, mono in zip(c, template):
        total = total + Polynomial.monomial(dict(mono.powers), float(coeff))
    return total


# ---------------------------------------------------------------------------
# Sublevel threshold (minimum of V on the domain boundary)
# ---------------------------------------------------------------------------


def _face_minimum_local(V: Polynomial, box: Box, fixed: int, value: float) -> float:
    """Local minimization of V on one face, used as the incumbent."""
    n = box.dim
    free = [i for i in range(n) if i != fixed]
    if not free:
        x = np.array([value])
        return V.eval(x)
    lo = np.array([box.lower[i] for i in free])
    hi = np.array([box.upper[i] for i in free])

    def full(xf: np.ndarray) -> np.ndarray:
        x = np.empty(n)
        x[free] = xf
        x[fixed] = value
        return x

    grads = [V.partial(i) for i in free]

    def fun(xf):
        x = full(xf)
        return V.eval(x)

    def jac(xf):
        x = full(xf)
        return np.array([g.eval(x) for g in grads])

    best = np.inf
    starts = [0.5 * (lo + hi), lo.copy(), hi.copy()]
    for s in starts:
        res = minimize(fun, s, jac=jac, method="L-BFGS-B", bounds=list(zip(lo, hi)))
        if res.fun < best:
            best = float(res.fun)
    return best


def _face_lower_bound(
    V: Polynomial, box: Box, fixed: int, value: float,
    incumbent: float, rel_tol: float = 1e-6, budget: int = 20_000,
) -> float:
    """Certified lower bound of V on one face via interval branch and bound."""
    n = box.dim
    lower = list(box.lower)
    upper = list(box.upper)
    lower[fixed] = upper[fixed] = value
    root = Box(lower, upper)
    lb0, _ = V.interval_eval(root)
    best_ub = incumbent
    tick = count()
    heap = [(lb0, next(tick), root)]
    global_lb = lb0
    for _ in range(budget):
        if not heap:
            break
        lb, _, b = heapq.heappop(heap)
        global_lb = lb
        if best_ub - lb <= rel_tol * max(1.0, abs(best_ub)):
            break
        widths = [u - l for l, u in zip(b.lower, b.upper)]
        split = int(np.argmax(widths))
        if widths[split] <= 0.0:
            continue
        mid = 0.5 * (b.lower[split] + b.upper[split])
        for child_lo, child_hi in (
            (list(b.lower), [u if i != split else mid for i, u in enumerate(b.upper)]),
            ([l if i != split else mid for i, l in enumerate(b.lower)], list(b.upper)),
        ):
            child = Box(child_lo, child_hi)
            clb, _ = V.interval_eval(child)
            center = np.array([0.5 * (l + u) for l, u in zip(child_lo, child_hi)])
            best_ub = min(best_ub, V.eval(center))
            if clb < best_ub:
                heapq.heappush(heap, (clb, next(tick), child))
    if heap:
        global_lb = min(global_lb, min(entry[0] for entry in heap))
    return global_lb


def _is_convex_quadratic(V: Polynomial, n: int) -> bool:
    if V.degree > 2:
        return False
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            h = V.partial(i).partial(j)
            if h.degree > 0:
                return False
            H[i, j] = h.eval(np.zeros(n))
    return bool(np.min(np.linalg.eigvalsh(0.5 * (H + H.T))) >= -1e-12)


def sublevel_threshold(V: Polynomial, box: Box) -> float:
    """Certified lower bound on the minimum of V over the boundary of the box.

    The sublevel set {V < threshold} intersected with the box cannot touch
    the boundary, so trajectories that keep V non-increasing stay inside.
    Each face minimum is located by bound-constrained local minimization;
    for a convex quadratic V that local minimum is the global face minimum,
    otherwise interval branch and bound certifies it from below.
    """
    convex = _is_convex_quadratic(V, box.dim)
    best = np.inf
    for i in range(box.dim):
        for value in (box.lower[i], box.upper[i]):
            incumbent = _face_minimum_local(V, box, i, value)
            if convex:
                lb = incumbent - 1e-9 * max(1.0, abs(incumbent))
            else:
                lb = _face_lower_bound(V, box, i, value, incumbent)
            best = min(best, lb)
    return float(best)


# ---------------------------------------------------------------------------
# Dwell-time bounds
# ---------------------------------------------------------------------------


def mode_bounds(
    plant: SwitchedPlant,
    V: Polynomial,
    phis: Sequence[PhiFunction],
) -> List[Optional[BoundCertificate]]:
    """Per-mode growth bounds: Vddot_q <= L1 phi_q and phidot_q <= L2 phi_q.

    ``None`` marks a mode whose bound the degree test cannot certify; no
    dwell-time guarantee is then available.
    """
    out: List[Optional[BoundCertificate]] = []
    for q, mode in enumerate(plant.modes):
        vdot = V.lie_derivative(mode.field)
        vddot = vdot.lie_derivative(mode.field)
        phidot = phis[q].as_polynomial().lie_derivative(mode.field)
        if not (phi_bounded_check(vddot, phis[q]) and phi_bounded_check(phidot, phis[q])):
            out.append(None)
            continue
        l1 = lambda_bound(vddot, phis[q], plant.domain)
        l2 = lambda_bound(phidot, phis[q], plant.domain)
        out.append(BoundCertificate(lambda1=l1, lambda2=l2))
    return out


def _dwell_lower_bound(
    eps: Sequence[float],
    bounds: Sequence[Optional[BoundCertificate]],
    lam: float,
) -> Optional[DwellBound]:
    if any(b is None for b in bounds) or any(e <= 0.0 for e in eps):
        return None
    return dwell_time(list(eps), [b for b in bounds if b is not None], lam=lam)


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------


def initial_witnesses(rp: RelaxedProblem, plant: SwitchedPlant,
                      tol: ToleranceSet) -> WitnessSet:
    """Rank-1 lifts of the domain vertices (the standard seeding)."""
    wset = WitnessSet()
    for vtx in product(*zip(plant.domain.lower, plant.domain.upper)):
        try:
            wset = add_witness(
                wset, lift_point(rp.basis, np.array(vtx)),
                WitnessProvenance("initial-vertex", 0), rp, tol,
            )
        except WitnessRejected:
            continue
    return wset


def synthesize(
    plant: Union[SwitchedPlant, ControlAffinePlant],
    config: SynthesisConfig = SynthesisConfig(),
) -> SynthesisResult:
    """Run the full loop and certify the result.

    Success requires: the violation programs find no realizable
    counterexample, and dense sampling confirms the conditions pointwise.
    The certificate then carries the sublevel threshold and, when available,
    the minimum dwell time.
    """
    t0 = time.time()
    sw = _as_switched(plant)
    template, alpha, phis, eps, c_box = _setup(sw, config)
    tol = config.tol
    rp = assemble(sw, template, alpha, list(phis), list(eps), sw.spec)
    if config.dump_relaxation:
        rp.dump(config.dump_relaxation)
    wset = initial_witnesses(rp, sw, tol)
    rng = np.random.default_rng(config.seed)
    history: List[IterationRecord] = []

    status: Optional[str] = None
    reason: Optional[str] = None
    c: Optional[np.ndarray] = None
    iterations = 0
    for it in range(1, config.max_iters + 1):
        iterations = it
        system = build_system(rp, wset, c_box=c_box)
        try:
            c = find_candidate(system)
        except SearchBudgetExceeded as exc:
            status, reason = "NumericalFailure", str(exc)
            break
        if c is None:
            status, reason = "CandidateUnsat", (
                "no coefficients satisfy all witnesses"
            )
            break
        if config.dump_sdp and it == 1:
            for cond, problem in violation_programs(rp, c, tol).items():
                dump_problem(problem, f"{config.dump_sdp}.{cond}.txt")
        report = check_candidate(rp, c, tol, rng)
        history.append(IterationRecord(
            iteration=it, condition=report.condition,
            gamma=float(report.gamma),
            positivity_gamma=float(report.positivity_gamma),
            decrease_gamma=float(report.decrease_gamma),
            realized=report.realized_x is not None,
        ))
        if report.failure:
            status, reason = "NumericalFailure", report.failure
            break
        if not report.found:
            # The relaxed programs see no counterexample; audit pointwise
            # before accepting.  A violation found only by sampling becomes a
            # witness like any other and the loop continues.
            confirmation, bad_points = confirm_by_sampling(
                sw, c, template, alpha, phis, eps,
                samples=config.confirm_samples, seed=config.seed,
                return_points=True,
            )
            if not bad_points:
                status = "Success"
                break
            try:
                for x_bad in bad_points:
                    wset = add_witness(
                        wset, lift_point(rp.basis, np.asarray(x_bad)),
                        WitnessProvenance("confirmation-counterexample", it, ""),
                        rp, tol,
                    )
            except WitnessRejected as exc:
                status, reason = "ConfirmationFailed", (
                    f"sampling found {int(confirmation['positivity_violations'])} "
                    f"positivity and {int(confirmation['decrease_violations'])} "
                    f"decrease violations; refutation stalled ({exc})"
                )
                break
            continue
        try:
            wset = add_witness(
                wset, report.witness,
                WitnessProvenance("sdp-counterexample", it, report.condition or ""),
                rp, tol,
            )
        except WitnessRejected as exc:
            status, reason = "NumericalFailure", (
                f"stalled: counterexample rejected ({exc})"
            )
            break
    else:
        status, reason = "IterationCap", f"no candidate after {config.max_iters} iterations"

    if status != "Success":
        return SynthesisResult(
            status=status, certificate=None, iterations=iterations,
            witness_count=len(wset.matrices), history=tuple(history),
            reason=reason, elapsed=time.time() - t0,
        )

    assert c is not None
    V = polynomial_from_coefficients(c, template)
    beta = sublevel_threshold(V, sw.domain)
    bounds = mode_bounds(sw, V, phis)
    dwell = _dwell_lower_bound(eps, bounds, config.lam)
    certificate = Certificate(
        V=V, c=tuple(float(v) for v in c), template=tuple(template),
        phi=tuple(phis), eps=tuple(eps),
        lambda1=tuple(b.lambda1 if b else None for b in bounds),
        lambda2=tuple(b.lambda2 if b else None for b in bounds),
        beta_lb=float(beta),
        dwell_lb=(float(dwell.delta_lb) if dwell else None),
        lam=config.lam, iterations=iterations,
        witness_count=len(wset.matrices), confirmation=confirmation,
        variables=sw.variables,
    )
    return SynthesisResult(
        status="Success", certificate=certificate, iterations=iterations,
        witness_count=len(wset.matrices), history=tuple(history),
        elapsed=time.time() - t0,
    )
