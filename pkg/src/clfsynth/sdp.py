"""Semidefinite programming layer for the candidate-checking step.

A check is two small cone programs over the moment matrix Z: one looks for a
point where the candidate fails positivity against alpha, the other for a
point where every mode fails the decrease condition.  Both maximize the
violation margin gamma so the returned witness is as informative as possible.

Problems are handed to a conic interior-point backend (Clarabel, with CVXOPT
as fallback); the surface here stays matrix-level so the backend is swappable.
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Optional, Sequence, Tuple

import cvxpy as cp
from scipy.optimize import Bounds, minimize

from .relax import RelaxedProblem, lift_point


@dataclass(frozen=True)
class ToleranceSet:
    """Numerical margins shared by the solver surface and the CEGIS engine."""

    feas: float = 1e-7      # accepted primal constraint violation
    psd: float = 1e-8       # accepted negative eigenvalue magnitude
    gap: float = 1e-6       # accepted objective suboptimality
    strict: float = 1e-6    # surrogate margin for strict inequalities
    margin: float = 1e-6    # gamma above which a witness counts as violation


@dataclass(frozen=True)
class LinearTerm:
    """One scalar constraint <A, Z> rel b; gamma rows read <A, Z> <= b - gamma."""

    A: np.ndarray
    rel: str                # "<=", ">=", "=="
    b: float
    gamma: bool = False


@dataclass(frozen=True)
class SdpProblem:
    dim: int
    constraints: Tuple[LinearTerm, ...]
    box_lower: Optional[np.ndarray] = None
    box_upper: Optional[np.ndarray] = None
    equalities: Tuple[Tuple[Tuple[int, int], Tuple[int, int]], ...] = ()
    objective: Optional[np.ndarray] = None   # maximize <C, Z>; None => max gamma

    def __post_init__(self):
        for term in self.constraints:
            if term.A.shape != (self.dim, self.dim):
                raise ValueError("constraint matrix dimension mismatch")
            if term.rel not in ("<=", ">=", "=="):
                raise ValueError(f"unknown relation {term.rel!r}")
            if not np.allclose(term.A, term.A.T, atol=1e-12):
                raise ValueError("constraint matrices must be symmetric")


@dataclass(frozen=True)
class SdpSolution:
    status: str             # Optimal | Infeasible | MaxIter | NumericalFailure
    Z: Optional[np.ndarray]
    objective: Optional[float]
    feas_residual: float = np.nan
    min_eigenvalue: float = np.nan
    gap_estimate: float = np.nan


_BACKENDS = ("CLARABEL", "CVXOPT")


def _residuals(problem: SdpProblem, Z: np.ndarray, gamma: float) -> Tuple[float, float]:
    worst = 0.0
    for term in problem.constraints:
        val = float(np.tensordot(term.A, Z))
        b = term.b - gamma if term.gamma else term.b
        if term.rel == "<=":
            worst = max(worst, val - b)
        elif term.rel == ">=":
            worst = max(worst, b - val)
        else:
            worst = max(worst, abs(val - b))
    if problem.box_lower is not None:
        worst = max(worst, float(np.max(problem.box_lower - Z, initial=0.0)))
    if problem.box_upper is not None:
        worst = max(worst, float(np.max(Z - problem.box_upper, initial=0.0)))
    for (i1, j1), (i2, j2) in problem.equalities:
        worst = max(worst, abs(Z[i1, j1] - Z[i2, j2]))
    min_eig = float(np.linalg.eigvalsh(0.5 * (Z + Z.T))[0])
    return worst, min_eig


def solve(problem: SdpProblem, tol: ToleranceSet = ToleranceSet()) -> SdpSolution:
    """Maximize the objective over the constrained PSD matrix variable."""
    d = problem.dim
    Z = cp.Variable((d, d), symmetric=True)
    gamma = cp.Variable() if problem.objective is None else None
    cons = [Z >> 0]
    if problem.box_lower is not None:
        cons.append(Z >= problem.box_lower)
    if problem.box_upper is not None:
        cons.append(Z <= problem.box_upper)
    for (i1, j1), (i2, j2) in problem.equalities:
        cons.append(Z[i1, j1] == Z[i2, j2])
    for term in problem.constraints:
        expr = cp.sum(cp.multiply(term.A, Z))
        b = term.b - gamma if term.gamma else term.b
        if term.rel == "<=":
            cons.append(expr <= b)
        elif term.rel == ">=":
            cons.append(expr >= b)
        else:
            cons.append(expr == b)
    if problem.objective is None:
        objective = cp.Maximize(gamma)
    else:
        objective = cp.Maximize(cp.sum(cp.multiply(problem.objective, Z)))
    prob = cp.Problem(objective, cons)

    best_inaccurate: Optional[SdpSolution] = None
    for backend in _BACKENDS:
        try:
            prob.solve(solver=backend, verbose=False)
        except Exception:  # backend-specific failures: try the next one
            continue
        status = prob.status
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            Zv = np.asarray(Z.value)
            Zv = 0.5 * (Zv + Zv.T)
            gval = float(gamma.value) if gamma is not None else 0.0
            feas, mineig = _residuals(problem, Zv, gval)
            sol = SdpSolution(
                status="Optimal", Z=Zv, objective=float(prob.value),
                feas_residual=feas, min_eigenvalue=mineig, gap_estimate=0.0,
            )
            if status == cp.OPTIMAL_INACCURATE and (
                feas > 100 * tol.feas or mineig < -100 * tol.psd
            ):
                # keep trying a cleaner backend before settling for this
                best_inaccurate = sol
                continue
            return sol
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SdpSolution(status="Infeasible", Z=None, objective=None)
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return SdpSolution(status="NumericalFailure", Z=None, objective=None)
    if best_inaccurate is not None:
        return best_inaccurate
    return SdpSolution(status="NumericalFailure", Z=None, objective=None)


@dataclass(frozen=True)
class CounterexampleReport:
    found: bool
    condition: Optional[str]            # "positivity" | "decrease"
    gamma: float
    witness: Optional[np.ndarray]
    positivity_gamma: float
    decrease_gamma: float
    failure: Optional[str] = None       # solver failure description
    realized_x: Optional[np.ndarray] = None   # state realizing the witness
    note: Optional[str] = None


# A relaxed witness only counts once it is pinned to an actual state whose
# pointwise violation exceeds this; anything smaller is within the noise the
# downstream sampling confirmation tolerates.
POINTWISE_MARGIN = 1e-9


def _state_bounds(rp: RelaxedProblem) -> Tuple[np.ndarray, np.ndarray, List[int]]:
    """State-variable box recovered from the lifted box's degree-1 entries."""
    idx: List[int] = []
    for i, mono in enumerate(rp.basis.monomials):
        powers = dict(mono.powers)
        if sum(powers.values()) == 1:
            idx.append(i)
    lo = rp.lifted_box.lower[0, idx]
    hi = rp.lifted_box.upper[0, idx]
    return lo, hi, idx


def realize_witness(
    rp: RelaxedProblem,
    c: np.ndarray,
    condition: str,
    Z: Optional[np.ndarray],
    tol: ToleranceSet = ToleranceSet(),
    rng: Optional[np.random.Generator] = None,
    samples: int = 8192,
) -> Tuple[Optional[np.ndarray], float]:
    """Search for a state whose rank-1 lift reproduces the claimed violation.

    The moment matrix returned by the violation program may average several
    states (each fine under a different mode) into a joint matrix that no
    single state attains; such a witness constrains the candidate search
    without corresponding to a real failure.  This pins it down: seeds taken
    from the witness moments, its leading eigenvectors, and a uniform sample
    of the domain are polished by direct maximization of the pointwise
    violation.  Returns the best eligible state and its violation, or
    ``(None, -inf)`` when no state above the exclusion threshold violates.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    lo, hi, idx = _state_bounds(rp)
    n = len(idx)
    # Strictly above the exclusion functional's threshold; the SDP-side
    # strict margin is not used here because it is an absolute quantity that
    # can dwarf a small alpha scale and hide genuinely violating states.
    cutoff = rp.exclusion_threshold * (1.0 + 1e-9) + 1e-12
    if condition == "positivity":
        mats = [rp.F_of(c) - rp.G]
    else:
        mats = [rp.Fq_of(q, c) - rp.GQ[q] for q in range(rp.num_modes)]

    def violation(x: np.ndarray) -> float:
        m = rp.basis.evaluate(x)
        excl = float(m @ rp.G @ m)
        if excl <= cutoff:
            # Steer the local search back toward the eligible region.
            return -1.0 - (cutoff - excl)
        return min(-float(m @ A @ m) for A in mats)

    powers = np.array(
        [mono.dense(n) for mono in rp.basis.monomials]
    )  # (B, n) exponents in state order

    def batch_violation(X: np.ndarray) -> np.ndarray:
        M = np.prod(X[:, None, :] ** powers[None, :, :], axis=2)  # (N, B)
        excl = np.einsum("nb,bc,nc->n", M, rp.G, M)
        viol = np.min(
            [-np.einsum("nb,bc,nc->n", M, A, M) for A in mats], axis=0
        )
        return np.where(excl <= cutoff, -1.0 - (cutoff - excl), viol)

    seeds: List[np.ndarray] = []
    if Z is not None and Z[0, 0] > 1e-9:
        seeds.append(np.clip(Z[0, idx] / Z[0, 0], lo, hi))
        vals, vecs = np.linalg.eigh(Z)
        for k in range(1, min(3, Z.shape[0]) + 1):
            v = vecs[:, -k]
            if abs(v[0]) > 1e-8:
                seeds.append(np.clip(v[idx] / v[0], lo, hi))
    draws = rng.uniform(lo, hi, size=(samples, n))
    # Violations concentrate just outside the excluded region, where the
    # required decrease is hardest; seed a shell of radii around it.  The
    # eligibility radius comes from the exclusion form's diagonal scale.
    scale = max(float(rp.G[i, i]) for i in idx)
    if scale > 0.0:
        r_lo = max(np.sqrt(cutoff / scale) * 1.001, 1e-9)
        r_hi = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
        if r_hi > r_lo:
            dirs = rng.normal(size=(samples, n))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            radii = np.exp(rng.uniform(np.log(r_lo), np.log(r_hi), samples))
            shell = np.clip(dirs * radii[:, None], lo, hi)
            draws = np.vstack([draws, shell])
    scores = batch_violation(draws)
    seeds.extend(draws[np.argsort(scores)[::-1][:12]])

    best_x, best_v = None, -np.inf
    for seed in seeds:
        res = minimize(
            lambda x: -violation(x), seed, method="Nelder-Mead",
            bounds=Bounds(lo, hi),
            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 400},
        )
        x = np.clip(res.x, lo, hi)
        v = violation(x)
        if v > best_v:
            best_x, best_v = x, v
    if best_x is None or best_v <= POINTWISE_MARGIN:
        return None, best_v
    return best_x, best_v


def _side_problem(rp: RelaxedProblem, rows: List[LinearTerm],
                  tol: ToleranceSet) -> SdpProblem:
    exclusion = LinearTerm(
        A=rp.G, rel=">=", b=rp.exclusion_threshold + tol.strict,
    )
    return SdpProblem(
        dim=rp.basis.size,
        constraints=tuple(rows + [exclusion]),
        box_lower=rp.lifted_box.lower,
        box_upper=rp.lifted_box.upper,
        equalities=rp.basis.alias_equalities(),
        objective=None,
    )


def violation_programs(
    rp: RelaxedProblem, c: np.ndarray, tol: ToleranceSet = ToleranceSet(),
) -> Dict[str, SdpProblem]:
    """The two gamma-maximization programs checked against a candidate."""
    c = np.asarray(c, dtype=float)
    pos_rows = [LinearTerm(A=rp.F_of(c) - rp.G, rel="<=", b=0.0, gamma=True)]
    dec_rows = [
        LinearTerm(A=rp.Fq_of(q, c) - rp.GQ[q], rel="<=", b=0.0, gamma=True)
        for q in range(rp.num_modes)
    ]
    return {
        "positivity": _side_problem(rp, pos_rows, tol),
        "decrease": _side_problem(rp, dec_rows, tol),
    }


def check_candidate(
    rp: RelaxedProblem, c: np.ndarray, tol: ToleranceSet = ToleranceSet(),
    rng: Optional[np.random.Generator] = None,
) -> CounterexampleReport:
    """Search the relaxed state space for a point where the candidate fails.

    Program 1 maximizes gamma with V(c) - alpha <= -gamma (positivity failure);
    program 2 with -Vdot_q(c) - eps_q phi_q <= -gamma for every mode jointly
    (decrease failure everywhere).  Gamma at or below ``tol.margin`` in both
    programs means no relaxed state violates, so the candidate survives
    outright.  A larger gamma is only accepted as a counterexample after
    ``realize_witness`` pins it to an actual state: the moment matrix may
    blend several states, none of which individually fails, and such
    artifacts would otherwise block every candidate.  When realization
    succeeds the witness returned is the rank-1 lift of the realized state,
    the sharpest constraint the find step can receive.
    """
    c = np.asarray(c, dtype=float)
    pos_rows = [LinearTerm(A=rp.F_of(c) - rp.G, rel="<=", b=0.0, gamma=True)]
    dec_rows = [
        LinearTerm(A=rp.Fq_of(q, c) - rp.GQ[q], rel="<=", b=0.0, gamma=True)
        for q in range(rp.num_modes)
    ]
    sol_pos = solve(_side_problem(rp, pos_rows, tol), tol)
    sol_dec = solve(_side_problem(rp, dec_rows, tol), tol)

    for name, sol in (("positivity", sol_pos), ("decrease", sol_dec)):
        if sol.status == "NumericalFailure":
            return CounterexampleReport(
                found=False, condition=None, gamma=np.nan, witness=None,
                positivity_gamma=np.nan, decrease_gamma=np.nan,
                failure=f"{name} program failed numerically",
            )
    # An infeasible violation program means no relaxed point can violate at
    # all (e.g. the exclusion cuts everything); treat as gamma = -inf.
    g_pos = sol_pos.objective if sol_pos.status == "Optimal" else -np.inf
    g_dec = sol_dec.objective if sol_dec.status == "Optimal" else -np.inf
    if max(g_pos, g_dec) <= tol.margin:
        return CounterexampleReport(
            found=False, condition=None, gamma=max(g_pos, g_dec), witness=None,
            positivity_gamma=g_pos, decrease_gamma=g_dec,
        )
    sides = [("positivity", sol_pos, g_pos), ("decrease", sol_dec, g_dec)]
    sides.sort(key=lambda s: s[2], reverse=True)
    for name, sol, g in sides:
        if g <= tol.margin:
            continue
        x, v = realize_witness(rp, c, name, sol.Z, tol, rng)
        if x is not None:
            return CounterexampleReport(
                found=True, condition=name, gamma=float(v),
                witness=lift_point(rp.basis, x),
                positivity_gamma=g_pos, decrease_gamma=g_dec, realized_x=x,
            )
    return CounterexampleReport(
        found=False, condition=None, gamma=max(g_pos, g_dec), witness=None,
        positivity_gamma=g_pos, decrease_gamma=g_dec,
        note="relaxed-only violation: no state realizes the witness",
    )


def dump_problem(problem: SdpProblem, path: str) -> None:
    """Plain-text dump (one matrix block per constraint) for external checks."""
    with open(path, "w") as fh:
        fh.write(f"dim {problem.dim}\n")
        if problem.objective is None:
            fh.write("objective maximize gamma\n")
        else:
            fh.write("objective maximize <C,Z>\nC\n")
            np.savetxt(fh, problem.objective)
        for k, term in enumerate(problem.constraints):
            tag = " (gamma)" if term.gamma else ""
            fh.write(f"constraint {k}: <A,Z> {term.rel} {term.b!r}{tag}\n")
            np.savetxt(fh, term.A)
        if problem.box_lower is not None:
            fh.write("box lower\n")
            np.savetxt(fh, problem.box_lower)
            fh.write("box upper\n")
            np.savetxt(fh, problem.box_upper)
        for (i1, j1), (i2, j2) in problem.equalities:
            fh.write(f"equal Z[{i1},{j1}] Z[{i2},{j2}]\n")
