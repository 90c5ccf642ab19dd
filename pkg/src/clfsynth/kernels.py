"""Hot numeric kernels: batched polynomial evaluation and the RK4 switching loop.

Two implementations are provided for each kernel: a numba ``@njit`` version and
a pure-numpy fallback.  The fallback is selected by setting the environment
variable ``CLF_PURE_NUMPY=1`` before import (useful on platforms without a
working numba toolchain, and for A/B benchmarking -- see
``benchmarks/bench_kernels.py``).

Polynomials cross this boundary in packed form: a coefficient vector of shape
(t,) and an exponent matrix of shape (t, n), as produced by
:meth:`clfsynth.poly.Polynomial.pack`.  Families of polynomials (one per mode,
or one per vector-field component) are concatenated into a single coefficient /
exponent pair plus an offsets array, so the jitted code only ever sees flat
numpy arrays.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("CLF_PURE_NUMPY", "0") != "1"

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dependency normally
        USE_NUMBA = False

__all__ = ["USE_NUMBA", "batch_eval", "eval_packed_at", "simulate_switched"]


# ---------------------------------------------------------------------------
# Batched polynomial evaluation
# ---------------------------------------------------------------------------

def _batch_eval_numpy(coeffs: np.ndarray, exps: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Evaluate one packed polynomial at every row of X.  Shapes: (t,), (t,n), (N,n)."""
    if coeffs.shape[0] == 0:
        return np.zeros(X.shape[0])
    # (N, t) monomial values via broadcasting; integer powers are exact.
    mono = np.prod(X[:, None, :] ** exps[None, :, :], axis=2)
    return mono @ coeffs


def _eval_packed_at_py(coeffs, exps, x):
    total = 0.0
    for k in range(coeffs.shape[0]):
        v = coeffs[k]
        for i in range(exps.shape[1]):
            e = exps[k, i]
            if e:
                v *= x[i] ** e
        total += v
    return total


if USE_NUMBA:

    @njit(cache=True)
    def _eval_packed_at_nb(coeffs, exps, x):  # pragma: no cover - jitted
        total = 0.0
        for k in range(coeffs.shape[0]):
            v = coeffs[k]
            for i in range(exps.shape[1]):
                e = exps[k, i]
                if e:
                    v *= x[i] ** e
            total += v
        return total

    @njit(cache=True)
    def _batch_eval_nb(coeffs, exps, X):  # pragma: no cover - jitted
        N = X.shape[0]
        out = np.empty(N)
        for j in range(N):
            out[j] = _eval_packed_at_nb(coeffs, exps, X[j])
        return out

    def batch_eval(coeffs, exps, X):
        if coeffs.shape[0] == 0:
            return np.zeros(X.shape[0])
        return _batch_eval_nb(coeffs, exps, X)

    eval_packed_at = _eval_packed_at_nb
else:
    batch_eval = _batch_eval_numpy
    eval_packed_at = _eval_packed_at_py


# ---------------------------------------------------------------------------
# Closed-loop RK4 switching simulation
# ---------------------------------------------------------------------------
#
# The packed system layout shared by both implementations:
#   field_coeffs (T,), field_exps (T,n), field_off (Q*n+1,):
#       component i of mode q occupies [field_off[q*n+i], field_off[q*n+i+1])
#   vdot_coeffs/vdot_exps/vdot_off (Q+1,): per-mode Vdot_q polynomials
#   phi_coeffs/phi_exps/phi_off (Q+1,):    per-mode phi_q polynomials
#   v_coeffs/v_exps: the CLF itself (for trace recording)
#
# Status codes returned by the loop:
STATUS_HORIZON = 0
STATUS_DOMAIN_EXIT = 1
STATUS_TARGET_REACHED = 2
STATUS_NO_ELIGIBLE_MODE = 3


def _make_sim_loop(jit):
    """Build the simulation loop; ``jit`` wraps it (numba njit or identity)."""

    def _eval_at(coeffs, exps, lo, hi, x):
        total = 0.0
        for k in range(lo, hi):
            v = coeffs[k]
            for i in range(exps.shape[1]):
                e = exps[k, i]
                if e:
                    v *= x[i] ** e
            total += v
        return total

    _eval_at = jit(_eval_at)

    def _rk4_step(fc, fe, foff, n, q, x, dt):
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        tmp = np.empty(n)
        base = q * n
        for i in range(n):
            k1[i] = _eval_at(fc, fe, foff[base + i], foff[base + i + 1], x)
        for i in range(n):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        for i in range(n):
            k2[i] = _eval_at(fc, fe, foff[base + i], foff[base + i + 1], tmp)
        for i in range(n):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        for i in range(n):
            k3[i] = _eval_at(fc, fe, foff[base + i], foff[base + i + 1], tmp)
        for i in range(n):
            tmp[i] = x[i] + dt * k3[i]
        for i in range(n):
            k4[i] = _eval_at(fc, fe, foff[base + i], foff[base + i + 1], tmp)
        out = np.empty(n)
        for i in range(n):
            out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        return out

    _rk4_step = jit(_rk4_step)

    def _refine_switch_time(
        fc, fe, foff, vdc, vde, vdoff, phc, phe, phoff,
        eps, lam, q, x_prev, dt,
    ):
        """Locate the threshold crossing inside the last step by bisection.

        g(s) = Vdot_q(x(s)) + eps_q*phi_q(x(s))/lam along the mode-q flow from
        x_prev; g(0) < 0, g(dt) >= 0.  Resolution dt/128 (< dt/100).
        """
        lo = 0.0
        hi = dt
        for _ in range(7):
            mid = 0.5 * (lo + hi)
            xm = _rk4_step(fc, fe, foff, x_prev.shape[0], q, x_prev, mid)
            vd = _eval_at(vdc, vde, vdoff[q], vdoff[q + 1], xm)
            ph = _eval_at(phc, phe, phoff[q], phoff[q + 1], xm)
            if vd >= -eps[q] * ph / lam:
                hi = mid
            else:
                lo = mid
        return hi

    _refine_switch_time = jit(_refine_switch_time)

    def _loop(
        fc, fe, foff,
        vdc, vde, vdoff,
        phc, phe, phoff,
        vc, ve,
        eps, lam,
        p_lo, p_hi,
        target_radius_sq,
        x0, q0, horizon, dt, stride, max_records,
    ):
        n = x0.shape[0]
        Q = eps.shape[0]
        max_steps = int(horizon / dt + 0.5)

        rec_t = np.empty(max_records)
        rec_x = np.empty((max_records, n))
        rec_q = np.empty(max_records, dtype=np.int64)
        rec_v = np.empty(max_records)
        rec_vd = np.empty(max_records)
        sw_t = np.empty(max_steps + 1)
        sw_from = np.empty(max_steps + 1, dtype=np.int64)
        sw_to = np.empty(max_steps + 1, dtype=np.int64)
        n_rec = 0
        n_sw = 0
        status = STATUS_HORIZON

        x = x0.copy()
        x_prev = x0.copy()
        fired_prev = True  # no refinement for a switch at t = 0
        q = q0
        t = 0.0

        for step in range(max_steps + 1):
            # Domain check.
            inside = True
            for i in range(n):
                if x[i] < p_lo[i] or x[i] > p_hi[i]:
                    inside = False
            if not inside:
                status = STATUS_DOMAIN_EXIT
                break
            if target_radius_sq > 0.0:
                r2 = 0.0
                for i in range(n):
                    r2 += x[i] * x[i]
                if r2 <= target_radius_sq:
                    status = STATUS_TARGET_REACHED
                    # fall through to record the final sample
            # Switching-law evaluation (threshold crossing of the active mode).
            vdot_q = _eval_at(vdc, vde, vdoff[q], vdoff[q + 1], x)
            phi_q = _eval_at(phc, phe, phoff[q], phoff[q + 1], x)
            fire = vdot_q >= -eps[q] * phi_q / lam
            if fire and status == STATUS_HORIZON:
                best = -1
                best_ratio = np.inf
                for qq in range(Q):
                    vd = _eval_at(vdc, vde, vdoff[qq], vdoff[qq + 1], x)
                    ph = _eval_at(phc, phe, phoff[qq], phoff[qq + 1], x)
                    if vd <= -eps[qq] * ph and ph > 0.0:
                        ratio = vd / ph
                        if ratio < best_ratio - 1e-15:
                            best_ratio = ratio
                            best = qq
                if best >= 0:
                    if best != q:
                        t_sw = t
                        if not fired_prev:
                            s = _refine_switch_time(
                                fc, fe, foff, vdc, vde, vdoff, phc, phe, phoff,
                                eps, lam, q, x_prev, dt,
                            )
                            t_sw = t - dt + s
                        sw_t[n_sw] = t_sw
                        sw_from[n_sw] = q
                        sw_to[n_sw] = best
                        n_sw += 1
                        q = best
                        vdot_q = _eval_at(vdc, vde, vdoff[q], vdoff[q + 1], x)
                else:
                    # Certificate promises an eligible mode whenever the
                    # threshold fires at a nonzero state; x == 0 never fires.
                    status = STATUS_NO_ELIGIBLE_MODE

            if step % stride == 0 or status != STATUS_HORIZON or step == max_steps:
                if n_rec < max_records:
                    rec_t[n_rec] = t
                    for i in range(n):
                        rec_x[n_rec, i] = x[i]
                    rec_q[n_rec] = q
                    rec_v[n_rec] = _eval_at(vc, ve, 0, vc.shape[0], x)
                    rec_vd[n_rec] = vdot_q
                    n_rec += 1
            if status != STATUS_HORIZON or step == max_steps:
                break

            fired_prev = fire
            for i in range(n):
                x_prev[i] = x[i]
            x = _rk4_step(fc, fe, foff, n, q, x, dt)
            t += dt

        return (
            status,
            rec_t[:n_rec], rec_x[:n_rec], rec_q[:n_rec], rec_v[:n_rec], rec_vd[:n_rec],
            sw_t[:n_sw], sw_from[:n_sw], sw_to[:n_sw],
        )

    return jit(_loop)


if USE_NUMBA:
    _sim_loop = _make_sim_loop(njit(cache=True))
else:
    _sim_loop = _make_sim_loop(lambda f: f)


def simulate_switched(packed, x0, q0, horizon, dt, stride, max_records=2_000_000):
    """Run the packed closed-loop simulation; see :mod:`clfsynth.sim` for the API."""
    return _sim_loop(
        packed["field_coeffs"], packed["field_exps"], packed["field_off"],
        packed["vdot_coeffs"], packed["vdot_exps"], packed["vdot_off"],
        packed["phi_coeffs"], packed["phi_exps"], packed["phi_off"],
        packed["v_coeffs"], packed["v_exps"],
        packed["eps"], packed["lam"],
        packed["p_lo"], packed["p_hi"],
        packed["target_radius_sq"],
        np.asarray(x0, dtype=float), q0, horizon, dt, stride, max_records,
    )
