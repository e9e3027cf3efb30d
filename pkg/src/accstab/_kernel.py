"""Low-level integration kernel for the delayed car-following dynamics.

Fixed-step RK4 advancing one delay-resolving sub-step at a time.  Each output
step of size `h` is split at a fixed offset pattern so that the delayed images
of input kinks and of stored-solution knots land on sub-step boundaries; the
solution buffer keeps (value, derivative) pairs at every sub-node and delayed
state is read back through piecewise cubic Hermite interpolation.  Without
the kink alignment the scheme degrades to second order for delays that are
not grid multiples; with it the observed convergence is clean fourth order.

Everything here works on plain floats and arrays so the hot loop can be
compiled with numba; without numba the same code runs in pure Python.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit as _numba_njit

    _njit = _numba_njit(cache=True)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    def _njit(func):
        return func

    HAVE_NUMBA = False

__all__ = [
    "HAVE_NUMBA",
    "build_pattern",
    "refine_substeps",
    "linear_eval",
    "pattern_eval",
    "sample_pattern",
    "integrate_follower_kernel",
    "TAU_ZERO_CUTOFF",
]

# Delays below this are dynamically indistinguishable from zero at vehicle
# time scales; the method of steps needs h <= tau, so tiny tau would force
# absurd step counts.
TAU_ZERO_CUTOFF = 1e-3


def refine_substeps(dt: float, tau: float) -> int:
    """Number of internal steps per output step: h = dt/n with h <= tau/4."""
    if tau <= TAU_ZERO_CUTOFF:
        return 1
    return max(1, int(math.ceil(4.0 * dt / tau - 1e-12)))


def build_pattern(h: float, tau: float, extra_offsets=()) -> np.ndarray:
    """Sub-node offsets within one step, a sorted array starting at 0.0.

    Includes the delay offset tau mod h (where delayed kink images land) and
    any extra offsets (e.g. a platoon predecessor's knot offsets), then bisects
    spans wider than h/2 so the largest sub-step shrinks proportionally with h.
    """
    fuzz = 1e-9 * h
    offs = set()
    if tau > TAU_ZERO_CUTOFF:
        phi = tau - math.floor(tau / h) * h
        if fuzz < phi < h - fuzz:
            offs.add(phi)
    for o in extra_offsets:
        o = o - math.floor(o / h) * h
        if fuzz < o < h - fuzz:
            offs.add(o)
    # keep the pattern small; drop near-duplicates
    kept: list[float] = []
    for o in sorted(offs):
        if not kept or o - kept[-1] > fuzz:
            kept.append(o)
    if len(kept) > 6:
        kept = kept[:6]
    knots = [0.0] + kept + [h]
    mids = [0.5 * (a + b) for a, b in zip(knots[:-1], knots[1:])
            if b - a > 0.5 * h + fuzz]
    return np.array(sorted([0.0] + kept + mids))


@_njit
def linear_eval(t, t0, dt, vals):
    """Piecewise-linear sample with constant extension outside the grid."""
    n = vals.shape[0]
    x = (t - t0) / dt
    if x <= 0.0:
        return vals[0]
    if x >= n - 1:
        return vals[n - 1]
    i = int(x)
    w = x - i
    return vals[i] * (1.0 - w) + vals[i + 1] * w


@_njit
def _hermite(w, span, ya, yb, da, db):
    w2 = w * w
    w3 = w2 * w
    return ((2.0 * w3 - 3.0 * w2 + 1.0) * ya
            + (w3 - 2.0 * w2 + w) * span * da
            + (-2.0 * w3 + 3.0 * w2) * yb
            + (w3 - w2) * span * db)


@_njit
def pattern_eval(t, t0, h, pattern, n_rows, vals, derivs):
    """Cubic-Hermite sample of a sub-node buffer, constant extension outside.

    Row k*n_sub + j sits at t0 + k*h + pattern[j]; the final row (n_rows-1)
    sits at t0 + n_steps*h.
    """
    n_sub = pattern.shape[0]
    if t <= t0:
        return vals[0]
    n_steps = (n_rows - 1) // n_sub
    if t >= t0 + n_steps * h:
        return vals[n_rows - 1]
    x = (t - t0) / h
    k = int(x)
    if k > n_steps - 1:
        k = n_steps - 1
    r = t - t0 - k * h
    j = 0
    for m in range(1, n_sub):
        if r >= pattern[m]:
            j = m
    row = k * n_sub + j
    t_a = t0 + k * h + pattern[j]
    if j + 1 < n_sub:
        t_b = t0 + k * h + pattern[j + 1]
    else:
        t_b = t0 + (k + 1) * h
    span = t_b - t_a
    w = (t - t_a) / span
    if w < 0.0:
        w = 0.0
    if w > 1.0:
        w = 1.0
    return _hermite(w, span, vals[row], vals[row + 1], derivs[row], derivs[row + 1])


@_njit
def sample_pattern(t_query, t0, h, pattern, vals, derivs):
    """Vector version of pattern_eval over an array of query times."""
    out = np.empty(t_query.shape[0])
    n_rows = vals.shape[0]
    for i in range(t_query.shape[0]):
        out[i] = pattern_eval(t_query[i], t0, h, pattern, n_rows, vals, derivs)
    return out


@_njit
def _hist_eval(t, hist_t, hist_s):
    n = hist_t.shape[0]
    if t <= hist_t[0] or n == 1:
        return hist_s[0]
    if t >= hist_t[n - 1]:
        return hist_s[n - 1]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if hist_t[mid] <= t:
            lo = mid
        else:
            hi = mid
    w = (t - hist_t[lo]) / (hist_t[lo + 1] - hist_t[lo])
    return hist_s[lo] * (1.0 - w) + hist_s[lo + 1] * w


@_njit
def _lead_at(t, lead_mode, ld_t0, ld_dt, ld_vals, lb_t0, lb_h, lb_pattern,
             lb_v, lb_dv):
    if lead_mode == 0:
        return linear_eval(t, ld_t0, ld_dt, ld_vals)
    return pattern_eval(t, lb_t0, lb_h, lb_pattern, lb_v.shape[0], lb_v, lb_dv)


@_njit
def integrate_follower_kernel(
    t_start, h, n_steps, pattern,
    k1, k2, th, tau, eta, s0, v0,
    hist_t, hist_s,
    lead_mode, ld_t0, ld_dt, ld_vals,
    lb_t0, lb_h, lb_pattern, lb_v, lb_dv,
    speed_floor,
):
    """Integrate one follower on [t_start, t_start + n_steps*h].

    Returns sub-node buffers (S, V, dS, dV); node samples are every
    len(pattern)-th row.  Delayed gap lookups before t_start use the linear
    history (hist_t, hist_s); the lead signal provides its own extension.
    """
    n_sub = pattern.shape[0]
    n_rows = n_steps * n_sub + 1
    S = np.empty(n_rows)
    V = np.empty(n_rows)
    dS = np.empty(n_rows)
    dV = np.empty(n_rows)
    S[0] = s0
    V[0] = v0

    delay = tau > TAU_ZERO_CUTOFF

    row = 0
    for k in range(n_steps):
        base = t_start + k * h
        for j in range(n_sub):
            t_a = base + pattern[j]
            t_b = base + pattern[j + 1] if j + 1 < n_sub else base + h
            span = t_b - t_a
            s = S[row]
            v = V[row]

            # stage 1 (also the stored derivative at this sub-node)
            vl = _lead_at(t_a, lead_mode, ld_t0, ld_dt, ld_vals,
                          lb_t0, lb_h, lb_pattern, lb_v, lb_dv)
            if delay:
                tq = t_a - tau
                if tq <= t_start:
                    sd = _hist_eval(tq, hist_t, hist_s)
                else:
                    sd = pattern_eval(tq, t_start, h, pattern, row + 1, S, dS)
                vld = _lead_at(tq, lead_mode, ld_t0, ld_dt, ld_vals,
                               lb_t0, lb_h, lb_pattern, lb_v, lb_dv)
            else:
                sd = s
                vld = vl
            a1 = vl - v
            b1 = k1 * (sd - eta - th * v) + k2 * (vld - v)
            if v <= speed_floor and b1 < 0.0:
                b1 = 0.0
            dS[row] = a1
            dV[row] = b1

            # stages 2-4
            half = 0.5 * span
            t_m = t_a + half
            vl_m = _lead_at(t_m, lead_mode, ld_t0, ld_dt, ld_vals,
                            lb_t0, lb_h, lb_pattern, lb_v, lb_dv)
            vl_b = _lead_at(t_b, lead_mode, ld_t0, ld_dt, ld_vals,
                            lb_t0, lb_h, lb_pattern, lb_v, lb_dv)
            sd_m = 0.0
            vld_m = 0.0
            sd_b = 0.0
            vld_b = 0.0
            if delay:
                tq = t_m - tau
                if tq <= t_start:
                    sd_m = _hist_eval(tq, hist_t, hist_s)
                else:
                    sd_m = pattern_eval(tq, t_start, h, pattern, row + 1, S, dS)
                vld_m = _lead_at(tq, lead_mode, ld_t0, ld_dt, ld_vals,
                                 lb_t0, lb_h, lb_pattern, lb_v, lb_dv)
                tq = t_b - tau
                if tq <= t_start:
                    sd_b = _hist_eval(tq, hist_t, hist_s)
                else:
                    sd_b = pattern_eval(tq, t_start, h, pattern, row + 1, S, dS)
                vld_b = _lead_at(tq, lead_mode, ld_t0, ld_dt, ld_vals,
                                 lb_t0, lb_h, lb_pattern, lb_v, lb_dv)

            s2 = s + half * a1
            v2 = v + half * b1
            a2 = vl_m - v2
            if delay:
                b2 = k1 * (sd_m - eta - th * v2) + k2 * (vld_m - v2)
            else:
                b2 = k1 * (s2 - eta - th * v2) + k2 * (vl_m - v2)
            if v2 <= speed_floor and b2 < 0.0:
                b2 = 0.0

            s3 = s + half * a2
            v3 = v + half * b2
            a3 = vl_m - v3
            if delay:
                b3 = k1 * (sd_m - eta - th * v3) + k2 * (vld_m - v3)
            else:
                b3 = k1 * (s3 - eta - th * v3) + k2 * (vl_m - v3)
            if v3 <= speed_floor and b3 < 0.0:
                b3 = 0.0

            s4 = s + span * a3
            v4 = v + span * b3
            a4 = vl_b - v4
            if delay:
                b4 = k1 * (sd_b - eta - th * v4) + k2 * (vld_b - v4)
            else:
                b4 = k1 * (s4 - eta - th * v4) + k2 * (vl_b - v4)
            if v4 <= speed_floor and b4 < 0.0:
                b4 = 0.0

            sn = s + span / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            vn = v + span / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            if vn < speed_floor:
                vn = speed_floor
            S[row + 1] = sn
            V[row + 1] = vn
            row += 1

    # derivative at the final row, for Hermite sampling up to the end
    t_end = t_start + n_steps * h
    vl = _lead_at(t_end, lead_mode, ld_t0, ld_dt, ld_vals,
                  lb_t0, lb_h, lb_pattern, lb_v, lb_dv)
    if delay:
        tq = t_end - tau
        if tq <= t_start:
            sd = _hist_eval(tq, hist_t, hist_s)
        else:
            sd = pattern_eval(tq, t_start, h, pattern, row, S, dS)
        vld = _lead_at(tq, lead_mode, ld_t0, ld_dt, ld_vals,
                       lb_t0, lb_h, lb_pattern, lb_v, lb_dv)
    else:
        sd = S[row]
        vld = vl
    a1 = vl - V[row]
    b1 = k1 * (sd - eta - th * V[row]) + k2 * (vld - V[row])
    if V[row] <= speed_floor and b1 < 0.0:
        b1 = 0.0
    dS[row] = a1
    dV[row] = b1
    return S, V, dS, dV
