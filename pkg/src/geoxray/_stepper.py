"""Vectorized fixed-step RK4 integration of the geodesic flow on the disk.

All tracing in the package funnels through `trace_to_exit` (no sample storage,
optional augmented quadrature states and zero-crossing detection) or
`trace_with_samples` (stores the path, for operators that need ray
footprints).  Batches are compacted as rays exit so long-lived rays do not
drag the whole batch along.

The geodesic system is integrated in second-order form

    x' = v,   v^l' = -Gamma^l_{jk} v^j v^k

so unit speed is conserved only up to the integrator error; this drift is a
genuine accuracy diagnostic and is reported in the step stats.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "IntegrationError",
    "step_size_for",
    "trace_to_exit",
    "trace_with_samples",
]

_BISECT_ITERS = 48


class IntegrationError(RuntimeError):
    """The integrator produced a non-finite state or could not proceed."""


def step_size_for(tol: float) -> float:
    """Fixed RK4 step giving global error of roughly tol on unit-scale runs."""
    return float(min(2e-2, max(2e-4, 0.7 * tol**0.25)))


def _accel(metric, x, v):
    g = metric.grad_lam(x)
    l1, l2 = g[..., 0], g[..., 1]
    v1, v2 = v[..., 0], v[..., 1]
    a1 = -(l1 * (v1 * v1 - v2 * v2) + 2.0 * l2 * v1 * v2)
    a2 = -(l2 * (v2 * v2 - v1 * v1) + 2.0 * l1 * v1 * v2)
    return np.stack([a1, a2], axis=-1)


def _rk4_step(metric, x, v, aug, t, h, aug_rhs):
    """One joint RK4 step of size h (h may be an array broadcast over rays)."""
    hh = np.asarray(h)
    h1 = hh[..., None] if hh.ndim else hh
    k1x = v
    k1v = _accel(metric, x, v)
    x2 = x + 0.5 * h1 * k1x
    v2 = v + 0.5 * h1 * k1v
    k2x = v2
    k2v = _accel(metric, x2, v2)
    x3 = x + 0.5 * h1 * k2x
    v3 = v + 0.5 * h1 * k2v
    k3x = v3
    k3v = _accel(metric, x3, v3)
    x4 = x + h1 * k3x
    v4 = v + h1 * k3v
    k4x = v4
    k4v = _accel(metric, x4, v4)
    xn = x + (h1 / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + (h1 / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    if aug_rhs is None:
        return xn, vn, None
    k1a = aug_rhs(t, x, v, aug)
    k2a = aug_rhs(t + 0.5 * hh, x2, v2, aug + 0.5 * h1 * k1a)
    k3a = aug_rhs(t + 0.5 * hh, x3, v3, aug + 0.5 * h1 * k2a)
    k4a = aug_rhs(t + hh, x4, v4, aug + h1 * k3a)
    an = aug + (h1 / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a)
    return xn, vn, an


def _r2(x):
    return x[..., 0] ** 2 + x[..., 1] ** 2


def _bisect_exit(metric, x, v, aug, t, h, aug_rhs):
    """Refine the boundary crossing inside a step that ended outside.

    Bisects the substep size s in (0, h] on the sign of |x(s)|^2 - 1, taking a
    single RK4 substep from the saved pre-step state each iteration.  Returns
    (s, x(s), v(s), aug(s)) evaluated on the inside of the crossing.
    """
    lo = np.zeros(len(x))
    hi = np.full(len(x), h)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        xm, _, _ = _rk4_step(metric, x, v, None, t, mid, None)
        inside = _r2(xm) <= 1.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    xs, vs, as_ = _rk4_step(metric, x, v, aug, t, lo, aug_rhs)
    return lo, xs, vs, as_


def _bisect_watch_zero(metric, x, v, aug, t, smax, aug_rhs, widx, wsign):
    """Refine the first zero of aug[:, widx] within substeps (0, smax]."""
    lo = np.zeros(len(x))
    hi = smax.copy()
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        _, _, am = _rk4_step(metric, x, v, aug, t, mid, aug_rhs)
        same = np.sign(am[:, widx]) == wsign
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def trace_to_exit(
    metric,
    x0,
    v0,
    *,
    h,
    t_max,
    aug_rhs=None,
    aug0=None,
    watch_index=None,
):
    """Trace a batch of geodesics until they leave the closed unit disk.

    Parameters
    ----------
    x0, v0 : (n, 2) arrays
        Initial positions and coordinate velocities.
    h : float
        Fixed RK4 step (arc-length parameter for unit-speed data).
    t_max : float
        Rays still inside after t_max are reported trapped.
    aug_rhs : callable(t, x, v, aug) -> d(aug)/dt, optional
        Extra quadrature/linear states integrated along each ray.
    aug0 : (n, k) array, optional
        Initial augmented state (required with aug_rhs).
    watch_index : int, optional
        Index into the augmented state whose first sign change along each ray
        is located (used for Jacobi-field zeros).

    Returns
    -------
    dict with tau, trapped, x_end, v_end, aug_end, zero_time, n_steps.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    n = len(x0)
    if aug_rhs is not None:
        aug0 = np.atleast_2d(np.asarray(aug0, dtype=float))
        k = aug0.shape[1]
    else:
        aug0 = np.zeros((n, 0))
        k = 0

    tau = np.zeros(n)
    trapped = np.zeros(n, dtype=bool)
    x_end = x0.copy()
    v_end = v0.copy()
    aug_end = aug0.copy()
    zero_time = np.full(n, np.nan)

    # boundary starts pointing outward (or starts outside) exit immediately
    r2 = _r2(x0)
    radial = x0[:, 0] * v0[:, 0] + x0[:, 1] * v0[:, 1]
    done0 = (r2 >= 1.0 - 1e-12) & (radial > 0.0)
    done0 |= r2 > 1.0 + 1e-12
    alive = np.flatnonzero(~done0)

    x = x0[alive]
    v = v0[alive]
    aug = aug0[alive]
    watching = np.ones(len(alive), dtype=bool) if watch_index is not None else None

    t = 0.0
    n_steps = 0
    max_steps = int(math.ceil(t_max / h)) + 4
    while alive.size:
        if t >= t_max - 1e-14 or n_steps >= max_steps:
            trapped[alive] = True
            tau[alive] = t_max
            x_end[alive] = x
            v_end[alive] = v
            aug_end[alive] = aug
            break
        hstep = min(h, t_max - t)
        xn, vn, an = _rk4_step(metric, x, v, aug, t, hstep, aug_rhs)
        if not np.all(np.isfinite(xn)):
            raise IntegrationError("non-finite state during geodesic integration")
        n_steps += 1
        out = _r2(xn) > 1.0

        if watch_index is not None:
            w_pre = aug[:, watch_index]
            w_post = an[:, watch_index]
            crossed = watching & (w_pre * w_post < 0.0)
        else:
            crossed = np.zeros(len(alive), dtype=bool)

        if np.any(out):
            idx = np.flatnonzero(out)
            s_exit, xs, vs, as_ = _bisect_exit(
                metric, x[idx], v[idx], aug[idx] if k else None, t, hstep, aug_rhs
            )
            gi = alive[idx]
            tau[gi] = t + s_exit
            x_end[gi] = xs
            v_end[gi] = vs
            if k:
                aug_end[gi] = as_
            if watch_index is not None:
                # a crossing counts only if it happens before the exit
                pre_sign = np.sign(aug[idx, watch_index])
                exited_sign = np.sign(as_[:, watch_index])
                crossed[idx] = watching[idx] & (pre_sign * exited_sign < 0.0)

        if np.any(crossed):
            idx = np.flatnonzero(crossed)
            smax = np.where(out[idx], tau[alive[idx]] - t, hstep)
            s_zero = _bisect_watch_zero(
                metric,
                x[idx],
                v[idx],
                aug[idx],
                t,
                smax,
                aug_rhs,
                watch_index,
                np.sign(aug[idx, watch_index]),
            )
            zero_time[alive[idx]] = t + s_zero
            watching[idx] = False

        t += hstep
        keep = ~out
        if not np.all(keep):
            x, v, aug = xn[keep], vn[keep], (an[keep] if k else aug[keep])
            alive = alive[keep]
            if watching is not None:
                watching = watching[keep]
        else:
            x, v = xn, vn
            if k:
                aug = an

    return {
        "tau": tau,
        "trapped": trapped,
        "x_end": x_end,
        "v_end": v_end,
        "aug_end": aug_end,
        "zero_time": zero_time,
        "n_steps": n_steps,
    }


def trace_with_samples(metric, x0, v0, *, h, t_max):
    """Trace a batch storing every sample; last sample sits on the boundary.

    Memory is bounded by first running an exit pass to find the longest ray.

    Returns
    -------
    dict with ts (n, m), xs (n, m, 2), vs (n, m, 2), lens (n,), tau (n,),
    trapped (n,).  Entries past lens[i] are padded with the final sample.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    n = len(x0)
    pre = trace_to_exit(metric, x0, v0, h=h, t_max=t_max)
    trapped = pre["trapped"]
    # trapped rays carry no usable samples; callers mask them via `trapped`
    tau = np.where(trapped, 0.0, pre["tau"])
    t_long = float(np.max(tau, initial=0.0))
    m = int(math.ceil(t_long / h)) + 2

    ts = np.zeros((n, m))
    xs = np.zeros((n, m, 2))
    vs = np.zeros((n, m, 2))
    lens = np.ones(n, dtype=np.intp)
    xs[:, 0] = x0
    vs[:, 0] = v0

    alive = np.flatnonzero(tau > 0.0)
    x = x0[alive]
    v = v0[alive]
    t = 0.0
    col = 0
    while alive.size and col + 1 < m:
        hstep = np.minimum(h, tau[alive] - t)
        # rays whose remaining time is below h take their final partial step
        final = tau[alive] - t <= h + 1e-15
        xn, vn, _ = _rk4_step(metric, x, v, None, t, hstep, None)
        col += 1
        ts[alive, col] = t + hstep
        xs[alive, col] = xn
        vs[alive, col] = vn
        lens[alive] = col + 1
        t += h
        keep = ~final
        alive = alive[keep]
        x, v = xn[keep], vn[keep]

    # pad with the final sample so vectorized quadrature can ignore lens
    rows = np.arange(n)
    last = lens - 1
    for arr in (ts, xs, vs):
        pad = arr[rows, last]
        mask = np.arange(m)[None, :] >= lens[:, None]
        arr[mask] = np.repeat(pad, mask.sum(axis=1), axis=0)

    return {"ts": ts, "xs": xs, "vs": vs, "lens": lens, "tau": tau, "trapped": trapped}
