"""Geodesic flow on the disk: tracing, exit times, Jacobi fields, the matrix
Riccati equation, and the simplicity verdict for a metric.

Phase states live on the unit sphere bundle and are written (x, theta) with
the direction angle theta measured in the conformal coordinates, so the
coordinate velocity of a unit-speed geodesic is e^{-lam(x)} (cos theta,
sin theta).  Trapped rays are reported with exit time `math.inf`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._stepper import IntegrationError, step_size_for, trace_to_exit, trace_with_samples
from .metrics import ConformalMetric, boundary_convexity

__all__ = [
    "PhaseState",
    "GeodesicPath",
    "RiccatiSolution",
    "SimplicityReport",
    "IntegrationError",
    "states_from_angles",
    "fan_states",
    "trace_geodesic",
    "exit_time",
    "conjugate_scan",
    "batch_exit",
    "batch_conjugate_scan",
    "riccati_solve",
    "verify_simplicity",
]


@dataclass(frozen=True)
class PhaseState:
    """Point of SM: position in the closed disk plus direction angle."""

    x: tuple
    theta: float

    def __post_init__(self):
        if np.hypot(*self.x) > 1.0 + 1e-9:
            raise ValueError("phase state outside the closed unit disk")

    def velocity(self, metric: ConformalMetric) -> np.ndarray:
        """Coordinate velocity of the unit-speed lift, e^{-lam} (cos, sin)."""
        scale = math.exp(-float(metric.lam(np.asarray(self.x, dtype=float))))
        return scale * np.array([math.cos(self.theta), math.sin(self.theta)])


def states_from_angles(metric, x, theta):
    """Vectorized (x, theta) -> coordinate velocities with unit g-speed."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    scale = np.exp(-metric.lam(x))
    return scale[..., None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def fan_states(metric, betas, alphas):
    """Inward boundary states for a (beta, alpha) fan.

    beta parametrizes the boundary point (cos beta, sin beta); alpha in
    (-pi/2, pi/2) is the angle from the inner normal (conformal metrics are
    angle-preserving, so alpha is simultaneously the Euclidean and the
    g-angle).  Returns flattened x0, v0 of shape (nbeta*nalpha, 2) plus the
    matching direction angles theta.
    """
    B, A = np.meshgrid(np.asarray(betas, float), np.asarray(alphas, float), indexing="ij")
    beta = B.ravel()
    alpha = A.ravel()
    x0 = np.stack([np.cos(beta), np.sin(beta)], axis=-1)
    theta = beta + math.pi + alpha
    v0 = states_from_angles(metric, x0, theta)
    return x0, v0, theta


@dataclass
class GeodesicPath:
    """A traced unit-speed geodesic sampled in (x, theta)."""

    ts: np.ndarray
    xs: np.ndarray
    thetas: np.ndarray
    exit_time: float
    trapped: bool
    step_stats: dict = field(default_factory=dict)

    @property
    def samples(self):
        return [
            (float(t), PhaseState((float(x[0]), float(x[1])), float(th)))
            for t, x, th in zip(self.ts, self.xs, self.thetas)
        ]

    @property
    def exit_point(self) -> np.ndarray:
        return self.xs[-1]


def trace_geodesic(metric, start: PhaseState, t_max: float = 20.0, tol: float = 1e-10) -> GeodesicPath:
    """Trace the geodesic through `start` until it leaves the disk.

    The path is integrated in second-order form with a fixed RK4 step chosen
    from tol and the exit is refined by bisecting the crossing step down to
    ~1e-12 in t; the reported drift of |gamma'|_g from 1 is the end-to-end
    accuracy diagnostic.
    """
    x0 = np.asarray(start.x, dtype=float)[None, :]
    v0 = start.velocity(metric)[None, :]
    h = step_size_for(tol)
    out = trace_with_samples(metric, x0, v0, h=h, t_max=t_max)
    m = out["lens"][0]
    ts = out["ts"][0, :m]
    xs = out["xs"][0, :m]
    vs = out["vs"][0, :m]
    thetas = np.arctan2(vs[:, 1], vs[:, 0])
    speeds = metric.speed(xs, vs)
    stats = {
        "h": h,
        "n_samples": int(m),
        "max_speed_drift": float(np.max(np.abs(speeds - 1.0))),
    }
    trapped = bool(out["trapped"][0])
    tau = math.inf if trapped else float(out["tau"][0])
    return GeodesicPath(ts, xs, thetas, tau, trapped, stats)


def exit_time(metric, start: PhaseState, t_max: float = 100.0, tol: float = 1e-10) -> float:
    """First time the geodesic leaves the disk; math.inf when trapped."""
    x0 = np.asarray(start.x, dtype=float)[None, :]
    v0 = start.velocity(metric)[None, :]
    out = trace_to_exit(metric, x0, v0, h=step_size_for(tol), t_max=t_max)
    return math.inf if out["trapped"][0] else float(out["tau"][0])


def _jacobi_rhs(metric):
    def rhs(t, x, v, a):
        h = metric.hess_lam(x)
        K = -np.exp(-2.0 * metric.lam(x)) * (h[..., 0] + h[..., 2])
        return np.stack([a[:, 1], -K * a[:, 0]], axis=-1)

    return rhs


def batch_exit(metric, x0, v0, t_max=100.0, tol=1e-8):
    """Exit times for a batch of states; inf marks trapped rays."""
    out = trace_to_exit(metric, x0, v0, h=step_size_for(tol), t_max=t_max)
    tau = out["tau"].copy()
    tau[out["trapped"]] = math.inf
    return tau, out


def batch_conjugate_scan(metric, x0, v0, t_max=100.0, tol=1e-8):
    """First conjugate times (nan if none) and exit data for a batch.

    Integrates the scalar Jacobi equation J'' + K(gamma(t)) J = 0 with
    J(0) = 0, J'(0) = 1 along each ray and reports the first zero of J in
    (0, min(tau, t_max)].
    """
    n = len(x0)
    aug0 = np.tile([0.0, 1.0], (n, 1))
    out = trace_to_exit(
        metric,
        x0,
        v0,
        h=step_size_for(tol),
        t_max=t_max,
        aug_rhs=_jacobi_rhs(metric),
        aug0=aug0,
        watch_index=0,
    )
    return out["zero_time"], out


def conjugate_scan(metric, start: PhaseState, t_max: float = 20.0, tol: float = 1e-10):
    """First conjugate time along the geodesic through `start`, or None."""
    x0 = np.asarray(start.x, dtype=float)[None, :]
    v0 = start.velocity(metric)[None, :]
    zt, _ = batch_conjugate_scan(metric, x0, v0, t_max=t_max, tol=tol)
    return None if math.isnan(zt[0]) else float(zt[0])


# ---------------------------------------------------------------------------
# matrix Riccati equation
# ---------------------------------------------------------------------------


@dataclass
class RiccatiSolution:
    """Solution samples of the Riccati flow H' + BH + HB^t + HCH = F.

    H(t) = z(t) y(t)^{-1} from the linearization z' = -Bz + Fy,
    y' = Cz + B^t y, z(0) = H0, y(0) = I.  Where y is singular H carries nan.
    """

    times: np.ndarray
    H: np.ndarray
    y_nonvanishing: bool
    blowup_time: float | None
    min_abs_det_y: float
    im_positive_definite: bool | None

    @property
    def dim(self) -> int:
        return self.H.shape[-1]


def _as_matrix_fn(A, n, name):
    if callable(A):
        probe = np.atleast_2d(np.asarray(A(0.0), dtype=float))
        if probe.shape != (n, n):
            raise ValueError(f"{name}(t) must return an {n}x{n} matrix")
        return lambda t: np.atleast_2d(np.asarray(A(t), dtype=float))
    M = np.atleast_2d(np.asarray(A, dtype=float))
    if M.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}")
    return lambda t: M


def riccati_solve(B, C, F, H0, T, n_steps: int | None = None) -> RiccatiSolution:
    """Solve the matrix Riccati equation via its (z, y) linearization.

    The equation solved is H' + BH + HB^t + HCH = F with H(0) = H0 (sign
    convention of the scalar model H' + H^2 = F, so that B = 0, C = 1 gives
    the linear system z' = F y, y' = z).  B, C, F may be scalars, (n, n)
    arrays, or callables of t; C and F must be symmetric for the
    positive-definiteness guarantee.

    For complex symmetric H0 with positive definite imaginary part, y(t) is
    invertible on all of [0, T] and Im H(t) stays positive definite; a
    singular y in that regime raises IntegrationError.  For real H0 a sign
    change of det y(t) is located by bisection and reported as blowup_time
    (zeros of y along a geodesic are its conjugate points).
    """
    H0 = np.atleast_2d(np.asarray(H0, dtype=complex))
    n = H0.shape[0]
    if H0.shape != (n, n):
        raise ValueError("H0 must be square")
    if not np.allclose(H0, H0.T, atol=1e-12):
        raise ValueError("H0 must be symmetric")
    Bf = _as_matrix_fn(B, n, "B")
    Cf = _as_matrix_fn(C, n, "C")
    Ff = _as_matrix_fn(F, n, "F")
    h0_real = bool(np.all(H0.imag == 0.0))

    if n_steps is None:
        n_steps = max(256, int(math.ceil(T / 1e-3)))
    dt = T / n_steps

    def rhs(t, zy):
        z, y = zy
        Bt = Bf(t)
        return np.stack([-Bt @ z + Ff(t) @ y, Cf(t) @ z + Bt.T @ y])

    def rk4(t, zy, step):
        k1 = rhs(t, zy)
        k2 = rhs(t + 0.5 * step, zy + 0.5 * step * k1)
        k3 = rhs(t + 0.5 * step, zy + 0.5 * step * k2)
        k4 = rhs(t + step, zy + step * k3)
        return zy + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    zy = np.stack([H0, np.eye(n, dtype=complex)])
    times = np.linspace(0.0, T, n_steps + 1)
    states = np.empty((n_steps + 1,) + zy.shape, dtype=complex)
    states[0] = zy
    for i in range(n_steps):
        zy = rk4(times[i], zy, dt)
        states[i + 1] = zy

    dets = np.linalg.det(states[:, 1])
    min_abs_det = float(np.min(np.abs(dets)))

    blowup = None
    if h0_real:
        d = dets.real
        crossings = np.flatnonzero(d[:-1] * d[1:] < 0.0)
        grazing = np.flatnonzero(np.abs(d) < 1e-13)
        t_candidates = []
        if crossings.size:
            i = int(crossings[0])
            lo, hi = 0.0, dt
            base = states[i]
            sign0 = math.copysign(1.0, d[i])
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                det_mid = np.linalg.det(rk4(times[i], base, mid)[1]).real
                if math.copysign(1.0, det_mid) == sign0:
                    lo = mid
                else:
                    hi = mid
            t_candidates.append(times[i] + 0.5 * (lo + hi))
        if grazing.size and grazing[0] > 0:
            t_candidates.append(float(times[grazing[0]]))
        if t_candidates:
            blowup = float(min(t_candidates))
    elif min_abs_det < 1e-8:
        raise IntegrationError(
            "y(t) became singular although Im H0 was positive definite"
        )

    # H where y is invertible; nan past a singularity
    H = np.full((n_steps + 1, n, n), np.nan, dtype=complex)
    ok = np.abs(dets) > 1e-13
    if np.any(ok):
        Hok = states[ok, 0] @ np.linalg.inv(states[ok, 1])
        H[ok] = 0.5 * (Hok + np.transpose(Hok, (0, 2, 1)))

    im_pd = None
    if not h0_real:
        eigmins = np.array([np.linalg.eigvalsh(Him).min() for Him in H.imag])
        im_pd = bool(np.all(eigmins > 0.0))

    return RiccatiSolution(
        times=times,
        H=H,
        y_nonvanishing=blowup is None and min_abs_det > 1e-10,
        blowup_time=blowup,
        min_abs_det_y=min_abs_det,
        im_positive_definite=im_pd,
    )


# ---------------------------------------------------------------------------
# simplicity verification
# ---------------------------------------------------------------------------


@dataclass
class SimplicityReport:
    strictly_convex: bool
    nontrapping: bool
    no_conjugate_points: bool
    witnesses: list
    counts: dict
    params: dict

    @property
    def simple(self) -> bool:
        return self.strictly_convex and self.nontrapping and self.no_conjugate_points

    def to_dict(self) -> dict:
        return {
            "strictly_convex": self.strictly_convex,
            "nontrapping": self.nontrapping,
            "no_conjugate_points": self.no_conjugate_points,
            "simple": self.simple,
            "witnesses": self.witnesses,
            "counts": self.counts,
            "params": self.params,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _witness(x, theta, kind, value):
    return {
        "x": [float(x[0]), float(x[1])],
        "theta": float(theta),
        "failure_kind": kind,
        "value": float(value),
    }


def verify_simplicity(
    metric,
    n_boundary: int = 48,
    n_angles: int = 48,
    t_max: float = 100.0,
    tol: float = 1e-7,
    interior_rings: int = 4,
    max_witnesses: int = 32,
) -> SimplicityReport:
    """Test the three simplicity criteria on a sampled fan.

    Strict convexity is decided from the boundary indicator 1 + d_r lam at
    n_boundary points of the unit circle.  Nontrapping and absence of
    conjugate points are tested along the inward boundary fan (n_boundary x
    n_angles states); trapping is additionally probed on interior rings with
    tangential-to-radial direction sweeps, which is what detects closed
    geodesics that never touch the boundary (e.g. the equator of a large
    spherical cap).  Witnesses record failing samples (capped per kind at
    max_witnesses; full tallies are in counts).
    """
    if n_boundary < 8 or n_angles < 8:
        raise ValueError("sampling counts must be at least 8")
    witnesses = []
    counts = {"trapped": 0, "conjugate_point": 0, "nonconvex_boundary": 0, "integration_error": 0}

    betas = np.linspace(0.0, 2 * math.pi, n_boundary, endpoint=False)
    convexity = boundary_convexity(metric, betas)
    bad = np.flatnonzero(convexity <= 0.0)
    counts["nonconvex_boundary"] = int(bad.size)
    for i in bad[:max_witnesses]:
        witnesses.append(
            _witness(
                (math.cos(betas[i]), math.sin(betas[i])),
                betas[i],
                "nonconvex_boundary",
                convexity[i],
            )
        )

    # boundary fan: joint exit + Jacobi scan
    alphas = -0.5 * math.pi + (np.arange(n_angles) + 0.5) * (math.pi / n_angles)
    x0, v0, theta0 = fan_states(metric, betas, alphas)
    try:
        conj, out = batch_conjugate_scan(metric, x0, v0, t_max=t_max, tol=tol)
        fan_trapped = out["trapped"]
    except IntegrationError as err:
        counts["integration_error"] += 1
        witnesses.append(_witness((math.nan, math.nan), math.nan, "integration_error", math.nan))
        conj = np.full(len(x0), np.nan)
        fan_trapped = np.zeros(len(x0), dtype=bool)

    for i in np.flatnonzero(fan_trapped)[:max_witnesses]:
        witnesses.append(_witness(x0[i], theta0[i], "trapped", t_max))
    conj_idx = np.flatnonzero(~np.isnan(conj))
    for i in conj_idx[:max_witnesses]:
        witnesses.append(_witness(x0[i], theta0[i], "conjugate_point", conj[i]))
    counts["trapped"] += int(np.count_nonzero(fan_trapped))
    counts["conjugate_point"] = int(conj_idx.size)

    # interior rings: trapping probes for closed interior geodesics
    radii = np.linspace(0.15, 0.85, interior_rings)
    ring_dirs = np.linspace(0.0, 2 * math.pi, n_angles, endpoint=False)
    R, PHI, TH = np.meshgrid(radii, betas[:: max(1, n_boundary // 12)], ring_dirs, indexing="ij")
    xi = np.stack([R * np.cos(PHI), R * np.sin(PHI)], axis=-1).reshape(-1, 2)
    thi = TH.ravel()
    vi = states_from_angles(metric, xi, thi)
    tau_i, _ = batch_exit(metric, xi, vi, t_max=t_max, tol=tol)
    trapped_i = np.isinf(tau_i)
    for i in np.flatnonzero(trapped_i)[:max_witnesses]:
        witnesses.append(_witness(xi[i], thi[i], "trapped", t_max))
    counts["trapped"] += int(np.count_nonzero(trapped_i))

    return SimplicityReport(
        strictly_convex=counts["nonconvex_boundary"] == 0,
        nontrapping=counts["trapped"] == 0,
        no_conjugate_points=counts["conjugate_point"] == 0,
        witnesses=witnesses,
        counts=counts,
        params={
            "n_boundary": n_boundary,
            "n_angles": n_angles,
            "t_max": t_max,
            "tol": tol,
            "interior_rings": interior_rings,
            "metric": metric.describe(),
        },
    )
