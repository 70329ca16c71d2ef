"""Light-ray transform of time-dependent potentials along lifted geodesics.

A potential q(x, t) on disk x time is integrated along the curves
(gamma(t), t + sigma) with gamma a maximal unit-speed geodesic of the spatial
metric and sigma a time delay:

    L q(gamma, sigma) = int_0^ell q(gamma(t), t + sigma) dt.

The sigma-integral of L q recovers the static geodesic transform of the
time-integrated potential (Fubini), and the sigma-Fourier transform at
frequency rho equals the weighted ray transform of the time-Fourier modes;
both identities are exposed as residual checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._stepper import step_size_for, trace_with_samples
from .fields import ScalarField
from .geodesics import fan_states
from .xray import fan_grids, xray_forward

__all__ = [
    "SpacetimePotential",
    "LightRayData",
    "lightray_forward",
    "sigma_fubini_check",
    "sigma_fourier_slice",
    "sigma_grid_bounds",
    "save_lightray_data",
    "load_lightray_data",
]


@dataclass
class SpacetimePotential:
    """q(x, t), either separable q0(x) psi(t) or a space-time grid sample.

    Separable: q0 is a ScalarField or callable of points, psi a callable of t
    (possibly complex).  Gridded: values[iy, ix, it] on q0's grid times
    t_grid, interpolated linearly in t.  t_support is the compact interval
    outside which q vanishes.
    """

    q0: object = None
    psi: object = None
    t_support: tuple = (0.0, 1.0)
    t_grid: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.values is not None:
            if self.t_grid is None or self.q0 is None:
                raise ValueError("gridded potential needs q0 (grid holder) and t_grid")
            self.values = np.asarray(self.values)

    @property
    def is_separable(self) -> bool:
        return self.values is None

    def _q0_eval(self, pts):
        if isinstance(self.q0, ScalarField):
            return self.q0(pts)
        return self.q0(pts)

    def eval(self, pts, t):
        """q at points (..., 2) and matching times t (broadcastable)."""
        t = np.asarray(t, dtype=float)
        if self.is_separable:
            space = self._q0_eval(pts)
            time = np.asarray(self.psi(t))
            out = space * time
        else:
            tg = self.t_grid
            ft = np.clip((t - tg[0]) / (tg[1] - tg[0]), 0, tg.size - 1 - 1e-12)
            it = ft.astype(np.intp)
            tt = ft - it
            g = self.q0.grid
            fx = np.clip((pts[..., 0] + g.extent) / g.dx, 0, g.nx - 1 - 1e-12)
            fy = np.clip((pts[..., 1] + g.extent) / g.dy, 0, g.ny - 1 - 1e-12)
            ix = fx.astype(np.intp)
            iy = fy.astype(np.intp)
            tx = fx - ix
            ty = fy - iy
            v = self.values

            def sheet(k):
                return (
                    v[iy, ix, k] * (1 - tx) * (1 - ty)
                    + v[iy, ix + 1, k] * tx * (1 - ty)
                    + v[iy + 1, ix, k] * (1 - tx) * ty
                    + v[iy + 1, ix + 1, k] * tx * ty
                )

            out = sheet(it) * (1 - tt) + sheet(np.minimum(it + 1, tg.size - 1)) * tt
        lo, hi = self.t_support
        return np.where((t >= lo) & (t <= hi), out, 0.0)

    def time_integral(self, n_quad: int = 2001):
        """Q(x) = int q(x, t) dt as a callable of points."""
        lo, hi = self.t_support
        ts = np.linspace(lo, hi, n_quad)
        if self.is_separable:
            psi_int = np.trapezoid(np.asarray(self.psi(ts)), ts)
            return lambda pts: self._q0_eval(pts) * psi_int

        def Q(pts):
            vals = self.eval(pts[..., None, :], ts)
            return np.trapezoid(vals, ts, axis=-1)

        return Q


@dataclass
class LightRayData:
    """Values of the light-ray transform indexed (ray, sigma)."""

    betas: np.ndarray
    alphas: np.ndarray
    sigmas: np.ndarray
    values: np.ndarray  # (nbeta*nalpha, nsigma), complex allowed
    trapped: np.ndarray
    ray_lengths: np.ndarray

    @property
    def n_rays(self) -> int:
        return self.betas.size * self.alphas.size


def sigma_grid_bounds(q: SpacetimePotential, max_chord: float) -> tuple:
    """Smallest sigma interval outside which L q vanishes for every ray."""
    lo, hi = q.t_support
    return (lo - max_chord, hi)


class _TracedFan:
    """Fan geodesic samples reused across sigma shifts and frequencies."""

    def __init__(self, metric, n_beta, n_alpha, tol, t_max):
        self.betas, self.alphas = fan_grids(n_beta, n_alpha)
        x0, v0, _ = fan_states(metric, self.betas, self.alphas)
        tr = trace_with_samples(metric, x0, v0, h=step_size_for(tol), t_max=t_max)
        self.ts = tr["ts"]
        self.xs = tr["xs"]
        self.trapped = tr["trapped"]
        self.tau = tr["tau"]
        wq = np.empty_like(self.ts)
        wq[:, 1:-1] = 0.5 * (self.ts[:, 2:] - self.ts[:, :-2])
        wq[:, 0] = 0.5 * (self.ts[:, 1] - self.ts[:, 0])
        wq[:, -1] = 0.5 * (self.ts[:, -1] - self.ts[:, -2])
        self.wq = wq


def lightray_forward(
    metric,
    q: SpacetimePotential,
    sigmas,
    n_beta: int = 24,
    n_alpha: int = 24,
    tol: float = 1e-8,
    t_max: float = 20.0,
    _fan: _TracedFan | None = None,
) -> LightRayData:
    """L q(gamma, sigma) over the boundary fan and the given delays.

    Each geodesic is traced once; the sigma axis reuses the cached samples
    with the time argument shifted, trapezoid quadrature in arc length.
    Trapped rays are flagged and carry zero values.
    """
    fan = _fan or _TracedFan(metric, n_beta, n_alpha, tol, t_max)
    sigmas = np.asarray(sigmas, dtype=float)
    nray, m = fan.ts.shape
    mid = 0.5 * (q.t_support[0] + q.t_support[1])
    probe = np.asarray(q.eval(np.zeros((1, 2)), np.array([mid])))
    dtype = complex if np.iscomplexobj(probe) else float
    # chunk over sigma to bound the (ray, sample, sigma) intermediate
    out = np.empty((nray, sigmas.size), dtype=dtype)
    chunk = max(1, int(4e6 / (nray * m)))
    for j0 in range(0, sigmas.size, chunk):
        sl = slice(j0, min(j0 + chunk, sigmas.size))
        tshift = fan.ts[:, :, None] + sigmas[None, None, sl]
        vals = q.eval(fan.xs[:, :, None, :], tshift)
        out[:, sl] = np.sum(vals * fan.wq[:, :, None], axis=1)
    out[fan.trapped] = 0.0
    return LightRayData(
        betas=fan.betas,
        alphas=fan.alphas,
        sigmas=sigmas,
        values=out,
        trapped=fan.trapped,
        ray_lengths=fan.tau,
    )


def sigma_fourier_slice(
    metric,
    q: SpacetimePotential,
    rho: float,
    sigmas=None,
    n_beta: int = 24,
    n_alpha: int = 24,
    tol: float = 1e-8,
    t_max: float = 20.0,
    data: LightRayData | None = None,
):
    """Discrete sigma-Fourier transform int e^{-i rho sigma} L q d sigma.

    At rho = 0 this is by construction the same quadrature as the Fubini
    check's left side.  Returns (values per ray, LightRayData used).
    """
    if data is None:
        if sigmas is None:
            raise ValueError("pass sigmas or precomputed data")
        data = lightray_forward(
            metric, q, sigmas, n_beta=n_beta, n_alpha=n_alpha, tol=tol, t_max=t_max
        )
    phase = np.exp(-1j * rho * data.sigmas)
    vals = np.trapezoid(data.values * phase[None, :], data.sigmas, axis=1)
    return vals, data


def sigma_fubini_check(
    metric,
    q: SpacetimePotential,
    n_sigma: int = 200,
    n_beta: int = 24,
    n_alpha: int = 24,
    tol: float = 1e-8,
    t_max: float = 20.0,
    sigmas=None,
) -> dict:
    """Fubini identity: int_R L q(gamma, sigma) d sigma = I[Q](gamma) with
    Q(x) = int q(x, t) dt.

    The sigma grid must cover [t_min - max chord, t_max] of the potential's
    support; a too-short grid is refused with the required bounds.  The right
    side goes through xray_forward on the time-integrated potential, an
    independent quadrature path.  Returns the relative L2 residual over
    non-trapped rays.
    """
    fan = _TracedFan(metric, n_beta, n_alpha, tol, t_max)
    max_chord = float(np.max(fan.tau[~fan.trapped], initial=0.0))
    lo, hi = sigma_grid_bounds(q, max_chord)
    if sigmas is None:
        pad = 0.05 * (hi - lo)
        sigmas = np.linspace(lo - pad, hi + pad, n_sigma)
    else:
        sigmas = np.asarray(sigmas, dtype=float)
        if sigmas[0] > lo + 1e-12 or sigmas[-1] < hi - 1e-12:
            raise ValueError(
                f"sigma grid must cover [{lo:.6g}, {hi:.6g}] to capture the "
                "full support of L q"
            )
    data = lightray_forward(metric, q, sigmas, tol=tol, t_max=t_max, _fan=fan)
    lhs, _ = sigma_fourier_slice(metric, q, rho=0.0, data=data)
    rhs = xray_forward(
        metric, q.time_integral(), n_beta=n_beta, n_alpha=n_alpha, tol=tol, t_max=t_max
    ).values.reshape(-1)
    ok = ~fan.trapped
    den = float(np.linalg.norm(rhs[ok]))
    num = float(np.linalg.norm(lhs[ok].real - rhs[ok]))
    return {
        "rel_residual": num / den if den > 0 else num,
        "sigma_range": (float(sigmas[0]), float(sigmas[-1])),
        "n_trapped": int(fan.trapped.sum()),
        "lhs_norm": float(np.linalg.norm(lhs[ok])),
        "rhs_norm": den,
    }


def save_lightray_data(path, data: LightRayData) -> None:
    """Header ``nrays nsigma sigma_min sigma_max`` plus the fan shape, then
    row-major complex values as interleaved real/imag pairs."""
    vals = np.asarray(data.values, dtype=complex)
    with open(path, "w") as fh:
        fh.write(
            f"{data.n_rays} {data.sigmas.size} "
            f"{float(data.sigmas[0])!r} {float(data.sigmas[-1])!r}\n"
        )
        fh.write(f"{data.betas.size} {data.alphas.size}\n")
        inter = np.empty((vals.size, 2))
        inter[:, 0] = vals.real.reshape(-1)
        inter[:, 1] = vals.imag.reshape(-1)
        np.savetxt(fh, inter.reshape(-1), fmt="%.17g")
        np.savetxt(fh, data.trapped.reshape(-1).astype(int), fmt="%d")


def load_lightray_data(path) -> LightRayData:
    with open(path) as fh:
        nrays, nsigma, smin, smax = fh.readline().split()
        nrays, nsigma = int(nrays), int(nsigma)
        nb, na = map(int, fh.readline().split())
        flat = np.loadtxt(fh)
    nv = nrays * nsigma * 2
    inter = flat[:nv].reshape(nrays * nsigma, 2)
    vals = (inter[:, 0] + 1j * inter[:, 1]).reshape(nrays, nsigma)
    trapped = flat[nv:].reshape(-1).astype(bool)
    betas, alphas = fan_grids(nb, na)
    return LightRayData(
        betas=betas,
        alphas=alphas,
        sigmas=np.linspace(float(smin), float(smax), nsigma),
        values=vals,
        trapped=trapped,
        ray_lengths=np.zeros(nrays),
    )
