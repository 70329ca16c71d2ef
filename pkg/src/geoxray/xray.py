"""Geodesic X-ray transform on conformal disks: fan-beam forward data,
fiberwise backprojection, the normal operator in two independent
realizations, conjugate-gradient inversion, and the large-cap
non-injectivity demonstration.

Fan coordinates: a boundary angle beta picks the point (cos beta, sin beta)
on the unit circle and an inward angle alpha in (-pi/2, pi/2), measured from
the inner normal, picks the direction theta = beta + pi + alpha.  Conformal
metrics preserve angles, so alpha is simultaneously the Euclidean and the
g-angle and the Santalo weight is mu = -<v, nu>_g = cos alpha.

The adjoint convention is fixed once: data pair through the mu-weighted
L^2(boundary fan) product whose boundary measure is e^{lam} d(beta) d(alpha),
fields through L^2(disk, dV_g) with dV_g = e^{2 lam} dx; the fiberwise
backprojection below is the adjoint of the forward transform for exactly
this pair, which is what the adjointness tests exercise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import sparse

from ._stepper import step_size_for, trace_to_exit, trace_with_samples
from .fields import GridSpec, ScalarField
from .geodesics import fan_states, states_from_angles, verify_simplicity

__all__ = [
    "FanBeamData",
    "SimplicityError",
    "fan_grids",
    "fan_to_line",
    "xray_forward",
    "xray_backproject",
    "BackprojectGeometry",
    "ForwardMatrix",
    "normal_operator",
    "invert_normal_cg",
    "counterexample_demo",
    "mu_inner",
    "volume_inner",
    "save_fan_data",
    "load_fan_data",
]


class SimplicityError(RuntimeError):
    """An operation requiring a simple metric was given a non-simple one."""

    def __init__(self, report):
        super().__init__(
            f"metric failed simplicity check: counts={report.counts}"
        )
        self.report = report


def fan_grids(n_beta: int, n_alpha: int):
    """Uniform boundary angles and cell-centered inward angles."""
    betas = np.linspace(0.0, 2 * math.pi, n_beta, endpoint=False)
    alphas = -0.5 * math.pi + (np.arange(n_alpha) + 0.5) * (math.pi / n_alpha)
    return betas, alphas


def fan_to_line(beta, alpha):
    """Euclidean reparametrization of a fan ray as Radon line parameters.

    For lam = 0 the ray from (cos beta, sin beta) with inward angle alpha is
    the line with signed distance s = sin(alpha) and direction angle
    phi = beta + pi + alpha.
    """
    beta = np.asarray(beta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    return np.sin(alpha), np.mod(beta + math.pi + alpha, 2 * math.pi)


@dataclass
class FanBeamData:
    """Geodesic X-ray data on the inward boundary fan; values [beta, alpha]."""

    betas: np.ndarray
    alphas: np.ndarray
    values: np.ndarray
    trapped: np.ndarray | None = None
    info: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shape = (self.betas.size, self.alphas.size)
        if self.values.shape != shape:
            raise ValueError(f"fan values must have shape {shape}")
        if self.trapped is None:
            self.trapped = np.zeros(shape, dtype=bool)

    @property
    def mu(self) -> np.ndarray:
        """Santalo weight -<v, nu>_g = cos alpha per sample."""
        return np.broadcast_to(np.cos(self.alphas)[None, :], self.values.shape)

    def copy_with(self, values) -> "FanBeamData":
        return FanBeamData(self.betas, self.alphas, values, self.trapped.copy())

    def interp(self, beta_q, alpha_q):
        """Bilinear lookup, periodic in beta, clamped in alpha."""
        idx, w = _fan_interp_weights(self.betas, self.alphas, beta_q, alpha_q)
        flat = self.values.reshape(-1)
        return (flat[idx] * w).sum(axis=-1)


def _fan_interp_weights(betas, alphas, beta_q, alpha_q):
    """Flat indices and weights of the 4-point fan interpolation stencil."""
    nb, na = betas.size, alphas.size
    db = 2 * math.pi / nb
    da = alphas[1] - alphas[0]
    fb = np.mod(np.asarray(beta_q, dtype=float) - betas[0], 2 * math.pi) / db
    ib = fb.astype(np.intp) % nb
    tb = fb - np.floor(fb)
    ib1 = (ib + 1) % nb
    fa = (np.asarray(alpha_q, dtype=float) - alphas[0]) / da
    fa = np.clip(fa, 0.0, na - 1 - 1e-12)
    ia = fa.astype(np.intp)
    ta = fa - ia
    idx = np.stack(
        [
            ib * na + ia,
            ib * na + ia + 1,
            ib1 * na + ia,
            ib1 * na + ia + 1,
        ],
        axis=-1,
    )
    w = np.stack(
        [(1 - tb) * (1 - ta), (1 - tb) * ta, tb * (1 - ta), tb * ta], axis=-1
    )
    return idx, w


def _as_point_fn(f):
    if isinstance(f, ScalarField):
        return f
    if callable(f):
        return f
    raise TypeError("expected a ScalarField or a callable of points")


def xray_forward(
    metric,
    f,
    n_beta: int = 90,
    n_alpha: int = 90,
    tol: float = 1e-8,
    t_max: float = 20.0,
) -> FanBeamData:
    """Geodesic ray transform If sampled on the inward boundary fan.

    Each value is the arc-length integral of f along the maximal geodesic
    from its fan state, accumulated as an extra RK4 quadrature state of the
    tracer.  Trapped rays carry value 0 and are flagged in `trapped`.
    """
    fn = _as_point_fn(f)
    betas, alphas = fan_grids(n_beta, n_alpha)
    x0, v0, _ = fan_states(metric, betas, alphas)
    out = trace_to_exit(
        metric,
        x0,
        v0,
        h=step_size_for(tol),
        t_max=t_max,
        aug_rhs=lambda t, x, v, a: fn(x)[:, None],
        aug0=np.zeros((len(x0), 1)),
    )
    vals = out["aug_end"][:, 0].reshape(n_beta, n_alpha)
    trapped = out["trapped"].reshape(n_beta, n_alpha)
    vals = np.where(trapped, 0.0, vals)
    return FanBeamData(betas, alphas, vals, trapped, info={"n_trapped": int(trapped.sum())})


def _entry_coordinates(x_end, v_end):
    """Boundary fan coordinates of the entry state from a backward trace."""
    beta = np.arctan2(x_end[:, 1], x_end[:, 0])
    d = -v_end
    theta_d = np.arctan2(d[:, 1], d[:, 0])
    alpha = np.mod(theta_d - beta - math.pi + math.pi, 2 * math.pi) - math.pi
    return np.mod(beta, 2 * math.pi), alpha


class BackprojectGeometry:
    """Precomputed fiberwise backprojection for one (metric, grid, fan) set.

    For every grid node inside the disk and every one of n_dir directions the
    geodesic is traced backward to its entry point on the boundary fan; the
    sparse operator then maps fan values to the fiber integral
    I* h(x) = integral over S_x of the flow-constant extension of h.
    """

    def __init__(self, metric, grid: GridSpec, betas, alphas, n_dir=180, tol=1e-8, t_max=20.0):
        self.metric = metric
        self.grid = grid
        self.betas = betas
        self.alphas = alphas
        self.n_dir = n_dir
        pts = grid.points().reshape(-1, 2)
        inside = np.flatnonzero(pts[:, 0] ** 2 + pts[:, 1] ** 2 < 1.0)
        self.node_idx = inside
        thetas = np.linspace(0.0, 2 * math.pi, n_dir, endpoint=False)
        X = np.repeat(pts[inside], n_dir, axis=0)
        TH = np.tile(thetas, inside.size)
        V = states_from_angles(metric, X, TH)
        out = trace_to_exit(metric, X, -V, h=step_size_for(tol), t_max=t_max)
        ok = ~out["trapped"]
        beta_q, alpha_q = _entry_coordinates(out["x_end"][ok], out["v_end"][ok])
        idx, w = _fan_interp_weights(betas, alphas, beta_q, alpha_q)
        rows = np.repeat(np.repeat(np.arange(inside.size), n_dir)[ok], 4)
        dtheta = 2 * math.pi / n_dir
        mat = sparse.coo_matrix(
            (w.reshape(-1) * dtheta, (rows.astype(np.int64), idx.reshape(-1))),
            shape=(inside.size, betas.size * alphas.size),
        )
        self.matrix = mat.tocsr()
        self.skipped = int(np.count_nonzero(~ok))

    def apply(self, fan_values) -> ScalarField:
        vals = np.zeros(self.grid.ny * self.grid.nx)
        vals[self.node_idx] = self.matrix @ np.asarray(fan_values, dtype=float).reshape(-1)
        f = ScalarField(self.grid, vals.reshape(self.grid.ny, self.grid.nx))
        f.support_mask = self.grid.disk_mask()
        return f


def xray_backproject(
    metric,
    data: FanBeamData,
    grid: GridSpec | None = None,
    n_dir: int = 180,
    tol: float = 1e-8,
    t_max: float = 20.0,
    geometry: BackprojectGeometry | None = None,
) -> ScalarField:
    """Fiberwise adjoint I* h on the grid (see module docstring).

    Directions whose backward trace is trapped are skipped; the skipped count
    is reported in the returned field's ``info`` attribute.
    """
    if grid is None:
        grid = GridSpec(64, 64, 1.0)
    if geometry is None:
        geometry = BackprojectGeometry(
            metric, grid, data.betas, data.alphas, n_dir=n_dir, tol=tol, t_max=t_max
        )
    out = geometry.apply(data.values)
    out.info = {"skipped_directions": geometry.skipped}
    return out


class ForwardMatrix:
    """Sparse discretization of the fan-beam forward transform on a grid.

    Rows are fan rays; each row holds trapezoid quadrature weights times the
    bilinear footprint of the traced sample points, so `apply` agrees with
    xray_forward up to the quadrature rule along rays.
    """

    def __init__(self, metric, grid: GridSpec, betas, alphas, tol=1e-8, t_max=20.0):
        self.grid = grid
        self.betas = betas
        self.alphas = alphas
        x0, v0, _ = fan_states(metric, betas, alphas)
        tr = trace_with_samples(metric, x0, v0, h=step_size_for(tol), t_max=t_max)
        self.trapped = tr["trapped"].reshape(betas.size, alphas.size)
        ts, xs = tr["ts"], tr["xs"]
        n, m = ts.shape
        wq = np.empty_like(ts)
        wq[:, 1:-1] = 0.5 * (ts[:, 2:] - ts[:, :-2])
        wq[:, 0] = 0.5 * (ts[:, 1] - ts[:, 0])
        wq[:, -1] = 0.5 * (ts[:, -1] - ts[:, -2])
        g = grid
        fx = (xs[..., 0] + g.extent) / g.dx
        fy = (xs[..., 1] + g.extent) / g.dy
        ok = (fx >= 0) & (fx <= g.nx - 1) & (fy >= 0) & (fy <= g.ny - 1)
        fx = np.clip(fx, 0, g.nx - 1 - 1e-12)
        fy = np.clip(fy, 0, g.ny - 1 - 1e-12)
        ix = fx.astype(np.int64)
        iy = fy.astype(np.int64)
        tx = fx - ix
        ty = fy - iy
        base = iy * g.nx + ix
        cols = np.stack([base, base + 1, base + g.nx, base + g.nx + 1], axis=-1)
        wbil = np.stack(
            [(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=-1
        )
        w = (wq * ok)[..., None] * wbil
        rows = np.broadcast_to(np.arange(n, dtype=np.int64)[:, None, None], cols.shape)
        mat = sparse.coo_matrix(
            (w.reshape(-1), (rows.reshape(-1), cols.reshape(-1))),
            shape=(n, g.ny * g.nx),
        )
        self.matrix = mat.tocsr()

    def apply(self, field_values) -> np.ndarray:
        out = self.matrix @ np.asarray(field_values, dtype=float).reshape(-1)
        return out.reshape(self.betas.size, self.alphas.size)


def polar_normal_operator(
    metric, f, grid: GridSpec, n_dir: int = 180, tol: float = 1e-8, t_max: float = 20.0
) -> ScalarField:
    """Normal operator by the global polar-coordinate kernel formula.

    I*I f(x) = 2 * integral over directions of the radial integral of f along
    the geodesic from (x, theta): the 1/|w| kernel singularity cancels
    against the polar Jacobian, leaving plain arc-length integrals of f.
    """
    fn = _as_point_fn(f)
    pts = grid.points().reshape(-1, 2)
    inside = np.flatnonzero(pts[:, 0] ** 2 + pts[:, 1] ** 2 < 1.0)
    thetas = np.linspace(0.0, 2 * math.pi, n_dir, endpoint=False)
    X = np.repeat(pts[inside], n_dir, axis=0)
    TH = np.tile(thetas, inside.size)
    V = states_from_angles(metric, X, TH)
    out = trace_to_exit(
        metric,
        X,
        V,
        h=step_size_for(tol),
        t_max=t_max,
        aug_rhs=lambda t, x, v, a: fn(x)[:, None],
        aug0=np.zeros((len(X), 1)),
    )
    ray_int = np.where(out["trapped"], np.nan, out["aug_end"][:, 0])
    sums = 2.0 * (2 * math.pi / n_dir) * ray_int.reshape(inside.size, n_dir).sum(axis=1)
    vals = np.zeros(grid.ny * grid.nx)
    vals[inside] = sums
    field = ScalarField(grid, vals.reshape(grid.ny, grid.nx))
    field.support_mask = grid.disk_mask()
    return field


def normal_operator(
    metric,
    f: ScalarField,
    mode: str = "composition",
    n_beta: int = 120,
    n_alpha: int = 120,
    n_dir: int = 180,
    tol: float = 1e-8,
    t_max: float = 20.0,
    assume_simple: bool = False,
) -> ScalarField:
    """I*I f on f's grid, by operator composition or by the polar kernel.

    The two modes are independent discretizations of the same operator:
    composition runs xray_forward then the fiberwise backprojection through
    the data fan; polar integrates f radially from each reconstruction point.
    Polar mode requires a simple metric (global polar coordinates) and
    refuses otherwise with the failing report attached.
    """
    if mode == "composition":
        data = xray_forward(metric, f, n_beta=n_beta, n_alpha=n_alpha, tol=tol, t_max=t_max)
        return xray_backproject(metric, data, f.grid, n_dir=n_dir, tol=tol, t_max=t_max)
    if mode == "polar":
        if not assume_simple:
            report = verify_simplicity(metric, n_boundary=16, n_angles=16, t_max=40.0)
            if not report.simple:
                raise SimplicityError(report)
        return polar_normal_operator(metric, f, f.grid, n_dir=n_dir, tol=tol, t_max=t_max)
    raise ValueError("mode must be 'composition' or 'polar'")


# ---------------------------------------------------------------------------
# inner products of the adjoint convention
# ---------------------------------------------------------------------------


def mu_inner(metric, data_a: FanBeamData, values_b) -> float:
    """mu-weighted pairing of fan data over the inward boundary.

    integral over beta, alpha of a * b * cos(alpha) e^{lam(x(beta))}
    d beta d alpha; trapped samples are excluded.
    """
    a = data_a.values
    b = np.asarray(values_b, dtype=float)
    db = 2 * math.pi / data_a.betas.size
    da = data_a.alphas[1] - data_a.alphas[0]
    bpts = np.stack([np.cos(data_a.betas), np.sin(data_a.betas)], axis=-1)
    elam = np.exp(metric.lam(bpts))
    w = elam[:, None] * np.cos(data_a.alphas)[None, :] * db * da
    w = np.where(data_a.trapped, 0.0, w)
    return float(np.sum(a * b * w))


def volume_inner(metric, f: ScalarField, g: ScalarField) -> float:
    """L^2(disk, dV_g) pairing with the e^{2 lam} volume density."""
    if f.grid != g.grid:
        raise ValueError("fields must share a grid")
    pts = f.grid.points()
    dens = np.exp(2.0 * metric.lam(pts))
    mask = f.grid.disk_mask()
    return float(
        np.sum(f.values[mask] * g.values[mask] * dens[mask]) * f.grid.cell_area
    )


# ---------------------------------------------------------------------------
# conjugate-gradient inversion of the normal equations
# ---------------------------------------------------------------------------


def invert_normal_cg(
    metric,
    data: FanBeamData,
    grid: GridSpec | None = None,
    n_dir: int = 180,
    max_iter: int = 80,
    cg_tol: float = 1e-6,
    tol: float = 1e-8,
    t_max: float = 20.0,
    assume_simple: bool = False,
):
    """Solve I*I f = I* d by conjugate gradients on the composition operator.

    The forward/backprojection pair is precomputed as sparse operators over
    the grid nodes inside the disk, so each iteration is two sparse matvecs.
    CG runs in the dV_g-weighted inner product (the operator is symmetric
    positive for that pairing in the continuum).  Returns the reconstruction
    and a log dict with the per-iteration relative residuals; if a residual
    increase is detected the best iterate so far is returned with
    ``stagnated`` set.
    """
    if grid is None:
        grid = GridSpec(64, 64, 1.0)
    if not assume_simple:
        report = verify_simplicity(metric, n_boundary=16, n_angles=16, t_max=40.0)
        if not report.simple:
            raise SimplicityError(report)

    fwd = ForwardMatrix(metric, grid, data.betas, data.alphas, tol=tol, t_max=t_max)
    back = BackprojectGeometry(
        metric, grid, data.betas, data.alphas, n_dir=n_dir, tol=tol, t_max=t_max
    )
    nodes = back.node_idx
    A = fwd.matrix[:, nodes]
    P = back.matrix
    pts = grid.points().reshape(-1, 2)[nodes]
    wts = np.exp(2.0 * metric.lam(pts)) * grid.cell_area

    def N(u):
        return P @ (A @ u)

    def inner(u, v):
        return float(np.sum(u * v * wts))

    b = P @ data.values.reshape(-1)
    bnorm = math.sqrt(max(inner(b, b), 1e-300))
    u = np.zeros(nodes.size)
    r = b - N(u)
    p = r.copy()
    rs = inner(r, r)
    resids = [math.sqrt(rs) / bnorm]
    best_u, best_res = u.copy(), resids[0]
    stagnated = False
    for _ in range(max_iter):
        if resids[-1] <= cg_tol:
            break
        Np = N(p)
        denom = inner(p, Np)
        if denom <= 0:
            stagnated = True
            break
        alpha = rs / denom
        u = u + alpha * p
        r = r - alpha * Np
        rs_new = inner(r, r)
        res = math.sqrt(rs_new) / bnorm
        # residual growth marks stagnation of CG on the (discretely only
        # near-symmetric) composition operator: keep the best iterate
        if res >= resids[-1]:
            stagnated = True
            break
        resids.append(res)
        if res < best_res:
            best_res = res
            best_u = u.copy()
        p = r + (rs_new / rs) * p
        rs = rs_new

    vals = np.zeros(grid.ny * grid.nx)
    vals[nodes] = best_u
    recon = ScalarField(grid, vals.reshape(grid.ny, grid.nx))
    recon.support_mask = grid.disk_mask()
    log = {
        "residuals": resids,
        "iterations": len(resids) - 1,
        "converged": resids[-1] <= cg_tol or best_res <= cg_tol,
        "stagnated": stagnated,
        "skipped_directions": back.skipped,
        "n_trapped_rays": int(fwd.trapped.sum()),
    }
    return recon, log


# ---------------------------------------------------------------------------
# non-injectivity demonstration on a large cap
# ---------------------------------------------------------------------------


def counterexample_demo(
    k: float,
    support_width: float = 0.05,
    metric=None,
    n_beta: int = 240,
    n_alpha: int = 240,
    tol: float = 1e-8,
    amplitude: float = 1.0,
) -> dict:
    """Odd antipodal bumps on a beyond-hemisphere cap integrate to ~0.

    Builds f = bump at the equator point p minus the same bump at -p (the
    cap's antipodal image of p), with p on the interior equator circle
    |x| = 1/k, and reports

        ratio = max |If| / (||f_+||_L1 / width)

    over the non-trapped fan.  On the cap every geodesic through one bump
    passes through the other with opposite sign, so the ratio collapses; the
    same phantom on another metric (pass metric=...) gives an O(1) ratio.
    """
    from .metrics import make_metric

    if k <= 1.0:
        raise ValueError("counterexample needs aperture k > 1 (equator inside the disk)")
    from .phantoms import smooth_bump

    if metric is None:
        metric = make_metric("sphere_cap", k=k)
    r0 = 1.0 / k
    p = (r0, 0.0)

    def f(pts):
        return amplitude * (
            smooth_bump(pts, p, support_width)
            - smooth_bump(pts, (-r0, 0.0), support_width)
        )

    data = xray_forward(metric, f, n_beta=n_beta, n_alpha=n_alpha, tol=tol)
    max_if = float(np.max(np.abs(np.where(data.trapped, 0.0, data.values))))

    quad = GridSpec(512, 512, 1.0)
    pos = np.clip(f(quad.points()), 0.0, None)
    norm_f = float(np.sum(pos) * quad.cell_area)
    ratio = max_if / (norm_f / support_width) if norm_f > 0 else 0.0
    return {
        "k": k,
        "support_width": support_width,
        "norm_f": norm_f,
        "max_If": max_if,
        "ratio": ratio,
        "n_trapped": int(data.trapped.sum()),
    }


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def save_fan_data(path, data: FanBeamData) -> None:
    """Header ``nbeta nalpha``, row-major values, then the 0/1 trapped mask."""
    with open(path, "w") as fh:
        fh.write(f"{data.betas.size} {data.alphas.size}\n")
        np.savetxt(fh, data.values.reshape(-1), fmt="%.17g")
        np.savetxt(fh, data.trapped.reshape(-1).astype(int), fmt="%d")


def load_fan_data(path) -> FanBeamData:
    with open(path) as fh:
        nb, na = map(int, fh.readline().split())
        flat = np.loadtxt(fh)
    vals = flat[: nb * na].reshape(nb, na)
    trapped = flat[nb * na :].reshape(nb, na).astype(bool)
    betas, alphas = fan_grids(nb, na)
    return FanBeamData(betas, alphas, vals, trapped)
