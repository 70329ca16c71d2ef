"""Conformal metrics g = e^{2*lam} * delta on the closed unit disk.

A metric is represented by the single scalar field ``lam`` together with its
first and second partial derivatives.  Analytic builtins carry closed-form
derivatives; gridded metrics interpolate a sampled ``lam`` with a bicubic
spline and differentiate the spline.

All evaluation methods are vectorized over a trailing point axis and are pure,
so a metric instance may be shared freely between workers.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

__all__ = [
    "ConformalMetric",
    "AnalyticMetric",
    "GriddedMetric",
    "TangentVector",
    "DomainError",
    "make_metric",
    "parse_metric_spec",
    "metric_norm",
    "metric_inner",
    "christoffel",
    "gaussian_curvature",
    "boundary_convexity",
    "load_gridded_lambda",
    "save_gridded_lambda",
    "BUILTIN_METRICS",
]


class DomainError(ValueError):
    """A point was queried outside the metric's domain of definition."""


@dataclass(frozen=True)
class TangentVector:
    """Coordinate components of a tangent vector at a point."""

    v1: float
    v2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v1, self.v2], dtype=float)


def _pts(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have a trailing axis of length 2")
    return x


class ConformalMetric:
    """Base class; subclasses provide lam / grad_lam / hess_lam."""

    #: points with |x| >= domain_radius raise DomainError (inf = whole plane)
    domain_radius: float = math.inf

    def lam(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad_lam(self, x) -> np.ndarray:
        """Return (d1 lam, d2 lam) with shape x.shape."""
        raise NotImplementedError

    def hess_lam(self, x) -> np.ndarray:
        """Return (d11 lam, d12 lam, d22 lam) stacked on the last axis."""
        raise NotImplementedError

    # -- derived pointwise quantities ------------------------------------

    def check_domain(self, x) -> np.ndarray:
        x = _pts(x)
        if np.isfinite(self.domain_radius):
            r2 = x[..., 0] ** 2 + x[..., 1] ** 2
            if np.any(r2 >= self.domain_radius**2):
                raise DomainError(
                    f"point outside metric domain |x| < {self.domain_radius}"
                )
        return x

    def conformal_factor(self, x) -> np.ndarray:
        """e^{lam(x)}, the length scaling of the metric."""
        return np.exp(self.lam(self.check_domain(x)))

    def speed(self, x, v) -> np.ndarray:
        """g-norm of tangent vectors v at points x."""
        v = np.asarray(v, dtype=float)
        return self.conformal_factor(x) * np.hypot(v[..., 0], v[..., 1])

    def curvature(self, x) -> np.ndarray:
        """Gaussian curvature K = -e^{-2 lam} (d11 + d22) lam."""
        x = self.check_domain(x)
        h = self.hess_lam(x)
        return -np.exp(-2.0 * self.lam(x)) * (h[..., 0] + h[..., 2])

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


class AnalyticMetric(ConformalMetric):
    """Metric whose lam and derivatives are closed-form numpy callables."""

    def __init__(self, name, params, lam_fn, grad_fn, hess_fn, domain_radius=math.inf):
        self.name = name
        self.params = dict(params)
        self._lam = lam_fn
        self._grad = grad_fn
        self._hess = hess_fn
        self.domain_radius = domain_radius

    def lam(self, x):
        return self._lam(_pts(x))

    def grad_lam(self, x):
        return self._grad(_pts(x))

    def hess_lam(self, x):
        return self._hess(_pts(x))

    def describe(self):
        return {"kind": "analytic", "name": self.name, "params": self.params}

    def __repr__(self):
        ps = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"AnalyticMetric({self.name}{', ' + ps if ps else ''})"


# ---------------------------------------------------------------------------
# builtin registry
# ---------------------------------------------------------------------------


def _euclidean():
    def lam(x):
        return np.zeros(x.shape[:-1])

    def grad(x):
        return np.zeros(x.shape)

    def hess(x):
        return np.zeros(x.shape[:-1] + (3,))

    return AnalyticMetric("euclidean", {}, lam, grad, hess)


def _sphere_cap(k=1.0):
    # lam = log(2k) - log(1 + k^2 r^2); constant curvature K = +1
    if k <= 0:
        raise ValueError("sphere_cap requires aperture k > 0")
    k2 = float(k) ** 2

    def lam(x):
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return np.log(2.0 * k) - np.log1p(k2 * r2)

    def grad(x):
        s = 1.0 + k2 * (x[..., 0] ** 2 + x[..., 1] ** 2)
        return -2.0 * k2 * x / s[..., None]

    def hess(x):
        x1, x2 = x[..., 0], x[..., 1]
        s = 1.0 + k2 * (x1**2 + x2**2)
        c = -2.0 * k2 / s
        q = 4.0 * k2 * k2 / s**2
        return np.stack([c + q * x1 * x1, q * x1 * x2, c + q * x2 * x2], axis=-1)

    return AnalyticMetric("sphere_cap", {"k": float(k)}, lam, grad, hess)


def _hyperbolic(radius=1.0):
    # lam = log 2 - log(1 - r^2/R^2); constant curvature K = -1/R^2.
    # For R = 1 this is the unit-disk factor, singular at |x| = 1, so the
    # metric domain is the open R-disk.
    if radius <= 0:
        raise ValueError("hyperbolic requires radius > 0")
    R2 = float(radius) ** 2
    # clamp keeps intermediate integrator stages finite if they graze |x| = R;
    # the public API still rejects such points through domain_radius
    s_floor = 1e-12

    def _s(x):
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return np.maximum(1.0 - r2 / R2, s_floor)

    def lam(x):
        return np.log(2.0) - np.log(_s(x))

    def grad(x):
        return (2.0 / R2) * x / _s(x)[..., None]

    def hess(x):
        x1, x2 = x[..., 0], x[..., 1]
        s = _s(x)
        c = 2.0 / (R2 * s)
        q = 4.0 / (R2 * R2 * s**2)
        return np.stack([c + q * x1 * x1, q * x1 * x2, c + q * x2 * x2], axis=-1)

    return AnalyticMetric(
        "hyperbolic", {"radius": float(radius)}, lam, grad, hess, domain_radius=radius
    )


def _gaussian_bump(amplitude=0.2, width=0.4, cx=0.0, cy=0.0):
    # lam = A exp(-|x - c|^2 / w^2): generic perturbation of the flat disk
    if width <= 0:
        raise ValueError("gaussian_bump requires width > 0")
    A, w2 = float(amplitude), float(width) ** 2
    c = np.array([float(cx), float(cy)])

    def lam(x):
        d = x - c
        return A * np.exp(-(d[..., 0] ** 2 + d[..., 1] ** 2) / w2)

    def grad(x):
        d = x - c
        e = A * np.exp(-(d[..., 0] ** 2 + d[..., 1] ** 2) / w2)
        return (-2.0 / w2) * e[..., None] * d

    def hess(x):
        d = x - c
        d1, d2 = d[..., 0], d[..., 1]
        e = A * np.exp(-(d1**2 + d2**2) / w2)
        pre = 4.0 / (w2 * w2)
        return np.stack(
            [
                e * (pre * d1 * d1 - 2.0 / w2),
                e * (pre * d1 * d2),
                e * (pre * d2 * d2 - 2.0 / w2),
            ],
            axis=-1,
        )

    return AnalyticMetric(
        "gaussian_bump",
        {"amplitude": A, "width": float(width), "cx": float(cx), "cy": float(cy)},
        lam,
        grad,
        hess,
    )


BUILTIN_METRICS = {
    "euclidean": _euclidean,
    "sphere_cap": _sphere_cap,
    "hyperbolic": _hyperbolic,
    "gaussian_bump": _gaussian_bump,
}


def make_metric(name: str, **params) -> AnalyticMetric:
    """Instantiate a builtin metric by name (dashes and underscores accepted)."""
    key = name.replace("-", "_").lower()
    if key not in BUILTIN_METRICS:
        raise ValueError(f"unknown metric {name!r}; builtins: {sorted(BUILTIN_METRICS)}")
    return BUILTIN_METRICS[key](**params)


def parse_metric_spec(spec: str) -> ConformalMetric:
    """Parse CLI-style specs like ``euclidean``, ``sphere-cap:k=1.5``,
    ``gaussian-bump:amplitude=0.2,width=0.4`` or ``gridded:path=lam.txt``."""
    name, _, rest = spec.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            k, _, v = item.partition("=")
            if not _:
                raise ValueError(f"bad metric parameter {item!r} (expected key=value)")
            params[k.strip()] = v.strip()
    if name.replace("-", "_").lower() == "gridded":
        if "path" not in params:
            raise ValueError("gridded metric spec needs path=<file>")
        return load_gridded_lambda(params["path"])
    return make_metric(name, **{k: float(v) for k, v in params.items()})


# ---------------------------------------------------------------------------
# gridded metrics
# ---------------------------------------------------------------------------


class GriddedMetric(ConformalMetric):
    """Metric defined by samples of lam on a uniform rectangle.

    The rectangle must contain the unit disk with a margin of at least two
    grid cells so that every derivative queried on the closed disk is an
    interior one.  Values off the nodes come from a bicubic spline of the
    samples and derivatives from the partial derivatives of that spline
    (second derivatives converge at O(h^2) in the grid spacing).
    """

    def __init__(self, xs, ys, values):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (ys.size, xs.size):
            raise ValueError("values must have shape (ny, nx)")
        if not np.all(np.isfinite(values)):
            raise ValueError("gridded lam contains non-finite samples")
        hx = xs[1] - xs[0]
        hy = ys[1] - ys[0]
        margin = 2.0 * max(hx, hy)
        if xs[0] > -1.0 - margin or xs[-1] < 1.0 + margin:
            raise ValueError("grid must contain the unit disk with a 2-cell margin (x)")
        if ys[0] > -1.0 - margin or ys[-1] < 1.0 + margin:
            raise ValueError("grid must contain the unit disk with a 2-cell margin (y)")
        self.xs, self.ys, self.values = xs, ys, values
        self.h = max(hx, hy)
        # RectBivariateSpline wants values indexed [x, y]
        self._spl = RectBivariateSpline(xs, ys, values.T, kx=3, ky=3)
        self.domain_radius = math.inf
        self._xlim = (xs[0], xs[-1])
        self._ylim = (ys[0], ys[-1])

    def _check(self, x):
        x = _pts(x)
        if (
            np.any(x[..., 0] < self._xlim[0])
            or np.any(x[..., 0] > self._xlim[1])
            or np.any(x[..., 1] < self._ylim[0])
            or np.any(x[..., 1] > self._ylim[1])
        ):
            raise DomainError("point outside the sampled rectangle")
        return x

    def _ev(self, x, dx, dy):
        x = self._check(x)
        flat = x.reshape(-1, 2)
        out = self._spl.ev(flat[:, 0], flat[:, 1], dx=dx, dy=dy)
        return out.reshape(x.shape[:-1])

    def lam(self, x):
        return self._ev(x, 0, 0)

    def grad_lam(self, x):
        return np.stack([self._ev(x, 1, 0), self._ev(x, 0, 1)], axis=-1)

    def hess_lam(self, x):
        return np.stack(
            [self._ev(x, 2, 0), self._ev(x, 1, 1), self._ev(x, 0, 2)], axis=-1
        )

    def describe(self):
        return {
            "kind": "gridded",
            "nx": int(self.xs.size),
            "ny": int(self.ys.size),
            "extent": [self._xlim, self._ylim],
        }

    @classmethod
    def from_function(cls, fn, n=201, extent=1.2):
        """Sample a callable lam(x) on an n x n grid over [-extent, extent]^2."""
        xs = np.linspace(-extent, extent, n)
        ys = np.linspace(-extent, extent, n)
        X, Y = np.meshgrid(xs, ys)
        return cls(xs, ys, fn(np.stack([X, Y], axis=-1)))


def load_gridded_lambda(path) -> GriddedMetric:
    """Read the gridded-lam text format.

    Header line ``nx ny xmin xmax ymin ymax`` followed by nx*ny whitespace
    separated values in row-major order (y outer, x inner).
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6:
            raise ValueError("gridded lam header must be 'nx ny xmin xmax ymin ymax'")
        nx, ny = int(header[0]), int(header[1])
        xmin, xmax, ymin, ymax = map(float, header[2:])
        data = np.loadtxt(fh)
    values = data.reshape(ny, nx)
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    return GriddedMetric(xs, ys, values)


def save_gridded_lambda(path, metric_or_values, xs=None, ys=None) -> None:
    """Write the gridded-lam text format (see load_gridded_lambda)."""
    if isinstance(metric_or_values, GriddedMetric):
        xs, ys, values = metric_or_values.xs, metric_or_values.ys, metric_or_values.values
    else:
        values = np.asarray(metric_or_values, dtype=float)
    buf = io.StringIO()
    buf.write(
        f"{xs.size} {ys.size} {float(xs[0])!r} {float(xs[-1])!r} "
        f"{float(ys[0])!r} {float(ys[-1])!r}\n"
    )
    np.savetxt(buf, values.reshape(-1), fmt="%.17g")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


# ---------------------------------------------------------------------------
# pointwise geometric quantities
# ---------------------------------------------------------------------------


def metric_norm(metric: ConformalMetric, x, v) -> np.ndarray:
    """g-norm |v|_g = e^{lam(x)} |v| of tangent vectors."""
    if isinstance(v, TangentVector):
        v = v.as_array()
    return metric.speed(x, v)


def metric_inner(metric: ConformalMetric, x, v, w) -> np.ndarray:
    """g-inner product <v, w>_g = e^{2 lam(x)} (v . w)."""
    if isinstance(v, TangentVector):
        v = v.as_array()
    if isinstance(w, TangentVector):
        w = w.as_array()
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    dot = v[..., 0] * w[..., 0] + v[..., 1] * w[..., 1]
    return np.exp(2.0 * metric.lam(metric.check_domain(x))) * dot


def christoffel(metric: ConformalMetric, x) -> np.ndarray:
    """Christoffel symbols Gamma^l_{jk}, shape (..., 2, 2, 2), index order (l, j, k).

    For a conformal metric these reduce to combinations of the first
    derivatives of lam:

        Gamma^l_{jk} = d_j lam * delta_{kl} + d_k lam * delta_{jl}
                       - d_l lam * delta_{jk}
    """
    x = metric.check_domain(x)
    g = metric.grad_lam(x)
    l1, l2 = g[..., 0], g[..., 1]
    G = np.zeros(x.shape[:-1] + (2, 2, 2))
    G[..., 0, 0, 0] = l1
    G[..., 0, 0, 1] = l2
    G[..., 0, 1, 0] = l2
    G[..., 0, 1, 1] = -l1
    G[..., 1, 0, 0] = -l2
    G[..., 1, 0, 1] = l1
    G[..., 1, 1, 0] = l1
    G[..., 1, 1, 1] = l2
    return G


def gaussian_curvature(metric: ConformalMetric, x) -> np.ndarray:
    """Gaussian curvature K(x) = -e^{-2 lam} (d11 lam + d22 lam)."""
    return metric.curvature(x)


def boundary_convexity(metric: ConformalMetric, beta) -> np.ndarray:
    """Convexity indicator of the unit circle at boundary angles beta.

    Returns 1 + d_r lam evaluated at (cos beta, sin beta); the boundary is
    strictly convex for the metric iff this is positive everywhere (it equals
    the geodesic curvature of the boundary up to the positive factor
    e^{-lam}).
    """
    beta = np.asarray(beta, dtype=float)
    x = np.stack([np.cos(beta), np.sin(beta)], axis=-1)
    g = metric.grad_lam(metric.check_domain(x))
    dr = g[..., 0] * x[..., 0] + g[..., 1] * x[..., 1]
    return 1.0 + dr
