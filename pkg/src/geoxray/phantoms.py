"""Deterministic phantom generators.

Every "random smooth" field used by the tests and demos comes from here, fully
determined by an integer seed.  The smooth bumps are Gaussians multiplied by a
C-infinity cutoff window so that they have *exact* compact support (the
stencil and integration-by-parts checks rely on fields vanishing identically
on a boundary collar) while keeping derivative magnitudes moderate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import GridSpec, ScalarField

__all__ = [
    "PhantomSpec",
    "generate",
    "smooth_bump",
    "bump_mixture_fn",
    "sm_bump_mixture",
    "fan_smooth_values",
    "smoothstep",
]


def _phi(t):
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = _phi(t)
    b = _phi(1.0 - t)
    return a / (a + b)


def smooth_bump(pts, center, width, amplitude=1.0, cut=3.5, taper=0.42):
    """Gaussian bump with an exact compact-support window.

    exp(-rho^2/width^2) * W(rho / (cut*width)) where W is a smooth step that
    equals 1 for arguments below 1 - taper and 0 at 1.  The support is the
    closed disk of radius cut*width about the center.
    """
    pts = np.asarray(pts, dtype=float)
    d = pts - np.asarray(center, dtype=float)
    rho = np.hypot(d[..., 0], d[..., 1])
    s = rho / (cut * width)
    return amplitude * np.exp(-((rho / width) ** 2)) * smoothstep((1.0 - s) / taper)


def smooth_window_1d(t, center, width, cut=3.5, taper=0.42):
    """1D version of smooth_bump, used for time windows."""
    t = np.asarray(t, dtype=float)
    rho = np.abs(t - center)
    s = rho / (cut * width)
    return np.exp(-((rho / width) ** 2)) * smoothstep((1.0 - s) / taper)


def bump_mixture_fn(seed, n_bumps=4, margin=0.1, width_range=(0.17, 0.26), cut=3.5):
    """Seeded sum of compactly supported bumps inside the unit disk.

    Returns (callable pts -> values, support_radius).  Supports stay inside
    radius 1 - margin by construction.
    """
    rng = np.random.default_rng(seed)
    terms = []
    rmax = 0.0
    for _ in range(n_bumps):
        w = rng.uniform(*width_range)
        cmax = max(1.0 - margin - cut * w, 0.0)
        r = cmax * np.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2 * np.pi)
        c = (r * np.cos(ang), r * np.sin(ang))
        a = rng.uniform(0.4, 1.0) * rng.choice([-1.0, 1.0])
        terms.append((c, w, a))
        rmax = max(rmax, r + cut * w)

    def fn(pts):
        out = np.zeros(np.asarray(pts).shape[:-1])
        for c, w, a in terms:
            out += smooth_bump(pts, c, w, a, cut=cut)
        return out

    return fn, rmax


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for a deterministic test field.

    kind: one of gaussian_bump, bump_mixture, disk_indicator,
    odd_antipodal_pair, separable_spacetime.
    """

    kind: str
    grid: GridSpec
    seed: int = 0
    params: dict = dc_field(default_factory=dict)
    margin: float = 0.1

    def to_json(self, **kw) -> str:
        payload = {
            "kind": self.kind,
            "grid": {"nx": self.grid.nx, "ny": self.grid.ny, "extent": self.grid.extent},
            "seed": self.seed,
            "params": self.params,
            "margin": self.margin,
        }
        return json.dumps(payload, **kw)

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        payload = json.loads(text)
        grid = GridSpec(**payload.pop("grid"))
        return cls(grid=grid, **payload)


def _gaussian_bump_field(spec: PhantomSpec) -> ScalarField:
    p = spec.params
    center = tuple(p.get("center", (0.0, 0.0)))
    width = float(p.get("width", 0.3))
    amp = float(p.get("amplitude", 1.0))
    if np.hypot(*center) + 3.0 * width > 1.0 - spec.margin + 1e-12:
        raise ValueError(
            "gaussian bump leaks past the support margin: need |center| + 3*width "
            f"<= {1.0 - spec.margin}"
        )

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        d = pts - np.asarray(center)
        return amp * np.exp(-(d[..., 0] ** 2 + d[..., 1] ** 2) / width**2)

    f = ScalarField.from_function(fn, spec.grid)
    f.support_mask = spec.grid.disk_mask(1.0 - spec.margin)
    return f


def _bump_mixture_field(spec: PhantomSpec) -> ScalarField:
    p = spec.params
    fn, rmax = bump_mixture_fn(
        spec.seed,
        n_bumps=int(p.get("n_bumps", 4)),
        margin=spec.margin,
        width_range=tuple(p.get("width_range", (0.17, 0.26))),
    )
    f = ScalarField.from_function(fn, spec.grid)
    f.support_mask = spec.grid.disk_mask(rmax)
    return f


def _disk_indicator_field(spec: PhantomSpec) -> ScalarField:
    radius = float(spec.params.get("radius", 0.6))
    amp = float(spec.params.get("amplitude", 1.0))
    if radius > 1.0 - spec.margin:
        raise ValueError("disk indicator radius violates the support margin")

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        r2 = pts[..., 0] ** 2 + pts[..., 1] ** 2
        return np.where(r2 <= radius**2, amp, 0.0)

    f = ScalarField.from_function(fn, spec.grid)
    f.support_mask = spec.grid.disk_mask(radius)
    return f


def _odd_antipodal_field(spec: PhantomSpec) -> ScalarField:
    p = spec.params
    r0 = float(p.get("radius", 0.65))
    phi0 = float(p.get("angle", 0.0))
    width = float(p.get("width", 0.05))
    amp = float(p.get("amplitude", 1.0))
    cut = float(p.get("cut", 3.5))
    cp = (r0 * np.cos(phi0), r0 * np.sin(phi0))
    cm = (-cp[0], -cp[1])
    if r0 + cut * width > 1.0 - spec.margin:
        raise ValueError("antipodal bumps violate the support margin")

    def fn(pts):
        return smooth_bump(pts, cp, width, amp, cut=cut) - smooth_bump(
            pts, cm, width, amp, cut=cut
        )

    f = ScalarField.from_function(fn, spec.grid)
    f.support_mask = spec.grid.disk_mask(r0 + cut * width)
    return f


def _separable_spacetime(spec: PhantomSpec):
    from .lightray import SpacetimePotential

    p = spec.params
    t_center = float(p.get("t_center", 0.0))
    t_width = float(p.get("t_width", 0.5))
    cut = 3.5
    sub = PhantomSpec(
        str(p.get("spatial_kind", "bump_mixture")),
        spec.grid,
        seed=spec.seed,
        params=dict(p.get("spatial_params", {})),
        margin=spec.margin,
    )
    q0 = generate(sub)

    def psi(t):
        return smooth_window_1d(t, t_center, t_width, cut=cut)

    t_support = (t_center - cut * t_width, t_center + cut * t_width)
    return SpacetimePotential(q0=q0, psi=psi, t_support=t_support)


_GENERATORS = {
    "gaussian_bump": _gaussian_bump_field,
    "bump_mixture": _bump_mixture_field,
    "disk_indicator": _disk_indicator_field,
    "odd_antipodal_pair": _odd_antipodal_field,
    "separable_spacetime": _separable_spacetime,
}


def generate(spec: PhantomSpec):
    """Build the field described by spec; identical specs give bit-identical
    arrays."""
    if spec.kind not in _GENERATORS:
        raise ValueError(f"unknown phantom kind {spec.kind!r}; have {sorted(_GENERATORS)}")
    return _GENERATORS[spec.kind](spec)


# ---------------------------------------------------------------------------
# seeded fields on the sphere bundle and on the boundary fan
# ---------------------------------------------------------------------------


def sm_bump_mixture_fn(
    seed,
    extent=1.0,
    margin=0.1,
    n_terms=3,
    max_mode=3,
    width_range=(0.18, 0.26),
):
    """Closed form of the seeded SM test field, as a callable u(pts, theta).

    u(x, theta) = sum_j b_j(x) (a_j cos(m_j theta) + c_j sin(m_j theta)) with
    compactly supported bumps b_j inside radius min(1, extent) - margin.
    """
    rng = np.random.default_rng(seed)
    terms = []
    rlim = min(1.0, extent) - margin
    for _ in range(n_terms):
        w = rng.uniform(*width_range)
        cmax = max(rlim - 3.5 * w, 0.0)
        r = cmax * np.sqrt(rng.uniform())
        ang = rng.uniform(0, 2 * np.pi)
        m = int(rng.integers(0, max_mode + 1))
        a, c = rng.normal(size=2)
        terms.append(((r * np.cos(ang), r * np.sin(ang)), w, m, a, c))

    def fn(pts, theta):
        pts = np.asarray(pts, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(np.broadcast_shapes(pts.shape[:-1], theta.shape))
        for center, w, m, a, c in terms:
            b = smooth_bump(pts, center, w)
            out = out + b * (a * np.cos(m * theta) + c * np.sin(m * theta))
        return out

    return fn


def sm_bump_mixture(
    seed,
    nx=64,
    ny=64,
    ntheta=128,
    extent=1.0,
    margin=0.1,
    n_terms=3,
    max_mode=3,
    width_range=(0.18, 0.26),
):
    """Seeded smooth compactly supported function on SM, sampled on a grid.

    Grid sampling of sm_bump_mixture_fn; the support respects both the disk
    margin and the grid collar.
    """
    from .smfields import SMField

    fn = sm_bump_mixture_fn(
        seed,
        extent=extent,
        margin=margin,
        n_terms=n_terms,
        max_mode=max_mode,
        width_range=width_range,
    )
    sm = SMField.zeros(nx, ny, ntheta, extent=extent)
    sm.values = fn(sm.grid.points()[:, :, None, :], sm.thetas[None, None, :])
    return sm


def fan_smooth_values(seed, betas, alphas, n_terms=3, alpha_halfwidth=1.45):
    """Seeded smooth function h(beta, alpha) on the inward boundary fan.

    Trigonometric in the periodic boundary angle, compactly supported bumps
    in the inward angle within |alpha| < alpha_halfwidth (< pi/2, so the
    values vanish near tangent rays).
    """
    rng = np.random.default_rng(seed)
    B, A = np.meshgrid(betas, alphas, indexing="ij")
    out = np.zeros_like(B)
    for _ in range(n_terms):
        m = rng.integers(0, 4)
        ph = rng.uniform(0, 2 * np.pi)
        ca = rng.uniform(-0.4, 0.4)
        wa = rng.uniform(0.3, 0.45)
        amp = rng.normal()
        cut = min(3.5, (alpha_halfwidth - abs(ca)) / wa)
        out += amp * np.cos(m * B + ph) * smooth_window_1d(A, ca, wa, cut=cut)
    return out
