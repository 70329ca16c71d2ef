import math

import numpy as np
import pytest

from geoxray.fields import GridSpec
from geoxray.geodesics import PhaseState, trace_geodesic
from geoxray.lightray import (
    SpacetimePotential,
    lightray_forward,
    load_lightray_data,
    save_lightray_data,
    sigma_fourier_slice,
    sigma_fubini_check,
    sigma_grid_bounds,
)
from geoxray.metrics import make_metric
from geoxray.phantoms import PhantomSpec, generate, smooth_window_1d
from geoxray.radon import radon_line_integral
from geoxray.xray import fan_to_line, xray_forward

EU = make_metric("euclidean")
CAP = make_metric("sphere-cap", k=0.5)
GRID = GridSpec(64, 64, 1.0)


def make_potential(seed=3, t_center=0.5, t_width=0.4):
    return generate(
        PhantomSpec(
            "separable_spacetime",
            GRID,
            seed=seed,
            params={"t_center": t_center, "t_width": t_width},
        )
    )


def test_zero_potential():
    q = SpacetimePotential(
        q0=lambda pts: np.zeros(np.asarray(pts).shape[:-1]),
        psi=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        t_support=(-1.0, 1.0),
    )
    data = lightray_forward(EU, q, np.linspace(-2, 2, 31), n_beta=8, n_alpha=8)
    assert np.all(data.values == 0.0)
    vals, _ = sigma_fourier_slice(EU, q, rho=1.7, data=data)
    assert np.all(vals == 0.0)


def test_static_reduction_to_xray():
    f = generate(PhantomSpec("bump_mixture", GRID, seed=9))
    q = SpacetimePotential(
        q0=f,
        psi=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        t_support=(-5.0, 5.0),
    )
    data = lightray_forward(EU, q, np.array([0.0]), n_beta=24, n_alpha=24)
    stat = xray_forward(EU, f, n_beta=24, n_alpha=24)
    rel = np.linalg.norm(data.values[:, 0] - stat.values.reshape(-1)) / np.linalg.norm(
        stat.values
    )
    assert rel <= 1e-3


def test_separable_against_per_ray_quadrature_oracle():
    q = make_potential()
    sig = 0.3
    data = lightray_forward(CAP, q, np.array([sig]), n_beta=10, n_alpha=8)
    betas = data.betas
    alphas = data.alphas
    # independent oracle: trace a single geodesic, dense trapezoid in t
    for bi, ai in [(0, 3), (4, 2), (7, 6)]:
        theta = betas[bi] + math.pi + alphas[ai]
        path = trace_geodesic(CAP, PhaseState((math.cos(betas[bi]), math.sin(betas[bi])), theta), tol=1e-10)
        ts = np.linspace(0.0, path.exit_time, 4001)
        xs = np.stack(
            [np.interp(ts, path.ts, path.xs[:, 0]), np.interp(ts, path.ts, path.xs[:, 1])],
            axis=-1,
        )
        oracle = np.trapezoid(q.eval(xs, ts + sig), ts)
        got = data.values[bi * alphas.size + ai, 0]
        assert abs(got - oracle) <= 2e-4 * max(1.0, abs(oracle))


def test_fubini_identity():
    q = make_potential()
    rep = sigma_fubini_check(EU, q, n_sigma=200)
    assert rep["rel_residual"] <= 1e-3
    rep_cap = sigma_fubini_check(CAP, q, n_sigma=200)
    assert rep_cap["rel_residual"] <= 1e-3


def test_fubini_three_way_with_radon_oracle():
    # flat metric: the sigma integral must also match the Radon transform of
    # the time integral Q directly
    q = make_potential(seed=5)
    fan_n = 16
    rep = sigma_fubini_check(EU, q, n_sigma=240, n_beta=fan_n, n_alpha=fan_n)
    assert rep["rel_residual"] <= 1e-3
    data = lightray_forward(
        EU, q, np.linspace(*rep["sigma_range"], 240), n_beta=fan_n, n_alpha=fan_n
    )
    lhs, _ = sigma_fourier_slice(EU, q, rho=0.0, data=data)
    Q = q.time_integral()
    B, A = np.meshgrid(data.betas, data.alphas, indexing="ij")
    s, phi = fan_to_line(B.ravel(), A.ravel())
    from geoxray.fields import ScalarField

    Qf = ScalarField.from_function(Q, GridSpec(256, 256, 1.0))
    oracle = radon_line_integral(Qf, s, phi)
    rel = np.linalg.norm(lhs.real - oracle) / np.linalg.norm(oracle)
    assert rel <= 1e-3


def test_sigma_grid_too_short_refused():
    q = make_potential()
    with pytest.raises(ValueError, match="sigma grid"):
        sigma_fubini_check(EU, q, sigmas=np.linspace(-0.5, 0.5, 50))


def test_rho_zero_matches_sigma_integral_exactly():
    q = make_potential()
    sig = np.linspace(-4.0, 2.5, 150)
    data = lightray_forward(EU, q, sig, n_beta=12, n_alpha=12)
    v0, _ = sigma_fourier_slice(EU, q, rho=0.0, data=data)
    direct = np.trapezoid(data.values, sig, axis=1)
    assert np.abs(v0 - direct).max() <= 1e-10


def test_time_harmonic_window_at_matching_frequency():
    rho0 = 3.0
    f = generate(PhantomSpec("bump_mixture", GRID, seed=13))

    def psi(t):
        t = np.asarray(t, dtype=float)
        return np.exp(1j * rho0 * t) * smooth_window_1d(t, 0.4, 0.35)

    q = SpacetimePotential(q0=f, psi=psi, t_support=(-1.0, 1.8))
    lo, hi = sigma_grid_bounds(q, 2.0)
    sig = np.linspace(lo - 0.3, hi + 0.3, 400)
    vals, data = sigma_fourier_slice(EU, q, rho=rho0, sigmas=sig, n_beta=10, n_alpha=10)

    # oracle: int e^{i rho0 t} qhat_t(gamma(t), rho0) dt with
    # qhat_t(x, rho0) = q0(x) * int w(s) ds for this time-harmonic window
    W = np.trapezoid(smooth_window_1d(np.linspace(-1, 1.8, 3001), 0.4, 0.35), np.linspace(-1, 1.8, 3001))
    for ray in (15, 44, 77):
        bi, ai = divmod(ray, data.alphas.size)
        theta = data.betas[bi] + math.pi + data.alphas[ai]
        path = trace_geodesic(EU, PhaseState((math.cos(data.betas[bi]), math.sin(data.betas[bi])), theta))
        ts = np.linspace(0, path.exit_time, 3001)
        xs = np.stack(
            [np.interp(ts, path.ts, path.xs[:, 0]), np.interp(ts, path.ts, path.xs[:, 1])],
            axis=-1,
        )
        oracle = W * np.trapezoid(np.exp(1j * rho0 * ts) * f(xs), ts)
        assert abs(abs(vals[ray]) - abs(oracle)) <= 2e-3 * max(abs(oracle), 1e-6)


def test_time_translation_covariance():
    q = make_potential(seed=7)
    a_cells = 12
    sig = np.linspace(-4.0, 3.0, 141)
    dsig = sig[1] - sig[0]
    a = a_cells * dsig
    q_shift = SpacetimePotential(
        q0=q.q0,
        psi=lambda t: q.psi(np.asarray(t, dtype=float) - a),
        t_support=(q.t_support[0] + a, q.t_support[1] + a),
    )
    base = lightray_forward(EU, q, sig, n_beta=10, n_alpha=10)
    shifted = lightray_forward(EU, q_shift, sig, n_beta=10, n_alpha=10)
    # aligned shift: values shift by exactly a_cells grid slots
    np.testing.assert_allclose(
        shifted.values[:, a_cells:], base.values[:, :-a_cells], atol=1e-12
    )
    # non-aligned shift agrees after resampling, within interpolation error
    b = 0.37 * dsig
    q_frac = SpacetimePotential(
        q0=q.q0,
        psi=lambda t: q.psi(np.asarray(t, dtype=float) - b),
        t_support=(q.t_support[0] + b, q.t_support[1] + b),
    )
    frac = lightray_forward(EU, q_frac, sig, n_beta=10, n_alpha=10)
    for ray in (5, 50):
        resampled = np.interp(sig - b, sig, base.values[ray].real)
        err = np.abs(frac.values[ray].real - resampled).max()
        assert err <= 0.5 * dsig**2 * np.abs(np.gradient(np.gradient(base.values[ray].real))).max() / dsig**2 + 1e-3


def test_linearity_in_q():
    qa = make_potential(seed=1)
    qb = make_potential(seed=2)

    def q_sum_psi(t):
        return qa.psi(t)

    sig = np.linspace(-3.5, 2.5, 60)
    da = lightray_forward(EU, qa, sig, n_beta=8, n_alpha=8).values
    db = lightray_forward(EU, qb, sig, n_beta=8, n_alpha=8).values

    class Mix:
        t_support = (
            min(qa.t_support[0], qb.t_support[0]),
            max(qa.t_support[1], qb.t_support[1]),
        )

        @staticmethod
        def eval(pts, t):
            return 2.0 * qa.eval(pts, t) - 0.3 * qb.eval(pts, t)

    dm = lightray_forward(EU, Mix(), sig, n_beta=8, n_alpha=8).values
    np.testing.assert_allclose(dm, 2.0 * da - 0.3 * db, atol=1e-12)


def test_gridded_potential_matches_separable():
    q = make_potential(seed=4)
    tg = np.linspace(q.t_support[0], q.t_support[1], 801)
    space = q.q0.values[:, :, None]
    vals = space * np.asarray(q.psi(tg))[None, None, :]
    q_grid = SpacetimePotential(q0=q.q0, t_grid=tg, values=vals, t_support=q.t_support)
    sig = np.linspace(-3.5, 2.5, 40)
    a = lightray_forward(EU, q, sig, n_beta=8, n_alpha=8).values
    b = lightray_forward(EU, q_grid, sig, n_beta=8, n_alpha=8).values
    assert np.abs(a - b).max() <= 2e-3 * max(1.0, np.abs(a).max())


def test_lightray_file_roundtrip(tmp_path):
    q = make_potential(seed=6)
    sig = np.linspace(-3.0, 2.0, 25)
    data = lightray_forward(EU, q, sig, n_beta=6, n_alpha=5)
    path = tmp_path / "light.txt"
    save_lightray_data(path, data)
    back = load_lightray_data(path)
    np.testing.assert_allclose(back.values, data.values, atol=0)
    assert np.array_equal(back.trapped, data.trapped)
    np.testing.assert_allclose(back.sigmas, data.sigmas, atol=1e-12)


def test_values_vanish_outside_sigma_support():
    q = make_potential(seed=8)
    lo, hi = sigma_grid_bounds(q, 2.0)
    sig = np.array([lo - 0.5, hi + 0.5])
    data = lightray_forward(EU, q, sig, n_beta=8, n_alpha=8)
    assert np.all(data.values == 0.0)
