import json
import math

import numpy as np
import pytest

from geoxray.geodesics import (
    PhaseState,
    batch_conjugate_scan,
    conjugate_scan,
    exit_time,
    fan_states,
    riccati_solve,
    trace_geodesic,
    verify_simplicity,
)
from geoxray._stepper import step_size_for, trace_to_exit
from geoxray.metrics import make_metric

EU = make_metric("euclidean")
CAP_SMALL = make_metric("sphere-cap", k=0.5)
CAP_BIG = make_metric("sphere-cap", k=1.5)
BUMP = make_metric("gaussian_bump", amplitude=0.2, width=0.4)
HYP = make_metric("hyperbolic", radius=1.25)


def chord_exit_time(x, v):
    """Euclidean oracle: first t >= 0 with |x + t v| = 1 for |v| = 1."""
    xv = np.dot(x, v)
    return -xv + math.sqrt(xv**2 + 1.0 - np.dot(x, x))


def test_euclid_exit_matches_chord_formula():
    rng = np.random.default_rng(3)
    for _ in range(25):
        r = 0.95 * math.sqrt(rng.random())
        a = rng.uniform(0, 2 * math.pi)
        x = np.array([r * math.cos(a), r * math.sin(a)])
        theta = rng.uniform(-math.pi, math.pi)
        v = np.array([math.cos(theta), math.sin(theta)])
        tau = exit_time(EU, PhaseState(tuple(x), theta), tol=1e-10)
        assert abs(tau - chord_exit_time(x, v)) <= 1e-8


def test_trace_straight_segments():
    p = trace_geodesic(EU, PhaseState((0.0, 0.0), 0.0))
    assert p.exit_time == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(p.exit_point, [1.0, 0.0], atol=1e-10)
    p = trace_geodesic(EU, PhaseState((0.5, 0.0), math.pi))
    assert p.exit_time == pytest.approx(1.5, abs=1e-10)
    np.testing.assert_allclose(p.exit_point, [-1.0, 0.0], atol=1e-10)
    assert not p.trapped


def test_boundary_outward_exits_immediately():
    assert exit_time(EU, PhaseState((1.0, 0.0), 0.0)) == 0.0
    assert exit_time(CAP_SMALL, PhaseState((0.0, 1.0), math.pi / 2)) == 0.0


@pytest.mark.parametrize("metric", [EU, CAP_SMALL, CAP_BIG, BUMP, HYP], ids=["eu", "cap05", "cap15", "bump", "hyp125"])
def test_unit_speed_conservation(metric):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(6):
        x = 0.7 * math.sqrt(rng.random()) * np.array([1.0, 0.0])
        theta = rng.uniform(-math.pi, math.pi)
        p = trace_geodesic(metric, PhaseState(tuple(x), theta), t_max=15.0, tol=1e-10)
        worst = max(worst, p.step_stats["max_speed_drift"])
    assert worst <= 1e-8


@pytest.mark.parametrize("metric", [CAP_SMALL, BUMP, HYP], ids=["cap05", "bump", "hyp125"])
def test_time_reversal(metric):
    start = PhaseState((0.3, -0.2), 0.7)
    fwd = trace_geodesic(metric, start, tol=1e-10)
    assert not fwd.trapped
    # reverse at the exit point and flow for exactly the exit time; the state
    # at that instant (recorded through the t_max cutoff) must be the start
    h = step_size_for(1e-10)
    x1 = fwd.xs[-1]
    th1 = fwd.thetas[-1]
    v1 = -PhaseState((float(x1[0]), float(x1[1])), float(th1)).velocity(metric)
    out = trace_to_exit(metric, x1[None, :], v1[None, :], h=h, t_max=fwd.exit_time)
    assert out["trapped"][0]
    np.testing.assert_allclose(out["x_end"][0], np.asarray(start.x), atol=1e-6)
    v_expected = -start.velocity(metric)
    np.testing.assert_allclose(out["v_end"][0], v_expected, atol=1e-6)


def test_exit_point_fourth_order_convergence():
    # self-convergence on a curved metric (straight lines are integrated
    # exactly, so the Euclidean case sits at the refinement floor)
    betas = np.linspace(0, 2 * math.pi, 6, endpoint=False)
    alphas = np.array([-0.8, -0.3, 0.4, 1.0])
    x0, v0, _ = fan_states(CAP_SMALL, betas, alphas)
    ref = trace_to_exit(CAP_SMALL, x0, v0, h=0.02 / 64, t_max=10.0)
    errs = []
    for lev in range(4):
        out = trace_to_exit(CAP_SMALL, x0, v0, h=0.02 / 2**lev, t_max=10.0)
        errs.append(np.max(np.linalg.norm(out["x_end"] - ref["x_end"], axis=1)))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(3)]
    assert all(3.5 <= o <= 4.5 for o in orders), orders


def test_trapped_equator_on_large_cap():
    # the circle |x| = 1/k is the equator geodesic of the cap
    k = 1.5
    start = PhaseState((1.0 / k, 0.0), math.pi / 2)
    assert exit_time(CAP_BIG, start, t_max=100.0) == math.inf
    path = trace_geodesic(CAP_BIG, start, t_max=100.0, tol=1e-8)
    assert path.trapped and path.exit_time == math.inf
    radii = np.linalg.norm(path.xs, axis=1)
    assert np.abs(radii - 1.0 / k).max() <= 1e-3


def test_conjugate_scan_flat_and_negative():
    assert conjugate_scan(EU, PhaseState((0.0, 0.0), 0.3)) is None
    assert conjugate_scan(HYP, PhaseState((-0.9, 0.0), 0.1), t_max=30.0) is None


def test_conjugate_time_pi_on_unit_curvature():
    # K = 1 for every cap aperture; any geodesic of length >= pi sees t = pi
    for k in (1.2, 1.5, 2.0):
        cap = make_metric("sphere-cap", k=k)
        assert 4 * math.atan(k) > math.pi
        t = conjugate_scan(cap, PhaseState((1.0, 0.0), math.pi), t_max=10.0, tol=1e-10)
        assert t == pytest.approx(math.pi, abs=1e-6)
    # independence of the chosen geodesic (off-center chords long enough)
    betas = np.linspace(0, 2 * math.pi, 8, endpoint=False)
    alphas = np.array([-0.25, 0.0, 0.3])
    x0, v0, _ = fan_states(CAP_BIG, betas, alphas)
    conj, out = batch_conjugate_scan(CAP_BIG, x0, v0, t_max=20.0, tol=1e-9)
    long_enough = out["tau"] >= math.pi
    assert np.all(~np.isnan(conj[long_enough]))
    assert np.abs(conj[long_enough] - math.pi).max() <= 1e-6


def test_short_geodesics_have_no_conjugate_points():
    # cap k = 0.5: every chord is shorter than pi
    betas = np.linspace(0, 2 * math.pi, 12, endpoint=False)
    alphas = np.linspace(-1.2, 1.2, 9)
    x0, v0, _ = fan_states(CAP_SMALL, betas, alphas)
    conj, out = batch_conjugate_scan(CAP_SMALL, x0, v0, t_max=20.0)
    assert np.all(out["tau"] < math.pi)
    assert np.all(np.isnan(conj))


# ---------------------------------------------------------------------------
# Riccati
# ---------------------------------------------------------------------------


def test_riccati_real_blowup_at_one():
    sol = riccati_solve(0.0, 1.0, 0.0, -1.0, 2.0)
    assert sol.blowup_time == pytest.approx(1.0, abs=1e-8)
    assert not sol.y_nonvanishing
    # z(t) = -1, y(t) = 1 - t along the way
    i = np.searchsorted(sol.times, 0.5)
    assert sol.H[i, 0, 0].real == pytest.approx(-1.0 / (1.0 - sol.times[i]), rel=1e-9)


def test_riccati_complex_certified():
    sol = riccati_solve(0.0, 1.0, 0.0, 1j, 10.0)
    assert sol.blowup_time is None
    assert sol.y_nonvanishing
    assert sol.im_positive_definite
    expected = 1j / (1.0 + 1j * sol.times)
    np.testing.assert_allclose(sol.H[:, 0, 0], expected, atol=1e-10)
    im = sol.H[:, 0, 0].imag
    np.testing.assert_allclose(im, 1.0 / (1.0 + sol.times**2), atol=1e-10)
    assert np.all(im > 0)


def test_riccati_zero_solution():
    sol = riccati_solve(0.0, 1.0, 0.0, 0.0, 5.0)
    np.testing.assert_allclose(sol.H[:, 0, 0], 0.0, atol=1e-14)
    assert sol.blowup_time is None


def test_riccati_matrix_positive_definite_property():
    rng = np.random.default_rng(19)
    for trial in range(20):
        B = rng.normal(size=(2, 2))
        C = rng.normal(size=(2, 2))
        C = 0.5 * (C + C.T)
        F = rng.normal(size=(2, 2))
        F = 0.5 * (F + F.T)
        A = rng.normal(size=(2, 2))
        im0 = A @ A.T + 0.3 * np.eye(2)
        re0 = rng.normal(size=(2, 2))
        H0 = 0.5 * (re0 + re0.T) + 1j * im0
        sol = riccati_solve(B, C, F, H0, 5.0)
        assert sol.im_positive_definite, trial
        assert sol.min_abs_det_y > 1e-8
        # symmetry of H at every sample
        np.testing.assert_allclose(sol.H, np.transpose(sol.H, (0, 2, 1)))


def test_riccati_time_dependent_coefficients():
    F = lambda t: np.array([[math.sin(t), 0.0], [0.0, math.cos(t)]])
    sol = riccati_solve(np.zeros((2, 2)), np.eye(2), F, 1j * np.eye(2), 4.0)
    assert sol.im_positive_definite and sol.blowup_time is None


def test_riccati_rejects_nonsymmetric_h0():
    with pytest.raises(ValueError):
        riccati_solve(0.0, 1.0, 0.0, np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)


# ---------------------------------------------------------------------------
# simplicity
# ---------------------------------------------------------------------------


def test_simplicity_euclidean():
    rep = verify_simplicity(EU, n_boundary=16, n_angles=16, t_max=30.0)
    assert rep.simple and rep.strictly_convex and rep.nontrapping and rep.no_conjugate_points
    assert rep.witnesses == []


def test_simplicity_small_cap():
    rep = verify_simplicity(CAP_SMALL, n_boundary=16, n_angles=16, t_max=30.0)
    assert rep.simple


def test_simplicity_large_cap_fails_all_three():
    rep = verify_simplicity(CAP_BIG, n_boundary=16, n_angles=16, t_max=60.0)
    assert not rep.simple
    assert not rep.strictly_convex
    assert not rep.nontrapping
    assert not rep.no_conjugate_points
    kinds = {w["failure_kind"] for w in rep.witnesses}
    assert {"trapped", "conjugate_point", "nonconvex_boundary"} <= kinds
    payload = json.loads(rep.to_json())
    assert payload["simple"] is False
    assert isinstance(payload["witnesses"], list) and payload["witnesses"]


def test_simplicity_rejects_tiny_sampling():
    with pytest.raises(ValueError):
        verify_simplicity(EU, n_boundary=4, n_angles=4)


def test_phase_state_validation():
    with pytest.raises(ValueError):
        PhaseState((1.5, 0.0), 0.0)
