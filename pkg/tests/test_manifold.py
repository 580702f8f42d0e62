import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotorecho import core_map as cm
from rotorecho import manifold as mf

P10 = cm.MapParams(10.0)
A10 = cm.fixed_point(P10)
P6 = cm.MapParams(6.0)
A6 = cm.fixed_point(P6)


def test_seed_within_1e8_and_tangent_to_eigenvector():
    br = mf.Branch(P10, A10, "unstable", 0, mf.LOCAL_LENGTH)
    dx, dp = br.seed_deviation(np.array([mf.LOCAL_LENGTH]))
    assert math.hypot(dx[0], dp[0]) <= mf.SEED_DISTANCE * (1 + 1e-12)
    c = mf.manifold_at(P10, A10, "unstable", 0, local_length=1e-5)
    d = np.array([c.X[-1] - c.X[0], c.P[-1] - c.P[0]])
    v = A10.unstable_eigenvector
    ang = math.acos(min(1.0, abs(d @ v) / np.linalg.norm(d)))
    assert ang < 1e-4


def test_one_step_stretches_by_eigenvalue():
    L = 1e-6
    c0 = mf.manifold_at(P10, A10, "unstable", 0, local_length=L)
    c1 = mf.manifold_at(P10, A10, "unstable", 1, local_length=L)
    assert c1.arclength / c0.arclength == pytest.approx(6 + math.sqrt(35), rel=1e-4)


@settings(max_examples=10)
@given(st.floats(5.0, 12.0), st.integers(0, 3), st.sampled_from(["unstable", "stable"]))
def test_refinement_contract(K, t, kind):
    p = cm.MapParams(K)
    c = mf.manifold_at(p, cm.fixed_point(p), kind, t, ds_max=2e-3, theta_max=0.2)
    assert c.segment_lengths().max() <= 2e-3
    if c.unresolved == 0:
        assert c.turning_angles().max() <= 0.2 + 1e-12
    assert np.all(np.diff(c.ell) > 0)


@pytest.mark.parametrize("kind,inv", [("unstable", True), ("stable", False)])
def test_manifold_maps_back_into_local_segment(kind, inv):
    # t steps against the growth direction return every point to the local segment
    t = 3
    c = mf.manifold_at(P10, A10, kind, t)
    X, P = c.X.copy(), c.P.copy()
    for _ in range(t):
        X, P = (cm.inverse_step_lifted if inv else cm.step_lifted)(X, P, P10.K)
    d = np.hypot(cm.torus_delta(X - 0.5), cm.torus_delta(P))
    assert d.max() <= mf.LOCAL_LENGTH * (1 + 1e-6)


def test_stable_manifold_is_time_reversed_unstable():
    # (x, p) -> (-x, p - K/2pi sin 2pi x) conjugates the map to its inverse and fixes (1/2, 0)
    u = mf.manifold_at(P10, A10, "unstable", 2, branch=0)
    # the reversor is not an isometry: rescale the local segment to match
    vx, vp = A10.unstable_eigenvector
    gain = math.hypot(vx, P10.K * vx + vp)
    s = mf.manifold_at(P10, A10, "stable", 2, branch=0, local_length=mf.LOCAL_LENGTH * gain)
    Xr = -u.X
    Pr = u.P - P10.K / (2 * math.pi) * np.sin(2 * math.pi * u.X)
    r = mf.ManifoldCurve(Xr, Pr, u.u, u.ell, s.branch, u.ds_max, u.theta_max)
    assert mf.manifold_distance(r, s) < 1e-3


def test_distance_identity_and_empty():
    c = mf.manifold_at(P6, A6, "unstable", 2)
    assert mf.manifold_distance(c, c) == 0.0
    empty = mf.ManifoldCurve(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), c.branch, 1e-3, 0.2)
    with pytest.raises(ValueError):
        mf.manifold_distance(c, empty)


def test_distance_grows_with_perturbation():
    c0 = mf.manifold_at(P6, A6, "unstable", 3)
    d = [mf.manifold_distance(c0, mf.manifold_at(p, cm.fixed_point(p), "unstable", 3)) for p in (cm.MapParams(6.001), cm.MapParams(6.01))]
    assert 0 < d[0] < d[1]


def test_grow_manifold_reaches_target_and_budget():
    c = mf.grow_manifold(P10, A10, "unstable", target_arclength=5.0)
    assert c.arclength >= 5.0
    with pytest.raises(mf.RefinementBudgetExceeded) as exc:
        mf.grow_manifold(P10, A10, "unstable", target_arclength=1e4, max_points=5000)
    assert exc.value.achieved_arclength > 0


def test_straight_segment_has_no_caustics():
    c = mf.manifold_at(P10, A10, "unstable", 0)
    assert mf.caustic_count(c).count == 0


def test_caustic_count_robust_to_tiny_perturbation():
    a = mf.caustic_count(mf.manifold_at(P6, A6, "unstable", 3))
    b = mf.caustic_count(mf.manifold_at(cm.MapParams(6.0 + 1e-7), cm.fixed_point(cm.MapParams(6.0 + 1e-7)), "unstable", 3))
    assert a.count == b.count > 0
    assert np.max(np.abs(a.x - b.x)) < 1e-5


def _orbit_sum_oracle(U, S, c, K):
    """Generating-function sum of the full heteroclinic orbit relative to the fixed point."""
    oa = U.branch.orbit(c.u_a)
    ob = S.branch.orbit(c.u_b)
    Lx, Lp = c.shift
    j = np.arange(len(ob.X))
    Xb = ob.X + Lx + j * Lp
    X = np.concatenate([oa.X, Xb[1:]])
    F = cm.step_action(X[:-1], X[1:], K)
    ffp = K / (4 * math.pi**2) * math.cos(math.pi)
    na = len(oa.X) - 1
    ref = np.r_[np.full(na, ffp), np.full(len(F) - na, ffp + Lp**2 / 2)]
    return float(np.sum(F - ref))


def test_loop_areas_equal_orbit_action_differences():
    U = mf.manifold_at(P10, A10, "unstable", 3, branch=1)
    S = mf.manifold_at(P10, A10, "stable", 3, branch=0)
    r = mf.heteroclinic_intersections(U, S)
    W = [_orbit_sum_oracle(U, S, c, P10.K) for c in r.crossings]
    checked = 0
    for k, area in enumerate(r.loop_areas):
        if np.isnan(area) or abs(area) < 1e-6:
            continue
        assert area == pytest.approx(-(W[k + 1] - W[k]), rel=1e-4, abs=1e-9)
        checked += 1
    assert checked >= 5


def test_crossings_stable_under_refinement():
    U = mf.manifold_at(P10, A10, "unstable", 2, branch=1)
    S = mf.manifold_at(P10, A10, "stable", 2, branch=0)
    U2 = mf.manifold_at(P10, A10, "unstable", 2, branch=1, ds_max=5e-4)
    a = mf.find_crossings(U, S)
    b = mf.find_crossings(U2, S)
    assert len(a.as_list()) == len(b.as_list()) > 0
    xa = np.array([c.point.X for c in a.as_list()])
    xb = np.array([c.point.X for c in b.as_list()])
    assert np.max(np.abs(np.sort(xa) - np.sort(xb))) < 1e-12


def test_area_action_antisymmetric():
    c = mf.manifold_at(P10, A10, "unstable", 1)
    a, b = c.points[10], c.points[len(c) - 10]
    fwd = mf.area_action(c, a, b)
    assert fwd == pytest.approx(-mf.area_action(c, b, a), rel=1e-12)
    assert mf.area_action(c, a, a) == 0.0


def test_perturbative_action_on_fixed_point_is_zero():
    o = cm.iterate(cm.PhasePoint(0.5, 0.0), P6, 5)
    assert mf.perturbative_action_difference(o, 0.02, reference=-1.0) == pytest.approx(0.0, abs=1e-15)
    assert mf.perturbative_action_difference(o, 0.02) == pytest.approx(-5 * 0.02 / (4 * math.pi**2))


def test_action_series_matches_first_order_theory_at_t3():
    s = mf.action_difference_series(P6, 0.02, A6, 3, 1000)
    assert len(s.ell) == len(s.dS_exact) == len(s.dS_pert)
    assert np.all(np.diff(s.ell) > 0)
    assert s.relative_deviation < 0.02
    assert s.n_excluded / s.n_requested < 0.01
    # extrema of the exact difference sit where the two manifolds cross
    for e in s.extrema():
        assert np.sign(s.dP[e - 1]) != np.sign(s.dP[e + 1]) or abs(s.dP[e]) < 1e-6


def test_sampled_action_variance_matches_ergodic_average():
    # independent estimate: variance growth of the cosine sum along random orbits
    rng = np.random.default_rng(4)
    X, P = rng.random(200_000), rng.random(200_000)
    for _ in range(30):
        X, P = cm.step_lifted(X, P, 6.0)
    S = np.zeros_like(X)
    var = []
    for j in range(12):
        S += np.cos(2 * math.pi * X)
        X, P = cm.step_lifted(X, P, 6.0)
        var.append(S.var())
    ergodic_slope = (var[11] - var[5]) / 6 * (0.02 / (4 * math.pi**2)) ** 2
    rep = mf.action_diffusion_report(P6, 0.02, A6, 8, 5000, ts=(6, 8, 10, 12), n_candidates=300_000)
    assert rep.slope == pytest.approx(ergodic_slope, rel=0.15)


def test_histogram_records_fit():
    h = mf.action_difference_histogram(P6, 0.02, A6, 5, 2000, bins=30, n_candidates=100_000)
    assert h.counts.sum() == 2000
    width = h.bin_centers[1] - h.bin_centers[0]
    expected = 2000 * width * np.exp(-((h.bin_centers - h.mean) ** 2) / (2 * h.variance)) / math.sqrt(2 * math.pi * h.variance)
    assert np.allclose(h.gaussian_fit, expected, rtol=1e-12)
    assert h.variance == pytest.approx(np.var(h.samples, ddof=1))


def test_area_action_rejects_points_off_curve():
    c = mf.manifold_at(P10, A10, "unstable", 1)
    with pytest.raises(ValueError):
        mf.area_action(c, c.points[5], cm.PhasePoint(0.1, 0.9))


def test_area_action_converges_under_refinement():
    a = mf.manifold_at(P10, A10, "unstable", 1)
    b = mf.manifold_at(P10, A10, "unstable", 1, ds_max=mf.DS_MAX / 2, theta_max=mf.THETA_MAX / 2)
    pA, pB = a.points[3], a.points[len(a) // 3]
    assert abs(mf.area_action(a, pA, pB) - mf.area_action(b, pA, pB)) < 1e-8


def test_loop_area_equals_difference_of_curve_integrals():
    U = mf.manifold_at(P10, A10, "unstable", 3, branch=1)
    S = mf.manifold_at(P10, A10, "stable", 3, branch=0)
    r = mf.heteroclinic_intersections(U, S)
    checked = 0
    for k, area in enumerate(r.loop_areas):
        c0, c1 = r.crossings[k], r.crossings[k + 1]
        if np.isnan(area):
            continue
        aU = mf.area_action(U, c0.point, c1.point, tol=1e-9)
        aS = mf.area_action(S, c0.point, c1.point, tol=1e-9)
        # S is integrated on its own lift; shifting p by Lp adds Lp * dX
        dX = U.branch.evaluate(c1.u_a)[0][0] - U.branch.evaluate(c0.u_a)[0][0]
        assert abs(area) == pytest.approx(abs(aU - aS - c0.shift[1] * dX), rel=1e-6, abs=1e-10)
        checked += 1
    assert checked >= 3


def test_zero_perturbation_gives_zero_series():
    s = mf.action_difference_series(P6, 0.0, A6, 3, 200)
    assert np.max(np.abs(s.dS_pert)) == 0.0
    assert np.max(np.abs(s.dS_exact)) < 1e-12


def test_extrema_alternate():
    s = mf.action_difference_series(P6, 0.02, A6, 4, 4000)
    e = s.extrema()
    assert len(e) >= 2
    kinds = np.sign(s.dS_exact[e] - s.dS_exact[e - 1])
    assert np.all(kinds[1:] != kinds[:-1])


def test_histogram_variance_scales_with_square_of_perturbation():
    a = mf.action_difference_histogram(P6, 0.02, A6, 5, 2000, n_candidates=100_000)
    b = mf.action_difference_histogram(P6, 0.01, A6, 5, 2000, n_candidates=100_000)
    assert a.variance / b.variance == pytest.approx(4.0, rel=1e-12)


def test_manifold_distance_is_first_order_in_perturbation():
    c0 = mf.manifold_at(P6, A6, "unstable", 5)
    d = []
    for dK in (0.02, 0.01):
        p = cm.MapParams(6.0 + dK)
        d.append(mf.manifold_distance(c0, mf.manifold_at(p, cm.fixed_point(p), "unstable", 5)))
    assert 1.5 <= d[0] / d[1] <= 2.5


@pytest.mark.parametrize("kind", ["unstable", "stable"])
def test_segment_branch_points_orbits_and_tangents_agree(kind):
    c = mf.segment_at(P10, (0.3, 0.7), (1.0, 2.0), kind, 3, 0.01)
    br = c.branch
    k = len(c.u) // 3
    o = br.orbit(float(c.u[k]))
    end = -1 if kind == "unstable" else 0
    assert o.X[end] == pytest.approx(c.X[k], abs=1e-12) and o.P[end] == pytest.approx(c.P[k], abs=1e-12)
    start = 0 if kind == "unstable" else -1
    s = 0.3 + c.u[k] / math.sqrt(5)
    assert o.X[start] == pytest.approx(s, abs=1e-14)
    h = 1e-7
    X0, P0, tX, tP = br.evaluate_with_tangent(np.array([c.u[k]]))
    Xa, Pa = br.evaluate(np.array([c.u[k] + h]))
    Xb, Pb = br.evaluate(np.array([c.u[k] - h]))
    assert (Xa - Xb)[0] / (2 * h) == pytest.approx(tX[0], rel=1e-5)
    assert (Pa - Pb)[0] / (2 * h) == pytest.approx(tP[0], rel=1e-5)


def test_segment_at_zero_steps_is_the_straight_segment():
    c = mf.segment_at(P10, (0.2, 0.1), (0.0, 3.0), "stable", 0, 0.05)
    assert np.allclose(c.X, 0.2) and c.arclength == pytest.approx(0.1)
    with pytest.raises(ValueError):
        mf.segment_at(P10, (0.2, 0.1), (0.0, 0.0), "stable", 1, 0.05)
