import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rotorecho import core_map as cm

unit = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)
kicks = st.floats(0.1, 30.0)


def test_fixed_points_are_fixed():
    p = cm.MapParams(10.0)
    for x in (0.5, 0.0):
        q = cm.step(cm.PhasePoint(x, 0.0), p)
        # sin(pi) is 1.2e-16, so compare in the torus metric
        assert abs(cm.torus_delta(q.x - x)) < 1e-14 and abs(cm.torus_delta(q.p)) < 1e-14


def test_hand_evaluated_step():
    # p' = -10/(2 pi) sin(pi/2) wrapped, x' = 0.25 + p'
    q = cm.step(cm.PhasePoint(0.25, 0.0), cm.MapParams(10.0))
    p_expected = (-10.0 / (2 * math.pi)) % 1.0
    assert q.p == pytest.approx(0.408451, abs=1e-6)
    assert q.p == pytest.approx(p_expected, abs=1e-15)
    assert q.x == pytest.approx(0.658451, abs=1e-6)


def test_lift_counters_recover_unwrapped_orbit():
    p = cm.MapParams(10.0)
    pt = cm.PhasePoint(0.25, 0.0)
    o = cm.iterate(pt, p, 5)
    q = pt
    for j in range(5):
        q = cm.step(q, p)
        assert q.X == pytest.approx(o.X[j + 1], abs=1e-12)
        assert q.P == pytest.approx(o.P[j + 1], abs=1e-12)


@given(unit, unit, kicks, st.integers(0, 20), st.integers(0, 20))
def test_iterate_composes(x, p_, K, t1, t2):
    p = cm.MapParams(K)
    pt = cm.PhasePoint(x, p_)
    full = cm.iterate(pt, p, t1 + t2)
    half = cm.iterate(cm.iterate(pt, p, t1).last, p, t2)
    assert np.allclose(cm.wrap(full.X[t1:]), cm.wrap(half.X), atol=1e-9) or np.allclose(
        cm.torus_delta(full.X[t1:] - half.X), 0.0, atol=1e-9
    )
    assert np.max(np.abs(cm.torus_delta(full.P[t1:] - half.P))) < 1e-9


@given(unit, unit, kicks)
def test_wrapped_points_in_unit_square(x, p_, K):
    q = cm.step(cm.PhasePoint(x, p_), cm.MapParams(K))
    assert 0.0 <= q.x < 1.0 and 0.0 <= q.p < 1.0
    assert cm.torus_delta(q.X - q.x) == 0.0


@given(unit, unit, kicks)
def test_inverse_step_undoes_step(x, p_, K):
    p = cm.MapParams(K)
    X, P = cm.inverse_step_lifted(*cm.step_lifted(x, p_, K), K)
    assert abs(X - x) < 1e-12 and abs(P - p_) < 1e-12


@given(unit, unit, kicks, st.integers(1, 12))
def test_orbit_stability_is_symplectic(x, p_, K, t):
    o = cm.iterate(cm.PhasePoint(x, p_), cm.MapParams(K), t)
    m = cm.orbit_stability(o)
    assert abs(m.det - 1.0) < 1e-10 * max(1.0, np.max(np.abs(m.matrix)) ** 2)


@given(unit, unit, kicks, st.integers(1, 15))
def test_orbit_action_is_sum_of_step_actions(x, p_, K, t):
    o = cm.iterate(cm.PhasePoint(x, p_), cm.MapParams(K), t)
    assert o.action == pytest.approx(o.recompute_action(), rel=1e-12, abs=1e-12)
    assert o.max_step_residual() < 1e-12 * max(1.0, np.max(np.abs(o.X)))


@given(unit, unit, kicks)
def test_generating_function_reproduces_momenta(x0, p0, K):
    # -dF/dx_j = p_j and dF/dx_{j+1} = p_{j+1}, checked by central differences
    X1, P1 = cm.step_lifted(x0, p0, K)
    h = 1e-6
    dF0 = (cm.step_action(x0 + h, X1, K) - cm.step_action(x0 - h, X1, K)) / (2 * h)
    dF1 = (cm.step_action(x0, X1 + h, K) - cm.step_action(x0, X1 - h, K)) / (2 * h)
    assert -dF0 == pytest.approx(p0, abs=1e-6 * (1 + K))
    assert dF1 == pytest.approx(P1, abs=1e-6 * (1 + K))


def test_jacobian_matches_finite_difference():
    p = cm.MapParams(7.3)
    pt = cm.PhasePoint(0.137, 0.61)
    J = cm.jacobian(pt, p).matrix
    h = 1e-7
    cols = []
    for d in ((h, 0.0), (0.0, h)):
        a = np.array(cm.step_lifted(pt.x + d[0], pt.p + d[1], p.K))
        b = np.array(cm.step_lifted(pt.x - d[0], pt.p - d[1], p.K))
        cols.append((a - b) / (2 * h))
    assert np.allclose(J, np.array(cols).T, atol=1e-6)


def test_fixed_point_eigen_oracle():
    # trace 2 + K at (1/2, 0); eigenvalue (T + sqrt(T^2 - 4)) / 2 = 6 + sqrt(35) for K = 10
    fp = cm.fixed_point(cm.MapParams(10.0), 0.5)
    assert fp.classification == "hyperbolic"
    assert fp.unstable_eigenvalue == pytest.approx(6 + math.sqrt(35), rel=1e-12)
    assert fp.stable_eigenvalue == pytest.approx(1 / (6 + math.sqrt(35)), rel=1e-10)
    J = fp.jacobian.matrix
    v = fp.unstable_eigenvector
    assert np.allclose(J @ v, fp.unstable_eigenvalue * v, atol=1e-10)
    fp0 = cm.fixed_point(cm.MapParams(10.0), 0.0)
    assert fp0.classification == "reflection-hyperbolic"
    assert fp0.unstable_eigenvalue == pytest.approx(-4 - math.sqrt(15), rel=1e-12)


def test_elliptic_fixed_point_rejected():
    with pytest.raises(cm.NonHyperbolicError):
        cm.fixed_point(cm.MapParams(2.0), 0.0)


def test_lyapunov_analytic_value():
    assert cm.lyapunov_analytic(10.0) == pytest.approx(math.log(5) - 1 / 96, rel=1e-15)
    assert cm.lyapunov_analytic(10.0) == pytest.approx(1.5990, abs=1e-4)
    with pytest.raises(ValueError):
        cm.lyapunov_analytic(1.5)


def test_lyapunov_numeric_deterministic_and_close():
    p = cm.MapParams(10.0)
    a = cm.lyapunov_numeric(p, 200, 300, seed=3)
    assert a == cm.lyapunov_numeric(p, 200, 300, seed=3)
    assert abs(a - cm.lyapunov_analytic(10.0)) / cm.lyapunov_analytic(10.0) < 0.03


def test_lyapunov_numeric_rejects_short_runs():
    with pytest.raises(ValueError):
        cm.lyapunov_numeric(cm.MapParams(10.0), 10, 50, seed=0)


@pytest.mark.parametrize("bad", [dict(K=0.0), dict(K=-1.0), dict(K=1.0, a=1.0), dict(K=1.0, N=0), dict(K=1.0, N=2.5)])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        cm.MapParams(**bad)


def test_poincare_section_shape_and_range():
    sec = cm.poincare_section(cm.MapParams(8.0), [cm.PhasePoint(0.1, 0.2), cm.PhasePoint(0.3, 0.4)], 50)
    assert sec.shape == (102, 2)
    assert np.all((sec >= 0) & (sec < 1))


def test_grid_coverage_counts_cells():
    assert cm.grid_coverage(np.array([0.01, 0.02, 0.99]), np.array([0.01, 0.01, 0.5]), 4) == pytest.approx(2 / 16)
