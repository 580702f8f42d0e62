import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rotorecho import core_map as cm
from rotorecho import phase_density as pd


def test_density_normalized_to_unit_self_overlap():
    # independent quadrature of the squared density over the torus
    d = pd.GaussianDensity.circular(0.5, 0.0, 1e-3)
    g = (np.arange(2000) + 0.5) / 2000
    X, P = np.meshgrid(g, g, indexing="ij")
    val = np.sum(d(X, P) ** 2) / g.size**2
    assert val == pytest.approx(1.0, rel=1e-6)
    assert d.self_overlap() == 1.0


def test_circular_cell_area():
    d = pd.GaussianDensity.circular(area=1e-3)
    assert d.cell_area == pytest.approx(1e-3, rel=1e-12)
    assert d.sigma_x == d.sigma_p


def test_oversized_density_rejected():
    with pytest.raises(ValueError):
        pd.GaussianDensity(0.5, 0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        pd.GaussianDensity(0.5, 0.5, 0.0, 0.1)


def test_contour_samples_inside_ellipse():
    d = pd.GaussianDensity.circular(0.5, 0.0, 1e-3)
    c = pd.sample_contour(d, 5000, seed=1)
    r = np.hypot(cm.torus_delta(c.x - 0.5) / d.sigma_x, cm.torus_delta(c.p) / d.sigma_p)
    assert r.max() <= 2.0 + 1e-12


def test_fidelity_is_one_at_t0_and_without_perturbation():
    p = cm.MapParams(10.0)
    d = pd.GaussianDensity.circular()
    assert pd.classical_fidelity(p, 1e-4, d, 0, 5000, seed=0).value == 1.0
    # exact reversal only to rounding, amplified by e^{mu t}
    assert pd.classical_fidelity(p, 0.0, d, 4, 5000, seed=0).value == pytest.approx(1.0, abs=1e-6)


def test_fidelity_deterministic_for_fixed_seed():
    p = cm.MapParams(10.0)
    d = pd.GaussianDensity.circular()
    a = pd.classical_fidelity(p, 1e-4, d, 5, 20000, seed=9)
    b = pd.classical_fidelity(p, 1e-4, d, 5, 20000, seed=9)
    assert a == b


def test_fidelity_rejects_tiny_samples():
    with pytest.raises(ValueError):
        pd.classical_fidelity(cm.MapParams(10.0), 1e-4, pd.GaussianDensity.circular(), 3, 100, seed=0)


def test_predictability_time_reference_value():
    # tau_r for eps = 1e-5, alpha = 1 at K = 10 is quoted as 7.2
    assert pd.predictability_time(1e-5, cm.lyapunov_analytic(10.0)) == pytest.approx(7.2, abs=0.05)


def test_mixing_time_reference_value():
    assert pd.mixing_time(1000, cm.lyapunov_analytic(10.0)) == pytest.approx(4.3, abs=0.05)


def test_time_scales_bundle():
    ts = pd.time_scales(10.0, 1e-5, 1.0, 1000, 1000)
    assert ts.tau_r == ts.tau_p
    assert ts.tau_E == pytest.approx(ts.tau_m)
    assert ts.h_KS == ts.mu_max == cm.lyapunov_analytic(10.0)


@given(st.floats(1e-8, 0.5), st.floats(1e-8, 0.5), st.floats(0.1, 3.0))
def test_predictability_time_decreases_with_epsilon(e1, e2, mu):
    lo, hi = sorted((e1, e2))
    assert pd.predictability_time(lo, mu) >= pd.predictability_time(hi, mu)


@given(st.floats(0.01, 100.0), st.floats(1e-7, 1e-2), st.floats(0.5, 3.0))
def test_model_bounded_and_monotone(alpha, eps, mu):
    t = np.arange(0, 15)
    f = pd.classical_fidelity_model(t, alpha, eps, mu)
    assert f[0] == 1.0
    assert np.all((f >= 0) & (f <= 1))
    assert np.all(np.diff(f) <= 1e-15)


@pytest.mark.parametrize("alpha,mu", [(1.0, 1.6), (3.0, 1.2), (40.0, 1.6)])
def test_fit_recovers_synthetic_parameters(alpha, mu):
    t = np.arange(1, 13, dtype=float)
    f = pd.classical_fidelity_model(t, alpha, 1e-5, mu)
    fixed = pd.fit_echo_decay(t, f, 1e-5, mu=mu)
    free = pd.fit_echo_decay(t, f, 1e-5)
    assert fixed.alpha == pytest.approx(alpha, rel=1e-6)
    assert free.alpha == pytest.approx(alpha, rel=1e-4)
    assert free.mu == pytest.approx(mu, rel=1e-5)
    assert fixed.tau_r == pytest.approx(pd.predictability_time(1e-5, mu, alpha), rel=1e-6)


def test_mixing_coverage_grows():
    p = cm.MapParams(10.0)
    d = pd.GaussianDensity.circular()
    c1 = pd.mixing_coverage(p, d, 1, 16, 20000, seed=0)
    c6 = pd.mixing_coverage(p, d, 6, 16, 20000, seed=0)
    assert 0 < c1 < c6 <= 1


def test_mixing_coverage_bad_support():
    with pytest.raises(ValueError):
        pd.mixing_coverage(cm.MapParams(10.0), pd.GaussianDensity.circular(), 1, 4, 1000, 0, support="box")


def test_time_scale_errors():
    with pytest.raises(ValueError):
        pd.predictability_time(2.0, 1.0)
    with pytest.raises(ValueError):
        pd.mixing_time(1000, 0.0)
