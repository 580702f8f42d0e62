"""Classical, quantum and semiclassical kicked-rotor dynamics.

Echoes, mixing, time scales and the structural stability of invariant
manifolds for the standard map on the unit torus.
"""
__version__ = "0.1.0"

from .core_map import (
    MapParams,
    NonHyperbolicError,
    Orbit,
    PhasePoint,
    TangentFrame,
    fixed_point,
    fixed_points,
    iterate,
    iterate_backward,
    jacobian,
    lyapunov_analytic,
    lyapunov_numeric,
    orbit_stability,
    poincare_section,
    step,
    step_action,
)
from .phase_density import (
    GaussianDensity,
    classical_fidelity,
    fit_echo_decay,
    mixing_coverage,
    mixing_time,
    predictability_time,
    time_scales,
)
from .quantum import (
    FidelityCurve,
    RegimeReport,
    WavePacket,
    build_propagator,
    echo_fidelity,
    ehrenfest_time,
    fidelity_curve,
    gamma_parameter,
    heisenberg_time,
    propagate,
    wave_packet,
)
from .manifold import (
    ActionDifferenceSeries,
    ManifoldCurve,
    RefinementBudgetExceeded,
    action_difference_series,
    area_action,
    caustic_count,
    grow_manifold,
    heteroclinic_intersections,
    manifold_at,
    manifold_distance,
    perturbative_action_difference,
    segment_at,
)
from .semiclassical import (
    HeteroclinicOrbit,
    contribution,
    enumerate_heteroclinic_terms,
    semiclassical_correlation,
    sum_contributions,
)
from .kernels import BACKEND

__all__ = [name for name in dir() if not name.startswith("_")]
