"""Classical standard map on the unit torus.

    p_{j+1} = p_j - (K / 2 pi) sin(2 pi x_j)
    x_{j+1} = x_j + p_{j+1}

Points are carried both wrapped to [0, 1)^2 and with integer winding
counters, so the unwrapped (lifted) trajectory is always recoverable; actions
and areas are only meaningful on the lift.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MapParams:
    """Kick strength ``K``, boundary phase ``a`` and Hilbert dimension ``N``.

    ``N`` only matters on the quantum side, where hbar = 1/(2 pi N).
    """

    K: float
    a: float = 0.5
    N: int = 1000

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError(f"kick strength must be positive, got K={self.K}")
        if not 0.0 <= self.a < 1.0:
            raise ValueError(f"boundary phase must lie in [0, 1), got a={self.a}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")

    @property
    def hbar(self) -> float:
        return 1.0 / (TWO_PI * self.N)

    @property
    def h(self) -> float:
        return 1.0 / self.N

    def with_K(self, K: float) -> "MapParams":
        return MapParams(K=K, a=self.a, N=self.N)


@dataclass(frozen=True)
class PhasePoint:
    x: float
    p: float
    lift_x: int = 0
    lift_p: int = 0

    @classmethod
    def from_lifted(cls, X: float, P: float) -> "PhasePoint":
        fx, fp = math.floor(X), math.floor(P)
        x, p = X - fx, P - fp
        # X - floor(X) can round up to exactly 1.0 for tiny negative X
        if x >= 1.0:
            x, fx = 0.0, fx + 1
        if p >= 1.0:
            p, fp = 0.0, fp + 1
        return cls(x, p, int(fx), int(fp))

    @property
    def X(self) -> float:
        """Lifted position."""
        return self.x + self.lift_x

    @property
    def P(self) -> float:
        """Lifted momentum."""
        return self.p + self.lift_p

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.p])


@dataclass(frozen=True)
class TangentFrame:
    """2x2 stability matrix, rows (dx', dp') against columns (dx, dp)."""

    m11: float
    m12: float
    m21: float
    m22: float

    @classmethod
    def from_matrix(cls, m) -> "TangentFrame":
        m = np.asarray(m, dtype=float)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    @property
    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 * self.m21

    @property
    def trace(self) -> float:
        return self.m11 + self.m22

    def __matmul__(self, other: "TangentFrame") -> "TangentFrame":
        return TangentFrame.from_matrix(self.matrix @ other.matrix)


@dataclass(frozen=True)
class Orbit:
    """Lifted trajectory of t+1 points and its accumulated action."""

    X: np.ndarray
    P: np.ndarray
    params: MapParams
    action: float = field(default=float("nan"))

    def __len__(self) -> int:
        return len(self.X)

    @property
    def points(self) -> list[PhasePoint]:
        return [PhasePoint.from_lifted(X, P) for X, P in zip(self.X, self.P)]

    @property
    def last(self) -> PhasePoint:
        return PhasePoint.from_lifted(self.X[-1], self.P[-1])

    @property
    def first(self) -> PhasePoint:
        return PhasePoint.from_lifted(self.X[0], self.P[0])

    def recompute_action(self) -> float:
        return float(np.sum(step_action(self.X[:-1], self.X[1:], self.params.K)))

    def max_step_residual(self) -> float:
        """Largest violation of the map equations between consecutive points."""
        Xn, Pn = step_lifted(self.X[:-1], self.P[:-1], self.params.K)
        if len(Xn) == 0:
            return 0.0
        return float(max(np.max(np.abs(Xn - self.X[1:])), np.max(np.abs(Pn - self.P[1:]))))


def wrap(v):
    """Reduce to [0, 1)."""
    return np.mod(v, 1.0)


def torus_delta(v):
    """Signed difference reduced to [-1/2, 1/2)."""
    return v - np.floor(v + 0.5)


def step_lifted(X, P, K):
    """One forward step on the lift; works on scalars or arrays."""
    Pn = P - K / TWO_PI * np.sin(TWO_PI * X)
    return X + Pn, Pn


def inverse_step_lifted(X, P, K):
    """Exact inverse of :func:`step_lifted`."""
    Xp = X - P
    return Xp, P + K / TWO_PI * np.sin(TWO_PI * Xp)


def step(pt: PhasePoint, params: MapParams) -> PhasePoint:
    Xn, Pn = step_lifted(pt.X, pt.P, params.K)
    return PhasePoint.from_lifted(float(Xn), float(Pn))


def inverse_step(pt: PhasePoint, params: MapParams) -> PhasePoint:
    Xp, Pp = inverse_step_lifted(pt.X, pt.P, params.K)
    return PhasePoint.from_lifted(float(Xp), float(Pp))


def iterate(pt: PhasePoint, params: MapParams, t: int) -> Orbit:
    """Orbit of ``t`` forward steps from ``pt`` (t+1 points, lifted)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    X = np.empty(t + 1)
    P = np.empty(t + 1)
    X[0], P[0] = pt.X, pt.P
    for j in range(t):
        X[j + 1], P[j + 1] = step_lifted(X[j], P[j], params.K)
    action = float(np.sum(step_action(X[:-1], X[1:], params.K)))
    return Orbit(X, P, params, action)


def iterate_backward(pt: PhasePoint, params: MapParams, t: int) -> Orbit:
    """Orbit of ``t`` inverse steps, listed in backward time order."""
    if t < 0:
        raise ValueError("t must be non-negative")
    X = np.empty(t + 1)
    P = np.empty(t + 1)
    X[0], P[0] = pt.X, pt.P
    for j in range(t):
        X[j + 1], P[j + 1] = inverse_step_lifted(X[j], P[j], params.K)
    return Orbit(X, P, params)


def jacobian(pt: PhasePoint, params: MapParams) -> TangentFrame:
    c = params.K * math.cos(TWO_PI * pt.x)
    return TangentFrame(1.0 - c, 1.0, -c, 1.0)


def orbit_stability(orbit: Orbit) -> TangentFrame:
    """Product of step Jacobians along an orbit (identity for a single point)."""
    m = np.eye(2)
    for X in orbit.X[:-1]:
        c = orbit.params.K * math.cos(TWO_PI * X)
        m = np.array([[1.0 - c, 1.0], [-c, 1.0]]) @ m
    return TangentFrame.from_matrix(m)


def step_action(x_j, x_j1, K):
    """Generating function F(x_j, x_{j+1}) on lifted positions.

    -dF/dx_j = p_j and dF/dx_{j+1} = p_{j+1} reproduce the map.
    """
    return 0.5 * (x_j1 - x_j) ** 2 + K / (4.0 * math.pi**2) * np.cos(TWO_PI * x_j)


def lyapunov_analytic(K: float) -> float:
    """ln(K/2) - 1/(K^2 - 4); only meaningful well into the chaotic regime."""
    if K <= 2.0:
        raise ValueError(f"Lyapunov formula needs K > 2, got K={K}")
    return math.log(K / 2.0) - 1.0 / (K * K - 4.0)


class LyapunovSamples(NamedTuple):
    rates: np.ndarray
    n_excluded: int


def lyapunov_samples(params: MapParams, n_samples: int, t: int, seed: int) -> LyapunovSamples:
    """Per-orbit finite-time exponents from random starts on the torus."""
    if t < 1 or n_samples < 1:
        raise ValueError("need t >= 1 and n_samples >= 1")
    rng = np.random.default_rng(seed)
    x = rng.random(n_samples)
    p = rng.random(n_samples)
    theta = rng.random(n_samples) * TWO_PI
    vx, vp = np.cos(theta), np.sin(theta)
    sums = kernels.tangent_log_growth(x, p, vx, vp, params.K, t)
    bad = ~np.isfinite(sums)
    if bad.any():
        logger.warning("excluded %d degenerate Lyapunov samples", int(bad.sum()))
    return LyapunovSamples(sums[~bad] / t, int(bad.sum()))


def lyapunov_numeric(params: MapParams, n_samples: int, t: int, seed: int) -> float:
    """Sample-averaged largest Lyapunov exponent (per-step renormalization)."""
    if t < 100:
        raise ValueError("t must be at least 100 for a usable exponent")
    res = lyapunov_samples(params, n_samples, t, seed)
    if res.rates.size == 0:
        raise RuntimeError("every sample was degenerate")
    return float(np.mean(res.rates))


class FixedPoint(NamedTuple):
    point: PhasePoint
    classification: str
    unstable_eigenvalue: float
    unstable_eigenvector: np.ndarray
    stable_eigenvalue: float
    stable_eigenvector: np.ndarray
    jacobian: TangentFrame


class NonHyperbolicError(ValueError):
    pass


def _eigen_split(m: np.ndarray):
    w, v = np.linalg.eig(m)
    w = w.real
    v = v.real
    iu = int(np.argmax(np.abs(w)))
    is_ = 1 - iu
    vu = v[:, iu] / np.linalg.norm(v[:, iu])
    vs = v[:, is_] / np.linalg.norm(v[:, is_])
    # fix orientation so both eigenvectors point to increasing x
    if vu[0] < 0:
        vu = -vu
    if vs[0] < 0:
        vs = -vs
    return w[iu], vu, w[is_], vs


def fixed_points(params: MapParams, xs: Sequence[float] = (0.0, 0.5)) -> list[FixedPoint]:
    """Eigen-decomposition at the period-1 points (x, 0), x in {0, 1/2}.

    Raises NonHyperbolicError for any requested point with |trace| <= 2.
    """
    out = []
    for x in xs:
        if x not in (0.0, 0.5):
            raise ValueError(f"period-1 points sit at x=0 and x=1/2, not {x}")
        pt = PhasePoint(x, 0.0)
        jac = jacobian(pt, params)
        tr = jac.trace
        if abs(tr) <= 2.0:
            raise NonHyperbolicError(f"fixed point ({x}, 0) has trace {tr:.6g}; not hyperbolic at K={params.K}")
        lu, vu, ls, vs = _eigen_split(jac.matrix)
        kind = "hyperbolic" if tr > 2.0 else "reflection-hyperbolic"
        out.append(FixedPoint(pt, kind, float(lu), vu, float(ls), vs, jac))
    return out


def fixed_point(params: MapParams, x: float = 0.5) -> FixedPoint:
    return fixed_points(params, (x,))[0]


def poincare_section(params: MapParams, seeds: Sequence[PhasePoint], t: int) -> np.ndarray:
    """Wrapped (x, p) of all seeds' orbits, seeds included; shape (len(seeds)*(t+1), 2)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    X = np.array([s.X for s in seeds], dtype=float)
    P = np.array([s.P for s in seeds], dtype=float)
    cloud = np.empty((len(seeds), t + 1, 2))
    cloud[:, 0, 0], cloud[:, 0, 1] = X, P
    for j in range(t):
        # wrap every step so long runs stay at full precision
        kernels.iterate_cloud(X, P, params.K, 1)
        X = wrap(X)
        P = wrap(P)
        cloud[:, j + 1, 0], cloud[:, j + 1, 1] = X, P
    return wrap(cloud.reshape(-1, 2))


def grid_coverage(x, p, grid_n: int) -> float:
    """Fraction of grid_n x grid_n torus cells holding at least one point."""
    ix = np.floor(wrap(x) * grid_n).astype(np.int64) % grid_n
    ip = np.floor(wrap(p) * grid_n).astype(np.int64) % grid_n
    occupied = np.zeros(grid_n * grid_n, dtype=bool)
    occupied[ix * grid_n + ip] = True
    return float(occupied.mean())
