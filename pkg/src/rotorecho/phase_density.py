"""Gaussian phase-space densities, mixing and the classical echo."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares

from . import kernels
from .core_map import MapParams, grid_coverage, lyapunov_analytic, torus_delta, wrap

logger = logging.getLogger(__name__)

DEFAULT_CELL_AREA = 1.0 / 1000.0


@dataclass(frozen=True)
class GaussianDensity:
    """rho(x, p) = (pi sx sp)^(-1/2) exp[-dx^2/(2 sx^2) - dp^2/(2 sp^2)], so <rho, rho> = 1."""

    x0: float
    p0: float
    sigma_x: float
    sigma_p: float

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_p > 0):
            raise ValueError("widths must be positive")
        if self.cell_area > 1.0:
            raise ValueError("2-sigma cell does not fit on the torus")

    @classmethod
    def circular(cls, x0: float = 0.5, p0: float = 0.0, area: float = DEFAULT_CELL_AREA) -> "GaussianDensity":
        """Equal widths with the 2-sigma contour enclosing ``area``."""
        s = 1.0 / math.sqrt(4.0 * math.pi / area)
        return cls(x0, p0, s, s)

    @property
    def cell_area(self) -> float:
        """Area inside the 2-sigma contour, 4 pi sx sp."""
        return 4.0 * math.pi * self.sigma_x * self.sigma_p

    @property
    def peak(self) -> float:
        return 1.0 / math.sqrt(math.pi * self.sigma_x * self.sigma_p)

    @property
    def total_mass(self) -> float:
        return 2.0 * math.sqrt(math.pi * self.sigma_x * self.sigma_p)

    def __call__(self, x, p, images: int = 1):
        """Torus-periodized density at wrapped or lifted (x, p)."""
        dx = torus_delta(np.asarray(x, dtype=float) - self.x0)
        dp = torus_delta(np.asarray(p, dtype=float) - self.p0)
        gx = sum(np.exp(-((dx + j) ** 2) / (2 * self.sigma_x**2)) for j in range(-images, images + 1))
        gp = sum(np.exp(-((dp + j) ** 2) / (2 * self.sigma_p**2)) for j in range(-images, images + 1))
        return self.peak * gx * gp

    def self_overlap(self) -> float:
        return 1.0


@dataclass(frozen=True)
class SampleCloud:
    x: np.ndarray
    p: np.ndarray
    seed: int
    parent: GaussianDensity

    def __len__(self) -> int:
        return len(self.x)

    def mean(self) -> tuple[float, float]:
        """Circular-free mean relative to the parent centre (samples are local)."""
        dx = torus_delta(self.x - self.parent.x0)
        dp = torus_delta(self.p - self.parent.p0)
        return self.parent.x0 + float(dx.mean()), self.parent.p0 + float(dp.mean())


def sample(density: GaussianDensity, M: int, seed: int) -> SampleCloud:
    """M independent draws from ``density``, wrapped to the torus."""
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, M))
    x = wrap(density.x0 + density.sigma_x * z[0])
    p = wrap(density.p0 + density.sigma_p * z[1])
    return SampleCloud(x, p, seed, density)


def sample_contour(density: GaussianDensity, M: int, seed: int, level: float = 2.0) -> SampleCloud:
    """M uniform draws inside the ``level``-sigma ellipse (the 'circular volume')."""
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(seed)
    r = level * np.sqrt(rng.random(M))
    phi = rng.random(M) * 2.0 * math.pi
    x = wrap(density.x0 + density.sigma_x * r * np.cos(phi))
    p = wrap(density.p0 + density.sigma_p * r * np.sin(phi))
    return SampleCloud(x, p, seed, density)


class Estimate(NamedTuple):
    value: float
    stderr: float

    def __float__(self):
        return float(self.value)


def classical_fidelity(
    params: MapParams,
    deltaK: float,
    density: GaussianDensity,
    t: int,
    M: int,
    seed: int,
    perturbed_leg: str = "reverse",
) -> Estimate:
    """Monte Carlo estimate of <rho_fwd-rev, rho_0> normalized to 1 at t = 0.

    Samples are drawn from rho, sent forward ``t`` steps and back ``t`` steps
    (one leg at K + deltaK), and the initial density is evaluated at the
    endpoints.  The same draws evaluated without propagation supply the
    normalization, which makes the t = 0 value exactly 1.
    """
    if M < 1000:
        raise ValueError("M < 1000 gives an unusable estimator variance")
    if t < 0:
        raise ValueError("t must be non-negative")
    if perturbed_leg not in ("reverse", "forward"):
        raise ValueError("perturbed_leg must be 'reverse' or 'forward'")
    cloud = sample(density, M, seed)
    w0 = density(cloud.x, cloud.p)
    x = cloud.x.copy()
    p = cloud.p.copy()
    K = params.K
    if perturbed_leg == "reverse":
        kernels.echo_cloud(x, p, K, K + deltaK, t)
    else:
        kernels.echo_cloud(x, p, K + deltaK, K, t)
    w = density(x, p)
    m0 = w0.mean()
    ratio = w.mean() / m0
    # delta-method error of a ratio of correlated sample means
    resid = (w - ratio * w0) / m0
    stderr = float(resid.std(ddof=1) / math.sqrt(M))
    return Estimate(float(ratio), stderr)


def classical_fidelity_series(
    params: MapParams, deltaK: float, density: GaussianDensity, ts, M: int, seed: int
) -> list[Estimate]:
    return [classical_fidelity(params, deltaK, density, int(t), M, seed) for t in ts]


def classical_fidelity_model(t, alpha: float, epsilon: float, mu_max: float):
    """exp[-alpha^2 eps^2 (e^{mu t} - 1)^2]."""
    return np.exp(-(alpha**2) * epsilon**2 * np.expm1(mu_max * np.asarray(t, dtype=float)) ** 2)


def predictability_time(epsilon: float, mu_max: float, alpha: float = 1.0) -> float:
    """ln(1/(alpha eps)) / mu_max."""
    ae = alpha * epsilon
    if not 0.0 < ae < 1.0:
        raise ValueError(f"need 0 < alpha*epsilon < 1, got {ae}")
    return math.log(1.0 / ae) / mu_max


def mixing_time(N_cells: float, h_KS: float, d: int = 1) -> float:
    """(d / h_KS) ln(N_cells^(1/d))."""
    if h_KS <= 0 or d < 1:
        raise ValueError("need h_KS > 0 and d >= 1")
    if N_cells < 1:
        raise ValueError("need at least one cell")
    return d / h_KS * math.log(N_cells ** (1.0 / d))


class EchoFit(NamedTuple):
    alpha: float
    mu: float
    tau_r: float
    residual: float


def fit_echo_decay(ts, values, epsilon: float, mu: float | None = None) -> EchoFit:
    """Least-squares fit of the echo model to measured overlaps.

    With ``mu`` given only alpha is fitted; otherwise both.  Residuals are
    taken on F itself: the late-time tail decays exponentially rather than
    as the model's double exponential, and a fit on log F would be driven
    entirely by that tail instead of by the crossover that sets tau_r.
    """
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(values, dtype=float)

    def model(theta):
        m = mu if mu is not None else theta[1]
        return np.exp(-np.exp(2 * theta[0]) * epsilon**2 * np.expm1(m * ts) ** 2)

    # initial guess from the point closest to 1/e
    k = int(np.argmin(np.abs(vals - math.exp(-1.0))))
    m0 = mu if mu is not None else 1.5
    a0 = math.sqrt(max(-math.log(max(vals[k], 1e-300)), 1e-12)) / (epsilon * max(math.expm1(m0 * ts[k]), 1e-12))
    theta0 = [math.log(a0)] if mu is not None else [math.log(a0), m0]
    res = least_squares(lambda th: model(th) - vals, theta0)
    alpha = float(math.exp(res.x[0]))
    mu_fit = float(mu if mu is not None else res.x[1])
    tau = predictability_time(epsilon, mu_fit, alpha) if alpha * epsilon < 1 else 0.0
    return EchoFit(alpha, mu_fit, tau, float(np.sqrt(np.mean(res.fun**2))))


def mixing_coverage(
    params: MapParams,
    density: GaussianDensity,
    t: int,
    grid_n: int,
    M: int,
    seed: int,
    support: str = "contour",
) -> float:
    """Fraction of grid cells hit by the propagated samples.

    ``support='contour'`` draws uniformly inside the 2-sigma ellipse (the
    finite circular volume); ``'gaussian'`` uses the full Gaussian with tails.
    """
    if M < 10 * grid_n**2:
        warnings.warn("M < 10 grid_n^2: coverage estimate biased low", RuntimeWarning, stacklevel=2)
    if support == "contour":
        cloud = sample_contour(density, M, seed)
    elif support == "gaussian":
        cloud = sample(density, M, seed)
    else:
        raise ValueError("support must be 'contour' or 'gaussian'")
    x = cloud.x.copy()
    p = cloud.p.copy()
    kernels.iterate_cloud(x, p, params.K, t)
    return grid_coverage(x, p, grid_n)


@dataclass(frozen=True)
class TimeScales:
    tau_p: float
    tau_r: float
    tau_m: float
    tau_E: float | None
    epsilon: float
    alpha: float
    mu_max: float
    h_KS: float
    d: int
    N_cells: float


def time_scales(K: float, epsilon: float, alpha: float = 1.0, N_cells: float = 1000, N: int | None = None) -> TimeScales:
    """Classical time scales of the standard map (d = 1, h_KS = mu_max = <mu>)."""
    mu = lyapunov_analytic(K)
    tau = predictability_time(epsilon, mu, alpha)
    tau_E = math.log(N) / mu if N else None
    return TimeScales(tau, tau, mixing_time(N_cells, mu, 1), tau_E, epsilon, alpha, mu, mu, 1, N_cells)
