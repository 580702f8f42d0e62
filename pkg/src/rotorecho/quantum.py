"""Quantized kicked rotor on the N-state torus.

The one-step propagator in the position basis x_n = (n + a)/N is

    U[n, n'] = (iN)^(-1/2) exp[i pi (n - n')^2 / N] exp[i (K N / 2 pi) cos(2 pi (n + a) / N)]

i.e. free evolution followed by the kick, with hbar = 1/(2 pi N).  The
split-step path applies the same operator as an FFT-diagonal free phase
exp(-i pi k^2 / N) followed by the kick phase; for even N the two agree to
rounding.  For odd N the quadratic phase is not N-periodic, the free part
is no longer circulant, and only the explicit matrix path is available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import jv

from .core_map import MapParams, lyapunov_analytic, torus_delta

TWO_PI = 2.0 * math.pi


def _check_dimension(N: int) -> None:
    if N <= 1:
        raise ValueError(f"Hilbert dimension must be >= 2, got N={N}")


def positions(params: MapParams) -> np.ndarray:
    return (np.arange(params.N) + params.a) / params.N


def kick_phase(params: MapParams) -> np.ndarray:
    N = params.N
    return np.exp(1j * params.K * N / TWO_PI * np.cos(TWO_PI * positions(params)))


def free_phase(N: int) -> np.ndarray:
    """Free-evolution eigenphases on the FFT momentum index k = 0..N-1."""
    k = np.arange(N, dtype=np.int64)
    # reduce k^2 mod 2N first so the phase argument stays small
    return np.exp(-1j * math.pi * ((k * k) % (2 * N)) / N)


@dataclass(frozen=True)
class PropagatorMatrix:
    entries: np.ndarray
    params: MapParams

    def unitarity_defect(self) -> float:
        U = self.entries
        return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))


def build_propagator(params: MapParams) -> PropagatorMatrix:
    N = params.N
    _check_dimension(N)
    n = np.arange(N, dtype=np.int64)
    d = (n[:, None] - n[None, :]) % (2 * N)
    free = np.exp(1j * math.pi * ((d * d) % (2 * N)) / N) / np.sqrt(1j * N)
    U = kick_phase(params)[:, None] * free
    return PropagatorMatrix(U, params)


@dataclass(frozen=True)
class WavePacket:
    amplitudes: np.ndarray
    params: MapParams
    x0: float = float("nan")
    p0: float = float("nan")
    sigma_x: float = float("nan")

    @property
    def N(self) -> int:
        return len(self.amplitudes)

    @property
    def sigma_p(self) -> float:
        return self.params.hbar / (2.0 * self.sigma_x)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def position_density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def momentum_density(self) -> np.ndarray:
        phi = np.fft.fft(self.amplitudes) / math.sqrt(self.N)
        return np.abs(phi) ** 2

    def mean_position(self, around: float | None = None) -> float:
        """Mean of x on the branch centred at ``around`` (default: packet centre)."""
        c = self.x0 if around is None else around
        rho = self.position_density()
        return c + float(np.sum(rho * torus_delta(positions(self.params) - c)) / rho.sum())

    def mean_momentum(self, around: float | None = None) -> float:
        c = self.p0 if around is None else around
        rho = self.momentum_density()
        pk = np.arange(self.N) / self.N
        return c + float(np.sum(rho * torus_delta(pk - c)) / rho.sum())

    def overlap(self, other: "WavePacket") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def with_amplitudes(self, amps: np.ndarray) -> "WavePacket":
        return WavePacket(amps, self.params, self.x0, self.p0, self.sigma_x)


def default_sigma_x(N: int) -> float:
    """Circular packet: sigma_x = sigma_p, Planck-cell area 4 pi sx sp = 1/N."""
    return 1.0 / math.sqrt(4.0 * math.pi * N)


def wave_packet(params: MapParams, x0: float, p0: float, sigma_x: float | None = None, images: int = 1) -> WavePacket:
    """Minimum-uncertainty packet sampled on x_n = (n + a)/N and normalized.

    Amplitudes follow exp[-(x - x0)^2/(4 sx^2) + i (p0/hbar)(x - x0)], summed
    over position images j = -images..images.
    """
    N = params.N
    if sigma_x is None:
        sigma_x = default_sigma_x(N)
    if not 0.0 < sigma_x < 0.25:
        raise ValueError("sigma_x must lie in (0, 0.25)")
    if sigma_x < 2.0 / N:
        raise ValueError(f"sigma_x={sigma_x} is below the grid resolution 2/N")
    x = positions(params)
    amps = np.zeros(N, dtype=complex)
    for j in range(-images, images + 1):
        d = x - x0 + j
        amps += np.exp(-(d**2) / (4.0 * sigma_x**2) + 1j * TWO_PI * N * p0 * d)
    amps /= np.linalg.norm(amps)
    return WavePacket(amps, params, x0, p0, sigma_x)


def _apply(psi: np.ndarray, params: MapParams, t: int, method: str, U: PropagatorMatrix | None = None) -> np.ndarray:
    if method == "matrix":
        if U is None:
            U = build_propagator(params)
        M = U.entries if t >= 0 else U.entries.conj().T
        for _ in range(abs(t)):
            psi = M @ psi
        return psi
    if method == "split-step":
        if params.N % 2:
            raise ValueError("split-step needs even N; use method='matrix'")
        kick = kick_phase(params)
        free = free_phase(params.N)
        if t >= 0:
            for _ in range(t):
                psi = kick * np.fft.ifft(free * np.fft.fft(psi))
        else:
            kick = kick.conj()
            free = free.conj()
            for _ in range(-t):
                psi = np.fft.ifft(free * np.fft.fft(kick * psi))
        return psi
    raise ValueError(f"unknown method {method!r}")


def propagate(state: WavePacket, params: MapParams, t: int, method: str = "split-step", U: PropagatorMatrix | None = None) -> WavePacket:
    """Apply U^t (U^dagger for negative t)."""
    if state.N != params.N:
        raise ValueError(f"state has dimension {state.N}, params say N={params.N}")
    _check_dimension(params.N)
    return state.with_amplitudes(_apply(state.amplitudes.copy(), params, int(t), method, U))


def evolve_series(state: WavePacket, params: MapParams, T: int, method: str = "split-step"):
    """Yield the state at t = 0..T."""
    psi = state.amplitudes.copy()
    U = build_propagator(params) if method == "matrix" else None
    yield state
    for _ in range(T):
        psi = _apply(psi, params, 1, method, U)
        yield state.with_amplitudes(psi)


class FidelityCurve(NamedTuple):
    t: np.ndarray
    F: np.ndarray
    deltaK: float

    def at(self, t: int) -> float:
        return float(self.F[int(t)])


def fidelity_curve(params: MapParams, deltaK: float, state: WavePacket, T: int, method: str = "split-step") -> FidelityCurve:
    """F(t) = |<Phi_{K+dK}(t) | Phi_K(t)>|^2 for t = 0..T from two forward runs."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if state.N != params.N:
        raise ValueError("dimension mismatch")
    pert = params.with_K(params.K + deltaK)
    F = np.empty(T + 1)
    for t, (a, b) in enumerate(zip(evolve_series(state, params, T, method), evolve_series(state, pert, T, method))):
        F[t] = abs(b.overlap(a)) ** 2
    return FidelityCurve(np.arange(T + 1), F, deltaK)


def echo_fidelity(params: MapParams, deltaK: float, state: WavePacket, t: int, method: str = "split-step") -> float:
    """|<Phi| U_{K+dK}^dagger(t) U_K(t) |Phi>|^2, forward at K then back at K + dK."""
    fwd = propagate(state, params, t, method)
    back = propagate(fwd, params.with_K(params.K + deltaK), -t, method)
    return abs(state.overlap(back)) ** 2


def action_diffusion_constant(K: float) -> float:
    """(1 + 2 J_2(K)) / (4 (2 pi)^4), for the perturbation -cos(2 pi x)/(4 pi^2) per unit dK."""
    if K <= 0:
        raise ValueError("K must be positive")
    return (1.0 + 2.0 * float(jv(2, K))) / (4.0 * TWO_PI**4)


def heisenberg_time(params: MapParams) -> float:
    return float(params.N)


def ehrenfest_time(params: MapParams) -> float:
    """ln(N) / <mu> with the analytic Lyapunov exponent."""
    if params.N < 2:
        raise ValueError("N must be >= 2")
    return math.log(params.N) / lyapunov_analytic(params.K)


REGIMES = ("quantum-perturbative", "Fermi-golden-rule", "Lyapunov")


@dataclass(frozen=True)
class RegimeReport:
    gamma_sq: float
    regime: str
    tau_r_predicted: float
    N: int
    epsilon: float
    K: float
    g: int
    tau_H: float
    K_E: float
    h_KS: float
    d: int = 1
    lyapunov_boundary: float = field(default=float("nan"))

    @property
    def gamma(self) -> float:
        return math.sqrt(self.gamma_sq)


def gamma_parameter(params: MapParams, epsilon: float, g: int = 4) -> RegimeReport:
    """gamma^2 = hbar^2 / (2 g eps^2 tau_H K(E)) and the three-branch time scale.

    ``epsilon`` is the coefficient of the perturbation -cos(2 pi x)/(4 pi^2)
    per kick, i.e. the kick-strength shift dK; that is the normalization the
    analytic K(E) refers to.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if g < 1:
        raise ValueError("g must be >= 1")
    hbar = params.hbar
    tau_H = heisenberg_time(params)
    KE = action_diffusion_constant(params.K)
    h_KS = lyapunov_analytic(params.K)
    d = 1
    gsq = hbar**2 / (2.0 * g * epsilon**2 * tau_H * KE)
    boundary = d / (h_KS * tau_H)
    if gsq > 1.0:
        regime, tau = REGIMES[0], math.sqrt(gsq) * tau_H
    elif gsq > boundary:
        regime, tau = REGIMES[1], g * gsq * tau_H
    else:
        regime, tau = REGIMES[2], 1.0 / h_KS
    return RegimeReport(gsq, regime, tau, params.N, epsilon, params.K, g, tau_H, KE, h_KS, d, boundary)


def support_intervals(density: np.ndarray, threshold: float = 0.05) -> int:
    """Number of disjoint circular runs where density exceeds ``threshold`` * max."""
    above = density > threshold * density.max()
    if above.all():
        return 1
    # count rising edges on the ring
    return int(np.sum(above & ~np.roll(above, 1)))


def classical_mean_position(params: MapParams, x0: float, p0: float, sigma: float, t: int, M: int = 200_000, seed: int = 0) -> float:
    """Mean lifted position of a matched Gaussian cloud after t steps (for correspondence checks)."""
    from . import kernels

    rng = np.random.default_rng(seed)
    x = x0 + sigma * rng.standard_normal(M)
    p = p0 + sigma * rng.standard_normal(M)
    kernels.iterate_cloud(x, p, params.K, t)
    return float(np.mean(x0 + torus_delta(x - x0)))
