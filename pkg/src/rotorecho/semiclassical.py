"""Heteroclinic-orbit sum for wave-packet cross-correlations.

C(t) = <g_beta| U^t |g_alpha> is approximated by a sum over real orbits that
leave the neighbourhood of alpha along its unstable manifold and arrive in
the neighbourhood of beta along its stable manifold.  Each orbit contributes
the exact Gaussian overlap of the propagator linearized about it,

    U_k = exp{(i/hbar)[S - (p_t x_t - p_0 x_0)/2]} T(z_t) mu(M) T(z_0)^dagger,

with T the phase-space translation, mu(M) the metaplectic operator of the
orbit's stability matrix and S its action.

The quantum step is free flight followed by the kick, so the orbits used
here follow that ordering: w_j = Kick(z_j) where z_j is a standard-map
(kick-first) orbit.  Positions agree, momenta are shifted by one kick.

Orbits are found as crossings of the unstable manifold of alpha's anchor,
iterated ceil(t/2) times, with the stable manifold of beta's anchor,
iterated floor(t/2) times backward, and then rebuilt exactly from both
manifold parametrizations.  Plane results are folded onto the torus by
summing over lattice images of beta with the torus Bloch phases.
"""
from __future__ import annotations

import cmath
import logging
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import manifold as mf
from .core_map import MapParams, Orbit, PhasePoint, TangentFrame, fixed_point, step_action, wrap
from .quantum import WavePacket, default_sigma_x, propagate, wave_packet

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_RADIUS = 4.0


class CoalescenceError(ArithmeticError):
    """The quadratic form of a contribution is singular (coalescing saddles)."""


class Packet(NamedTuple):
    """Centre and width of a minimum-uncertainty packet."""

    x: float
    p: float
    sigma_x: float

    @classmethod
    def of(cls, obj, params: MapParams | None = None) -> "Packet":
        if isinstance(obj, Packet):
            return obj
        if isinstance(obj, WavePacket):
            return cls(obj.x0, obj.p0, obj.sigma_x)
        x, p, *rest = obj
        s = rest[0] if rest else default_sigma_x(params.N)
        return cls(float(x), float(p), float(s))

    def Z(self, hbar: float) -> complex:
        return 1j * hbar / (2.0 * self.sigma_x**2)

    def sigma_p(self, hbar: float) -> float:
        return hbar / (2.0 * self.sigma_x)

    def radius(self, hbar: float, n_sigma: float) -> float:
        return n_sigma * max(self.sigma_x, self.sigma_p(hbar))


# ------------------------------------------------------------ Gaussian algebra


@dataclass(frozen=True)
class Gaussian:
    """psi(x) = exp[(i/hbar)(Z x^2/2 + b x + c) + log_amp] on the line."""

    Z: complex
    b: complex
    c: complex
    log_amp: complex

    @classmethod
    def packet(cls, pk: Packet, hbar: float, q: float | None = None, p: float | None = None) -> "Gaussian":
        q = pk.x if q is None else q
        p = pk.p if p is None else p
        Z = pk.Z(hbar)
        return cls(Z, p - Z * q, 0.5 * Z * q * q - p * q, -0.25 * math.log(TWO_PI * pk.sigma_x**2))

    def __call__(self, x, hbar: float):
        x = np.asarray(x, dtype=float)
        return np.exp(1j / hbar * (0.5 * self.Z * x * x + self.b * x + self.c) + self.log_amp)

    def translate(self, q: float, p: float) -> "Gaussian":
        """T(q, p) psi(x) = exp[(i/hbar)(p x - p q / 2)] psi(x - q)."""
        Z, b = self.Z, self.b
        return Gaussian(Z, b - Z * q + p, self.c + 0.5 * Z * q * q - b * q - 0.5 * p * q, self.log_amp)

    def metaplectic(self, M: np.ndarray, log_den: complex) -> "Gaussian":
        """Apply mu(M); ``log_den`` is log(m11 + m12 Z) on the branch fixed by continuity."""
        (m11, m12), (m21, m22) = M
        den = m11 + m12 * self.Z
        Zn = (m21 + m22 * self.Z) / den
        return Gaussian(Zn, self.b / den, self.c - 0.5 * m12 * self.b**2 / den, self.log_amp - 0.5 * log_den)

    def free(self) -> "Gaussian":
        """exp[-(i/hbar) p^2/2] exactly (principal square root)."""
        den = 1.0 + self.Z
        return Gaussian(self.Z / den, self.b / den, self.c - 0.5 * self.b**2 / den, self.log_amp - 0.5 * cmath.log(den))

    def multiply_phase(self, a2: float, a1: float, a0: float) -> "Gaussian":
        """Multiply by exp[(i/hbar)(a2 x^2/2 + a1 x + a0)]."""
        return Gaussian(self.Z + a2, self.b + a1, self.c + a0, self.log_amp)

    def overlap_from(self, other: "Gaussian", hbar: float) -> complex:
        """<self|other> = integral of conj(self) * other."""
        A = other.Z - self.Z.conjugate()
        B = other.b - self.b.conjugate()
        C = other.c - self.c.conjugate()
        if abs(A) < 1e-14 * (abs(other.Z) + abs(self.Z)):
            raise CoalescenceError("degenerate overlap quadratic form")
        a = -1j * A / hbar
        expo = 1j / hbar * (C - B * B / (2.0 * A)) + other.log_amp + self.log_amp.conjugate()
        return cmath.sqrt(TWO_PI / a) * cmath.exp(expo)


def packet_overlap(beta: Packet, alpha: Packet, hbar: float) -> complex:
    """Plane overlap <g_beta|g_alpha> of two packets."""
    return Gaussian.packet(beta, hbar).overlap_from(Gaussian.packet(alpha, hbar), hbar)


def image_weight(params: MapParams, q_beta: float, m: int) -> complex:
    """Torus Bloch weight for the momentum image p_beta + m."""
    return cmath.exp(1j * TWO_PI * m * (params.a - params.N * q_beta))


def torus_overlap(beta: Packet, alpha: Packet, params: MapParams, images: int = 1) -> complex:
    """<g_beta|g_alpha> on the torus as a sum over plane images of beta."""
    total = 0j
    hbar = params.hbar
    for j in range(-images, images + 1):
        for m in range(-images, images + 1):
            img = Packet(beta.x + j, beta.p + m, beta.sigma_x)
            total += image_weight(params, beta.x, m).conjugate() * packet_overlap(img, alpha, hbar)
    return total


# ------------------------------------------------------------------- orbits


@dataclass(frozen=True)
class HeteroclinicOrbit:
    """A t-step orbit from alpha's neighbourhood to a lattice image of beta's.

    ``orbit`` holds the kick-first (standard map) points z_0..z_t on the
    lift; its ``action`` is the standard generating-function sum.  The
    free-then-kick points used by the propagator are w_j = Kick(z_j).
    """

    intersection_point: PhasePoint
    orbit: Orbit
    action: float
    maslov_index: int
    stability: TangentFrame
    t: int
    t1: int
    u_a: float
    u_b: float
    image: tuple[int, int]
    sin_angle: float
    caustics: int = 0

    @property
    def K(self) -> float:
        return self.orbit.params.K

    @property
    def kick_positions(self) -> np.ndarray:
        return self.orbit.X[1:]

    @property
    def w0(self) -> tuple[float, float]:
        X, P, K = self.orbit.X, self.orbit.P, self.K
        return float(X[0]), float(P[0] - K / TWO_PI * math.sin(TWO_PI * X[0]))

    @property
    def wt(self) -> tuple[float, float]:
        X, P, K = self.orbit.X, self.orbit.P, self.K
        return float(X[-1]), float(P[-1] - K / TWO_PI * math.sin(TWO_PI * X[-1]))

    @property
    def kf_action(self) -> float:
        """Action of the free-then-kick orbit: kick cosines taken at the arrival points."""
        X = self.orbit.X
        a = self.K / (4.0 * math.pi**2)
        return self.action + a * (math.cos(TWO_PI * X[-1]) - math.cos(TWO_PI * X[0]))


def _kf_linear_chain(K: float, kick_x: np.ndarray, Z0: complex):
    """Stability matrix, Z after each step, and continuous log(m11 + m12 Z0)."""
    M = np.eye(2)
    Z = Z0
    log_den = 0j
    for x in kick_x:
        den = 1.0 + Z
        log_den += cmath.log(den)
        Z = Z / den
        c = -K * math.cos(TWO_PI * x)
        Z = Z + c
        M = np.array([[1.0, 0.0], [c, 1.0]]) @ (np.array([[1.0, 1.0], [0.0, 1.0]]) @ M)
    return M, Z, log_den


def _maslov_from_branch(M: np.ndarray, Z0: complex, log_den: complex) -> int:
    principal = cmath.log(M[0, 0] + M[0, 1] * Z0)
    w = (log_den.imag - principal.imag) / TWO_PI
    return 2 * int(round(w))


def _anchor_for(pk: Packet, params: MapParams):
    """The period-1 hyperbolic point nearest the packet centre."""
    fps = [fixed_point(params, 0.0), fixed_point(params, 0.5)]
    d = [math.hypot(mf.torus_delta(pk.x - f.point.x), mf.torus_delta(pk.p - f.point.p)) for f in fps]
    return fps[int(np.argmin(d))], min(d)


def _kick_gain(v, K: float, x_anchor: float) -> float:
    """Length of the kick-linearized eigenvector: |J_kick v|."""
    c = -K * math.cos(TWO_PI * x_anchor)
    return math.hypot(v[0], v[1] + c * v[0])


@dataclass
class Enumeration:
    orbits: list[HeteroclinicOrbit]
    t: int
    n_crossings: int
    n_tangential: int
    truncated: bool = False
    warnings: list[str] = field(default_factory=list)


def enumerate_heteroclinic_terms(
    alpha,
    beta,
    t: int,
    params: MapParams,
    radius: float = DEFAULT_RADIUS,
    ds_max: float = mf.DS_MAX,
    theta_max: float = mf.THETA_MAX,
    max_points: int = 20_000_000,
    angle_tol: float = 1e-6,
) -> Enumeration:
    """Orbits of t free-then-kick steps from alpha's to beta's neighbourhood.

    Neighbourhoods are discs of ``radius`` packet widths.  A refinement
    budget overrun is reported in the result rather than raised.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    a_pk = Packet.of(alpha, params)
    b_pk = Packet.of(beta, params)
    hbar = params.hbar
    anc_a, off_a = _anchor_for(a_pk, params)
    anc_b, off_b = _anchor_for(b_pk, params)
    Ra = a_pk.radius(hbar, radius)
    Rb = b_pk.radius(hbar, radius)
    K = params.K
    t1 = (t + 1) // 2
    t2 = t - t1
    warn: list[str] = []
    truncated = False
    try:
        A = _initial_curve(params, a_pk, anc_a, off_a, Ra, "unstable", t1, ds_max, theta_max, max_points)
        B = _initial_curve(params, b_pk, anc_b, off_b, Rb, "stable", t2, ds_max, theta_max, max_points)
    except mf.RefinementBudgetExceeded as exc:
        msg = f"t={t}: manifold truncated by point budget at arclength {exc.achieved_arclength:.4g}"
        logger.warning(msg)
        return Enumeration([], t, 0, 0, True, [msg])
    cs = mf.find_crossings(A, B)
    tangential = cs.sin_angle < angle_tol
    if tangential.any():
        msg = f"t={t}: {int(tangential.sum())} near-tangential crossings skipped"
        logger.warning(msg)
        warn.append(msg)
    cs = cs.take(~tangential)
    orbits = []
    for k in range(len(cs)):
        orb = _dress(A.branch, B.branch, cs, k, t, t1, t2, params, b_pk)
        x0, p0 = orb.w0
        xt, pt = orb.wt
        if math.hypot(x0 - a_pk.x, p0 - a_pk.p) > Ra:
            continue
        j, m = orb.image
        if math.hypot(xt - (b_pk.x + j), pt - (b_pk.p + m)) > Rb:
            continue
        orbits.append(orb)
    return Enumeration(orbits, t, len(cs), int(tangential.sum()), truncated, warn)


def _initial_curve(params, pk: Packet, anchor, offset: float, R: float, kind: str, t: int, ds_max, theta_max, max_points):
    """The curve whose ``t``-iterate seeds the crossing search for one packet.

    A packet whose neighbourhood holds a hyperbolic point uses that point's
    manifold, long enough to cover the neighbourhood (linear estimate, 10%
    margin).  Otherwise a straight segment through the packet centre along
    the nearest point's eigendirection is used.
    """
    K = params.K
    v = anchor.unstable_eigenvector if kind == "unstable" else anchor.stable_eigenvector
    if offset <= R:
        u_max = 1.1 * (R + offset) / _kick_gain(v, K, anchor.point.x)
        return mf.manifold_at(params, anchor, kind, t, ds_max, theta_max, u_max, 0, max_points)
    # kick-first coordinates of the centre, so that Kick(z) lands on it
    z = (pk.x, pk.p + K / TWO_PI * math.sin(TWO_PI * pk.x))
    half = 1.1 * R / _kick_gain(v, K, pk.x)
    return mf.segment_at(params, z, (float(v[0]), float(v[1])), kind, t, half, ds_max, theta_max, max_points)


def _dress(A, B, cs: mf.CrossingSet, k: int, t: int, t1: int, t2: int, params: MapParams, b_pk: Packet) -> HeteroclinicOrbit:
    oa = A.orbit(float(cs.u_a[k]))
    ob = B.orbit(float(cs.u_b[k]))
    sx, sp = int(cs.shift_x[k]), int(cs.shift_p[k])
    Xa, Pa = oa.X[-(t1 + 1):], oa.P[-(t1 + 1):]
    jj = np.arange(t2 + 1)
    Xb = ob.X[: t2 + 1] + sx + jj * sp
    Pb = ob.P[: t2 + 1] + sp
    X = np.concatenate([Xa, Xb[1:]])
    P = np.concatenate([Pa, Pb[1:]])
    S = float(np.sum(step_action(X[:-1], X[1:], params.K)))
    orbit = Orbit(X, P, params, S)
    K = params.K
    xt = float(X[-1])
    pt = float(P[-1] - K / TWO_PI * math.sin(TWO_PI * xt))
    # integer image of beta's centre reached at time t
    image = (int(round(xt - b_pk.x)), int(round(pt - b_pk.p)))
    M, _, _ = _kf_linear_chain(K, X[1:], 0j)
    return HeteroclinicOrbit(
        PhasePoint.from_lifted(float(cs.X[k]), float(cs.P[k])),
        orbit,
        S,
        0,
        TangentFrame.from_matrix(M),
        t,
        t1,
        float(cs.u_a[k]),
        float(cs.u_b[k]),
        image,
        float(cs.sin_angle[k]),
    )


# ------------------------------------------------------------ contributions


class PhaseParts(NamedTuple):
    action: float
    maslov: float
    gaussian: float


@dataclass(frozen=True)
class HeteroclinicContribution:
    orbit: HeteroclinicOrbit
    amplitude: complex
    phase_parts: PhaseParts
    maslov_index: int


def contribution(orbit: HeteroclinicOrbit, alpha, beta, params: MapParams, action_shift: float = 0.0) -> HeteroclinicContribution:
    """Gaussian overlap of the propagator linearized about ``orbit``, folded onto the torus.

    ``action_shift`` is added to the orbit action (for phase-periodicity checks).
    """
    a_pk = Packet.of(alpha, params)
    b_pk = Packet.of(beta, params)
    hbar = params.hbar
    K = params.K
    x0, p0 = orbit.w0
    xt, pt = orbit.wt
    S = orbit.kf_action + action_shift

    g = Gaussian.packet(a_pk, hbar).translate(-x0, -p0)
    M, _, log_den = _kf_linear_chain(K, orbit.kick_positions, g.Z)
    den = M[0, 0] + M[0, 1] * g.Z
    if abs(den) < 1e-300 or not np.isfinite(den):
        raise CoalescenceError("singular metaplectic denominator")
    nu = _maslov_from_branch(M, g.Z, log_den)
    # principal log plus the continuity correction
    g = g.metaplectic(M, cmath.log(den) + 1j * math.pi * nu)
    g = g.translate(xt, pt)
    phase = (S - 0.5 * (pt * xt - p0 * x0)) / hbar
    g = Gaussian(g.Z, g.b, g.c, g.log_amp + 1j * phase)

    j, m = orbit.image
    img = Packet(b_pk.x + j, b_pk.p + m, b_pk.sigma_x)
    amp = image_weight(params, b_pk.x, m).conjugate() * Gaussian.packet(img, hbar).overlap_from(g, hbar)
    gauss_phase = cmath.phase(amp) - (phase - nu * math.pi / 2)
    gauss_phase = (gauss_phase + math.pi) % TWO_PI - math.pi
    return HeteroclinicContribution(orbit, amp, PhaseParts(S / hbar, nu * math.pi / 2, gauss_phase), nu)


def linearized_overlap_stepwise(orbit: HeteroclinicOrbit, alpha, beta, params: MapParams) -> complex:
    """Same quantity as :func:`contribution`, by propagating the packet step by step.

    Free flights are exact; each kick potential is expanded to second order
    about the orbit's position.  Used as an independent check of the
    closed-form expression.
    """
    a_pk = Packet.of(alpha, params)
    b_pk = Packet.of(beta, params)
    hbar = params.hbar
    K = params.K
    a = K / (4.0 * math.pi**2)
    g = Gaussian.packet(a_pk, hbar)
    for x in orbit.kick_positions:
        g = g.free()
        V = -a * math.cos(TWO_PI * x)
        V1 = K / TWO_PI * math.sin(TWO_PI * x)
        V2 = K * math.cos(TWO_PI * x)
        # exp[-(i/hbar)(V + V1 (y - x) + V2 (y - x)^2 / 2)]
        g = g.multiply_phase(-V2, -(V1 - V2 * x), -(V - V1 * x + 0.5 * V2 * x * x))
    j, m = orbit.image
    img = Packet(b_pk.x + j, b_pk.p + m, b_pk.sigma_x)
    return image_weight(params, b_pk.x, m).conjugate() * Gaussian.packet(img, hbar).overlap_from(g, hbar)


# ------------------------------------------------------------------- series


@dataclass
class CorrelationSeries:
    t: np.ndarray
    C_semiclassical: np.ndarray
    C_quantum: np.ndarray
    n_orbits: np.ndarray
    min_amplitude: np.ndarray
    warnings: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def abs_err(self) -> np.ndarray:
        return np.abs(self.C_semiclassical - self.C_quantum)

    def max_error(self, t_max: float | None = None) -> float:
        sel = self.t <= (t_max if t_max is not None else np.inf)
        return float(self.abs_err[sel].max())


def sum_contributions(contribs: Sequence[HeteroclinicContribution]) -> complex:
    """Deterministic ordered reduction (the order given)."""
    total = 0j
    for c in contribs:
        total += c.amplitude
    return total


def semiclassical_terms(alpha, beta, params: MapParams, t: int, radius: float = DEFAULT_RADIUS, **kw):
    """(contributions ordered along the unstable manifold, enumeration record)."""
    enum = enumerate_heteroclinic_terms(alpha, beta, t, params, radius, **kw)
    out = []
    for orb in enum.orbits:
        try:
            out.append(contribution(orb, alpha, beta, params))
        except CoalescenceError as exc:
            msg = f"t={t}: skipped coalescing contribution ({exc})"
            logger.warning(msg)
            enum.warnings.append(msg)
    return out, enum


def quantum_correlation(alpha, beta, params: MapParams, T: int) -> np.ndarray:
    """Exact <g_beta| U^t |g_alpha> for t = 0..T."""
    a_pk = Packet.of(alpha, params)
    b_pk = Packet.of(beta, params)
    ga = wave_packet(params, a_pk.x, a_pk.p, a_pk.sigma_x)
    gb = wave_packet(params, b_pk.x, b_pk.p, b_pk.sigma_x)
    method = "split-step" if params.N % 2 == 0 else "matrix"
    out = np.empty(T + 1, dtype=complex)
    psi = ga
    out[0] = gb.overlap(psi)
    for t in range(1, T + 1):
        psi = propagate(psi, params, 1, method)
        out[t] = gb.overlap(psi)
    return out


def semiclassical_correlation(
    alpha,
    beta,
    params: MapParams,
    T: int,
    radius: float = DEFAULT_RADIUS,
    quantum: bool = True,
    **kw,
) -> CorrelationSeries:
    """Semiclassical C(t) for t = 0..T next to the exact quantum values.

    At t = 0 the torus overlap of the two packets is used (1 when alpha = beta).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    a_pk = Packet.of(alpha, params)
    b_pk = Packet.of(beta, params)
    Csc = np.zeros(T + 1, dtype=complex)
    counts = np.zeros(T + 1, dtype=int)
    amin = np.full(T + 1, np.nan)
    warns: list[str] = []
    timings = {}
    Csc[0] = torus_overlap(b_pk, a_pk, params)
    for t in range(1, T + 1):
        t0 = time.perf_counter()
        terms, enum = semiclassical_terms(a_pk, b_pk, params, t, radius, **kw)
        Csc[t] = sum_contributions(terms)
        counts[t] = len(terms)
        if terms:
            amin[t] = min(abs(c.amplitude) for c in terms)
        warns.extend(enum.warnings)
        timings[f"t{t}"] = time.perf_counter() - t0
    Cqm = quantum_correlation(a_pk, b_pk, params, T) if quantum else np.full(T + 1, np.nan + 0j)
    return CorrelationSeries(np.arange(T + 1), Csc, Cqm, counts, amin, warns, timings)
