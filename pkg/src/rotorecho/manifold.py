"""Stable and unstable manifolds of the period-1 hyperbolic points.

A manifold point is labelled by a primitive parameter ``u``: its seed is
``anchor + u * lam**(-m) * v`` (a distance below 1e-8 from the anchor on the
local eigenvector) and the point itself is that seed after ``m + t`` steps
of the map (inverse map for stable manifolds).  The ``t``-iterated manifold
is the image of the local segment |u| <= local_length, and every point's
orbit can be rebuilt from its ``u``.

All geometry (lengths, areas, actions) is done on the lift.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from . import kernels
from .core_map import (
    FixedPoint,
    MapParams,
    Orbit,
    PhasePoint,
    TangentFrame,
    fixed_point,
    inverse_step_lifted,
    step_action,
    step_lifted,
    torus_delta,
    wrap,
)
from .quantum import action_diffusion_constant

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
SEED_DISTANCE = 1e-8
LOCAL_LENGTH = 1.0 / math.sqrt(4.0 * math.pi * 1000)
DS_MAX = 1e-3
THETA_MAX = 0.2


class RefinementBudgetExceeded(RuntimeError):
    def __init__(self, msg, achieved_arclength):
        super().__init__(msg)
        self.achieved_arclength = achieved_arclength


@dataclass(frozen=True)
class Branch:
    """Parametrization u -> manifold point for one (params, anchor, kind)."""

    params: MapParams
    anchor: FixedPoint
    kind: str
    t: int
    local_length: float

    @property
    def lam(self) -> float:
        """Expansion factor along the manifold under the relevant map direction."""
        if self.kind == "unstable":
            return self.anchor.unstable_eigenvalue
        return 1.0 / self.anchor.stable_eigenvalue

    @property
    def v(self) -> np.ndarray:
        return self.anchor.unstable_eigenvector if self.kind == "unstable" else self.anchor.stable_eigenvector

    @property
    def m(self) -> int:
        return max(0, math.ceil(math.log(self.local_length / SEED_DISTANCE) / math.log(abs(self.lam))))

    @property
    def steps(self) -> int:
        return self.m + self.t

    @property
    def K_eff(self) -> float:
        # deviations from an anchor at x_a with sin(2 pi x_a) = 0 obey the
        # same map with K cos(2 pi x_a); working in deviations keeps the
        # 1e-8 seeds at full relative precision
        return self.params.K * math.cos(TWO_PI * self.anchor.point.x)

    def seed_deviation(self, u):
        u = np.asarray(u, dtype=float)
        scale = self.lam ** (-self.m)
        return u * scale * self.v[0], u * scale * self.v[1]

    def seeds(self, u):
        dx, dp = self.seed_deviation(u)
        a = self.anchor.point
        return a.X + dx, a.P + dp

    def deviations(self, u):
        """Deviation (xi, pi) from the anchor after ``steps`` iterations."""
        dx, dp = self.seed_deviation(u)
        xi = np.array(dx, dtype=float, ndmin=1)
        pi_ = np.array(dp, dtype=float, ndmin=1)
        kernels.iterate_cloud(xi, pi_, self.K_eff, self.steps, inverse=self.kind == "stable")
        return xi, pi_

    def evaluate(self, u):
        xi, pi_ = self.deviations(u)
        a = self.anchor.point
        return a.X + xi, a.P + pi_

    def evaluate_with_tangent(self, u):
        """Points and d(point)/du, propagated through the linearized map."""
        dx, dp = self.seed_deviation(u)
        xi = np.array(dx, dtype=float, ndmin=1)
        pi_ = np.array(dp, dtype=float, ndmin=1)
        scale = self.lam ** (-self.m)
        tX = np.full_like(xi, scale * self.v[0])
        tP = np.full_like(xi, scale * self.v[1])
        K = self.K_eff
        for _ in range(self.steps):
            if self.kind == "unstable":
                tP = tP - K * np.cos(TWO_PI * xi) * tX
                tX = tX + tP
                xi, pi_ = step_lifted(xi, pi_, K)
            else:
                tX = tX - tP
                xi, pi_ = inverse_step_lifted(xi, pi_, K)
                tP = tP + K * np.cos(TWO_PI * xi) * tX
        a = self.anchor.point
        return a.X + xi, a.P + pi_, tX, tP

    def orbit(self, u: float) -> Orbit:
        """The point's full orbit from its seed, in forward time order."""
        dx, dp = self.seed_deviation(u)
        n = self.steps
        xi = np.empty(n + 1)
        pi_ = np.empty(n + 1)
        xi[0], pi_[0] = float(dx), float(dp)
        K = self.K_eff
        for j in range(n):
            if self.kind == "unstable":
                xi[j + 1], pi_[j + 1] = step_lifted(xi[j], pi_[j], K)
            else:
                xi[j + 1], pi_[j + 1] = inverse_step_lifted(xi[j], pi_[j], K)
        if self.kind == "stable":
            xi, pi_ = xi[::-1].copy(), pi_[::-1].copy()
        a = self.anchor.point
        X, P = a.X + xi, a.P + pi_
        action = float(np.sum(step_action(X[:-1], X[1:], self.params.K)))
        return Orbit(X, P, self.params, action)


class _Origin(NamedTuple):
    point: PhasePoint


@dataclass(frozen=True)
class SegmentBranch:
    """A straight segment through an arbitrary lifted point, iterated like a branch.

    Stands in for a manifold when a packet centre sits far from every
    hyperbolic point.  ``u`` is the signed distance from ``origin`` along the
    unit vector ``v``; the segment is mapped forward (``kind="unstable"``)
    or backward (``"stable"``) ``t`` times with the full map.
    """

    params: MapParams
    origin: tuple[float, float]
    v: tuple[float, float]
    kind: str
    t: int
    local_length: float

    m = 0
    lam = 1.0

    @property
    def steps(self) -> int:
        return self.t

    @property
    def anchor(self) -> _Origin:
        return _Origin(PhasePoint.from_lifted(*self.origin))

    def seeds(self, u):
        u = np.asarray(u, dtype=float)
        return self.origin[0] + u * self.v[0], self.origin[1] + u * self.v[1]

    def evaluate(self, u):
        X, P = self.seeds(u)
        X = np.array(X, dtype=float, ndmin=1)
        P = np.array(P, dtype=float, ndmin=1)
        kernels.iterate_cloud(X, P, self.params.K, self.t, inverse=self.kind == "stable")
        return X, P

    def evaluate_with_tangent(self, u):
        X, P = self.seeds(u)
        X = np.array(X, dtype=float, ndmin=1)
        P = np.array(P, dtype=float, ndmin=1)
        tX = np.full_like(X, self.v[0])
        tP = np.full_like(X, self.v[1])
        K = self.params.K
        for _ in range(self.t):
            if self.kind == "unstable":
                tP = tP - K * np.cos(TWO_PI * X) * tX
                tX = tX + tP
                X, P = step_lifted(X, P, K)
            else:
                tX = tX - tP
                X, P = inverse_step_lifted(X, P, K)
                tP = tP + K * np.cos(TWO_PI * X) * tX
        return X, P, tX, tP

    def orbit(self, u: float) -> Orbit:
        X0, P0 = self.seeds(u)
        X = np.empty(self.t + 1)
        P = np.empty(self.t + 1)
        X[0], P[0] = float(X0), float(P0)
        K = self.params.K
        for j in range(self.t):
            f = step_lifted if self.kind == "unstable" else inverse_step_lifted
            X[j + 1], P[j + 1] = f(X[j], P[j], K)
        if self.kind == "stable":
            X, P = X[::-1].copy(), P[::-1].copy()
        action = float(np.sum(step_action(X[:-1], X[1:], K)))
        return Orbit(X, P, self.params, action)


@dataclass(frozen=True)
class ManifoldCurve:
    X: np.ndarray
    P: np.ndarray
    u: np.ndarray
    ell: np.ndarray
    branch: Branch
    ds_max: float
    theta_max: float
    unresolved: int = 0

    @property
    def kind(self) -> str:
        return self.branch.kind

    @property
    def anchor(self) -> FixedPoint:
        return self.branch.anchor

    @property
    def params(self) -> MapParams:
        return self.branch.params

    @property
    def arclength(self) -> float:
        return float(self.ell[-1]) if len(self.ell) else 0.0

    @property
    def points(self) -> list[PhasePoint]:
        return [PhasePoint.from_lifted(X, P) for X, P in zip(self.X, self.P)]

    def __len__(self) -> int:
        return len(self.X)

    def segment_lengths(self) -> np.ndarray:
        return np.hypot(np.diff(self.X), np.diff(self.P))

    def turning_angles(self) -> np.ndarray:
        return _turning(self.X, self.P)

    def orbit(self, u: float) -> Orbit:
        return self.branch.orbit(u)

    def truncated(self, arclength: float) -> "ManifoldCurve":
        k = int(np.searchsorted(self.ell, arclength, side="left")) + 1
        k = min(max(k, 2), len(self.X))
        return ManifoldCurve(self.X[:k], self.P[:k], self.u[:k], self.ell[:k], self.branch, self.ds_max, self.theta_max, self.unresolved)


def _turning(X, P):
    dx, dp = np.diff(X), np.diff(P)
    cross = dx[:-1] * dp[1:] - dp[:-1] * dx[1:]
    dot = dx[:-1] * dx[1:] + dp[:-1] * dp[1:]
    return np.abs(np.arctan2(cross, dot))


def _refine(branch: Branch, u: np.ndarray, ds_max: float, theta_max: float, max_points: int):
    X, P = branch.evaluate(u)
    unresolved = 0
    while True:
        seg = np.hypot(np.diff(X), np.diff(P))
        split = seg > ds_max
        ang = _turning(X, P)
        bad = ang > theta_max
        split[:-1] |= bad
        split[1:] |= bad
        mid = 0.5 * (u[:-1] + u[1:])
        # intervals already at floating-point resolution cannot be split
        stuck = split & ((mid == u[:-1]) | (mid == u[1:]))
        if stuck.any():
            unresolved = int(stuck.sum())
            split &= ~stuck
        if not split.any():
            break
        if len(u) + int(split.sum()) > max_points:
            ell = np.concatenate([[0.0], np.cumsum(seg)])
            raise RefinementBudgetExceeded(
                f"refinement needs more than {max_points} points", float(ell[-1])
            )
        idx = np.nonzero(split)[0]
        mu = mid[idx]
        mX, mP = branch.evaluate(mu)
        u = np.insert(u, idx + 1, mu)
        X = np.insert(X, idx + 1, mX)
        P = np.insert(P, idx + 1, mP)
    return u, X, P, unresolved


def manifold_at(
    params: MapParams,
    anchor: FixedPoint,
    kind: str,
    t: int,
    ds_max: float = DS_MAX,
    theta_max: float = THETA_MAX,
    local_length: float = LOCAL_LENGTH,
    branch: int = 1,
    max_points: int = 20_000_000,
) -> ManifoldCurve:
    """The local segment (length ``local_length`` per side) after ``t`` iterations, refined."""
    if kind not in ("stable", "unstable"):
        raise ValueError("kind must be 'stable' or 'unstable'")
    if ds_max <= 0 or theta_max <= 0:
        raise ValueError("refinement tolerances must be positive")
    br = Branch(params, anchor, kind, int(t), float(local_length))
    return _refined_curve(br, branch, ds_max, theta_max, max_points)


def segment_at(
    params: MapParams,
    origin: tuple[float, float],
    direction: tuple[float, float],
    kind: str,
    t: int,
    half_length: float,
    ds_max: float = DS_MAX,
    theta_max: float = THETA_MAX,
    max_points: int = 20_000_000,
) -> ManifoldCurve:
    """The segment ``origin +- half_length * direction`` after ``t`` iterations, refined."""
    if kind not in ("stable", "unstable"):
        raise ValueError("kind must be 'stable' or 'unstable'")
    n = math.hypot(*direction)
    if not n > 0:
        raise ValueError("direction must be nonzero")
    v = (direction[0] / n, direction[1] / n)
    br = SegmentBranch(params, (float(origin[0]), float(origin[1])), v, kind, int(t), float(half_length))
    return _refined_curve(br, 0, ds_max, theta_max, max_points)


def _refined_curve(br, branch: int, ds_max: float, theta_max: float, max_points: int) -> ManifoldCurve:
    local_length = br.local_length
    n0 = 65
    if branch == 0:
        u = np.linspace(-local_length, local_length, 2 * n0 - 1)
    elif branch in (1, -1):
        u = branch * np.linspace(0.0, local_length, n0)
    else:
        raise ValueError("branch must be +1, -1 or 0 (both)")
    u, X, P, unresolved = _refine(br, u, ds_max, theta_max, max_points)
    if unresolved:
        logger.warning("%d intervals hit floating-point resolution during refinement", unresolved)
    ell = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(X), np.diff(P)))])
    return ManifoldCurve(X, P, u, ell, br, ds_max, theta_max, unresolved)


def grow_manifold(
    params: MapParams,
    anchor: FixedPoint,
    kind: str = "unstable",
    target_arclength: float = 1.0,
    ds_max: float = DS_MAX,
    theta_max: float = THETA_MAX,
    local_length: float = LOCAL_LENGTH,
    branch: int = 1,
    max_points: int = 20_000_000,
    max_iterations: int = 60,
) -> ManifoldCurve:
    """Iterate the local segment until the curve is at least ``target_arclength`` long."""
    for t in range(max_iterations + 1):
        curve = manifold_at(params, anchor, kind, t, ds_max, theta_max, local_length, branch, max_points)
        if curve.arclength >= target_arclength:
            return curve.truncated(target_arclength)
    raise RefinementBudgetExceeded(
        f"arclength {curve.arclength:.4g} after {max_iterations} iterations", curve.arclength
    )


# ---------------------------------------------------------------- geometry


def _point_to_polyline(qx, qp, curve: ManifoldCurve, k: int = 8, torus: bool = True):
    """Distance from each query point to the polyline of ``curve``."""
    X, P = curve.X, curve.P
    if torus:
        tree = cKDTree(np.column_stack([wrap(X), wrap(P)]), boxsize=1.0)
        _, idx = tree.query(np.column_stack([wrap(qx), wrap(qp)]), k=min(k, len(X)))
    else:
        tree = cKDTree(np.column_stack([X, P]))
        _, idx = tree.query(np.column_stack([qx, qp]), k=min(k, len(X)))
    idx = np.atleast_2d(idx.T).T if idx.ndim == 1 else idx
    best = np.full(len(qx), np.inf)
    n = len(X)
    for col in range(idx.shape[1]):
        for off in (-1, 0):
            a = np.clip(idx[:, col] + off, 0, n - 2)
            ax, ap = X[a], P[a]
            dx, dp = X[a + 1] - ax, P[a + 1] - ap
            rx, rp = qx - ax, qp - ap
            if torus:
                rx, rp = torus_delta(rx), torus_delta(rp)
            L2 = dx * dx + dp * dp
            s = np.clip(np.where(L2 > 0, (rx * dx + rp * dp) / np.where(L2 > 0, L2, 1.0), 0.0), 0.0, 1.0)
            d = np.hypot(rx - s * dx, rp - s * dp)
            best = np.minimum(best, d)
    return best


def manifold_distance(curveA: ManifoldCurve, curveB: ManifoldCurve, torus: bool = True) -> float:
    """Symmetric Hausdorff distance between two polylines (torus metric by default)."""
    if len(curveA) == 0 or len(curveB) == 0:
        raise ValueError("empty curve")
    if len(curveA) < 2 or len(curveB) < 2:
        raise ValueError("curves need at least two points")
    dab = _point_to_polyline(curveA.X, curveA.P, curveB, torus=torus).max()
    dba = _point_to_polyline(curveB.X, curveB.P, curveA, torus=torus).max()
    return float(max(dab, dba))


class Caustics(NamedTuple):
    count: int
    ell: np.ndarray
    x: np.ndarray
    crowded: bool


def caustic_count(curve: ManifoldCurve) -> Caustics:
    """Folds of the configuration-space projection: sign changes of dx/dl."""
    if len(curve) < 3:
        raise ValueError("need at least 3 points")
    dx = np.diff(curve.X)
    nz = np.nonzero(dx != 0.0)[0]
    sgn = np.sign(dx[nz])
    flips = np.nonzero(sgn[1:] != sgn[:-1])[0]
    # the fold sits at the vertex shared by the two segments
    verts = nz[flips] + 1
    crowded = bool(np.any(np.diff(verts) <= 2))
    if crowded:
        warnings.warn("folds within 2 samples of each other; refine before trusting the count", RuntimeWarning, stacklevel=2)
    return Caustics(int(len(verts)), curve.ell[verts], curve.X[verts], crowded)


class Crossing(NamedTuple):
    point: PhasePoint
    u_a: float
    u_b: float
    ell_a: float
    shift: tuple[int, int]
    sin_angle: float


class Intersections(NamedTuple):
    crossings: list[Crossing]
    loop_areas: np.ndarray
    tangential: list[Crossing]


def _newton_crossings(A: Branch, B: Branch, ua, ub, sx, sp, tol=1e-13, maxit=30):
    """Vectorized Newton solve of A(ua) - B(ub) = shift; returns polished arrays."""
    ua = np.array(ua, dtype=float)
    ub = np.array(ub, dtype=float)
    active = np.ones(len(ua), dtype=bool)
    for _ in range(maxit):
        if not active.any():
            break
        k = np.nonzero(active)[0]
        xa, pa, dxa, dpa = A.evaluate_with_tangent(ua[k])
        xb, pb, dxb, dpb = B.evaluate_with_tangent(ub[k])
        rx = xa - xb - sx[k]
        rp = pa - pb - sp[k]
        det = -dxa * dpb + dxb * dpa
        ok = det != 0
        # solve [[dxa, -dxb], [dpa, -dpb]] d = -r
        da = np.where(ok, (-rx * -dpb - (-rp) * -dxb) / np.where(ok, det, 1.0), 0.0)
        db = np.where(ok, (dxa * -rp - dpa * -rx) / np.where(ok, det, 1.0), 0.0)
        ua[k] += da
        ub[k] += db
        active[k] = ok & (np.hypot(rx, rp) > tol)
    xa, pa, dxa, dpa = A.evaluate_with_tangent(ua)
    xb, pb, dxb, dpb = B.evaluate_with_tangent(ub)
    na = np.hypot(dxa, dpa)
    nb = np.hypot(dxb, dpb)
    sin_angle = np.abs(dxa * dpb - dpa * dxb) / np.where(na * nb > 0, na * nb, np.inf)
    resid = np.hypot(xa - xb - sx, pa - pb - sp)
    return ua, ub, xa, pa, sin_angle, resid


def raw_crossings(A: ManifoldCurve, B: ManifoldCurve):
    """Segment-level crossings on the torus (no polishing)."""
    seg = max(A.segment_lengths().max(), B.segment_lengths().max())
    ncell = int(max(1, min(4096, math.floor(1.0 / (seg * 1.0001)))))
    ax, ap = wrap(A.X[:-1]), wrap(A.P[:-1])
    bx, bp = wrap(B.X[:-1]), wrap(B.P[:-1])
    return kernels.polyline_crossings(
        np.ascontiguousarray(ax), np.ascontiguousarray(ap),
        np.ascontiguousarray(np.diff(A.X)), np.ascontiguousarray(np.diff(A.P)),
        np.ascontiguousarray(bx), np.ascontiguousarray(bp),
        np.ascontiguousarray(np.diff(B.X)), np.ascontiguousarray(np.diff(B.P)),
        ncell,
    )


@dataclass(frozen=True)
class CrossingSet:
    """Polished crossings as parallel arrays, ordered along the unstable curve."""

    u_a: np.ndarray
    u_b: np.ndarray
    X: np.ndarray
    P: np.ndarray
    ell_a: np.ndarray
    shift_x: np.ndarray
    shift_p: np.ndarray
    sin_angle: np.ndarray
    residual: np.ndarray

    def __len__(self) -> int:
        return len(self.u_a)

    def take(self, mask) -> "CrossingSet":
        return CrossingSet(*(getattr(self, f)[mask] for f in self.__dataclass_fields__))

    def as_list(self) -> list[Crossing]:
        return [
            Crossing(PhasePoint.from_lifted(float(self.X[k]), float(self.P[k])), float(self.u_a[k]), float(self.u_b[k]),
                     float(self.ell_a[k]), (int(self.shift_x[k]), int(self.shift_p[k])), float(self.sin_angle[k]))
            for k in range(len(self))
        ]


def _ell_of_u(curve: ManifoldCurve, u):
    if curve.u[-1] >= curve.u[0]:
        return np.interp(u, curve.u, curve.ell)
    return np.interp(-np.asarray(u), -curve.u, curve.ell)


def find_crossings(A: ManifoldCurve, B: ManifoldCurve, polish: bool = True) -> CrossingSet:
    """All segment crossings of two curves on the torus, Newton-polished and de-duplicated."""
    i, j, s, r, _, _ = raw_crossings(A, B)
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    s = np.asarray(s)
    r = np.asarray(r)
    ua = A.u[i] + s * (A.u[i + 1] - A.u[i])
    ub = B.u[j] + r * (B.u[j + 1] - B.u[j])
    Xa = A.X[i] + s * (A.X[i + 1] - A.X[i])
    Pa = A.P[i] + s * (A.P[i + 1] - A.P[i])
    Xb = B.X[j] + r * (B.X[j + 1] - B.X[j])
    Pb = B.P[j] + r * (B.P[j + 1] - B.P[j])
    # integer lattice offset between the two lifted points
    sx = np.rint(Xa - Xb)
    sp = np.rint(Pa - Pb)
    if polish and len(ua):
        ua, ub, X, P, sa, res = _newton_crossings(A.branch, B.branch, ua, ub, sx, sp)
    else:
        X, P = Xa, Pa
        dxa, dpa = A.X[i + 1] - A.X[i], A.P[i + 1] - A.P[i]
        dxb, dpb = B.X[j + 1] - B.X[j], B.P[j + 1] - B.P[j]
        sa = np.abs(dxa * dpb - dpa * dxb) / (np.hypot(dxa, dpa) * np.hypot(dxb, dpb))
        res = np.zeros(len(ua))
    ell = _ell_of_u(A, ua)
    order = np.lexsort((ub, ell))
    cs = CrossingSet(ua[order], ub[order], X[order], P[order], ell[order], sx[order].astype(np.int64),
                     sp[order].astype(np.int64), sa[order], res[order])
    if len(cs) > 1:
        # a crossing at a shared vertex can be reported by two segment pairs
        tol_a = 1e-9 * float(np.abs(A.u).max())
        tol_b = 1e-9 * float(np.abs(B.u).max())
        dup = (
            (np.abs(np.diff(cs.u_a)) < tol_a)
            & (np.abs(np.diff(cs.u_b)) < tol_b)
            & (np.diff(cs.shift_x) == 0)
            & (np.diff(cs.shift_p) == 0)
        )
        cs = cs.take(np.concatenate([[True], ~dup]))
    return cs


def heteroclinic_intersections(
    unstableA: ManifoldCurve,
    stableB: ManifoldCurve,
    angle_tol: float = 1e-3,
    polish: bool = True,
) -> Intersections:
    """Transversal crossings of an unstable and a stable curve, ordered along the unstable one.

    Each crossing is polished with Newton's method on the exact manifold
    parametrizations.  Loop areas are signed shoelace areas of the polygon
    made of the unstable curve between successive crossings and the stable
    curve back again (NaN when the two crossings sit on different lifts).
    """
    cs = find_crossings(unstableA, stableB, polish)
    transversal = cs.sin_angle >= angle_tol
    crossings = cs.take(transversal).as_list()
    tangential = cs.take(~transversal).as_list()
    areas = np.array([_loop_area(unstableA, stableB, c0, c1) for c0, c1 in zip(crossings[:-1], crossings[1:])])
    return Intersections(crossings, areas, tangential)


def _sub_polyline(curve: ManifoldCurve, u0: float, u1: float):
    """Lifted polyline of ``curve`` from parameter u0 to u1 (either order), exact endpoints."""
    inc = curve.u[-1] > curve.u[0]
    uu = curve.u if inc else curve.u[::-1]
    XX = curve.X if inc else curve.X[::-1]
    PP = curve.P if inc else curve.P[::-1]
    lo, hi = (u0, u1) if u0 <= u1 else (u1, u0)
    a = np.searchsorted(uu, lo, side="right")
    b = np.searchsorted(uu, hi, side="left")
    x0, p0 = curve.branch.evaluate(lo)
    x1, p1 = curve.branch.evaluate(hi)
    X = np.concatenate([x0, XX[a:b], x1])
    P = np.concatenate([p0, PP[a:b], p1])
    if u0 > u1:
        X, P = X[::-1], P[::-1]
    return X, P


def shoelace(X, P) -> float:
    return 0.5 * float(np.sum(X * np.roll(P, -1) - np.roll(X, -1) * P))


def _loop_area(A: ManifoldCurve, B: ManifoldCurve, c0: Crossing, c1: Crossing) -> float:
    if c0.shift != c1.shift:
        return float("nan")
    xa, pa = _sub_polyline(A, c0.u_a, c1.u_a)
    xb, pb = _sub_polyline(B, c1.u_b, c0.u_b)
    X = np.concatenate([xa, xb[1:-1] + c0.shift[0]])
    P = np.concatenate([pa, pb[1:-1] + c0.shift[1]])
    return shoelace(X, P)


def _locate(curve: ManifoldCurve, pt: PhasePoint, tol: float) -> float:
    """Primitive parameter of the curve point nearest ``pt`` (torus metric), polished."""
    d = np.hypot(torus_delta(curve.X - pt.x), torus_delta(curve.P - pt.p))
    k = int(np.argmin(d))
    lo, hi = max(k - 1, 0), min(k + 1, len(curve) - 1)
    best_u, best_d = curve.u[k], d[k]
    # project onto the two neighbouring segments, then polish on the exact curve
    for a in (lo, k):
        b = a + 1
        if b > hi:
            continue
        dx, dp = curve.X[b] - curve.X[a], curve.P[b] - curve.P[a]
        rx, rp = torus_delta(pt.x - curve.X[a]), torus_delta(pt.p - curve.P[a])
        L2 = dx * dx + dp * dp
        s = min(max((rx * dx + rp * dp) / L2, 0.0), 1.0) if L2 > 0 else 0.0
        dd = math.hypot(rx - s * dx, rp - s * dp)
        if dd < best_d:
            best_d, best_u = dd, curve.u[a] + s * (curve.u[b] - curve.u[a])
    u = best_u
    for _ in range(20):
        X, P, dX, dP = curve.branch.evaluate_with_tangent(u)
        rx, rp = torus_delta(pt.x - X[0]), torus_delta(pt.p - P[0])
        g = dX[0] * dX[0] + dP[0] * dP[0]
        du = (rx * dX[0] + rp * dP[0]) / g
        u += du
        if abs(du) * math.sqrt(g) < 1e-15:
            break
    X, P = curve.branch.evaluate(u)
    dist = math.hypot(torus_delta(pt.x - X[0]), torus_delta(pt.p - P[0]))
    if dist > tol:
        raise ValueError(f"point ({pt.x:.6g}, {pt.p:.6g}) is {dist:.3g} from the curve (tol {tol:.3g})")
    return float(u)


def area_action(curve: ManifoldCurve, ptA: PhasePoint, ptB: PhasePoint, tol: float = 1e-6) -> float:
    """Integral of p dx along the lifted curve from ``ptA`` to ``ptB`` (trapezoid rule)."""
    ua = _locate(curve, ptA, tol)
    ub = _locate(curve, ptB, tol)
    if ua == ub:
        return 0.0
    X, P = _sub_polyline(curve, ua, ub)
    return float(np.sum(0.5 * (P[1:] + P[:-1]) * np.diff(X)))


# ------------------------------------------------------ action differences


def perturbative_action_difference(orbit: Orbit, deltaK: float, reference: float = 0.0) -> float:
    """First-order action change (dK / 4 pi^2) sum_j [cos(2 pi x_j) - reference] over the kicks.

    Kicks are at x_0 .. x_{t-1}.  ``reference`` = cos(2 pi x_fp) measures the
    change relative to a fixed point's own orbit.
    """
    xs = np.asarray(orbit.X[:-1])
    return float(deltaK / (4.0 * math.pi**2) * np.sum(np.cos(TWO_PI * xs) - reference))


@dataclass(frozen=True)
class ActionDifferenceSeries:
    ell: np.ndarray
    dS_exact: np.ndarray
    dS_pert: np.ndarray
    dP: np.ndarray
    t: int
    deltaK: float
    n_excluded: int
    n_requested: int
    ambiguous_ell: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def relative_deviation(self) -> float:
        rng = float(self.dS_exact.max() - self.dS_exact.min())
        return float(np.max(np.abs(self.dS_exact - self.dS_pert)) / rng) if rng > 0 else 0.0

    def extrema(self) -> np.ndarray:
        """Indices of interior local extrema of dS_exact."""
        d = np.diff(self.dS_exact)
        s = np.sign(d)
        return np.nonzero(s[1:] * s[:-1] < 0)[0] + 1

    def loop_areas(self) -> np.ndarray:
        """Gaps between successive extrema of dS_exact."""
        e = self.extrema()
        return np.diff(self.dS_exact[e])


def _referenced_sums(branch: Branch, u):
    """(generating-function sum, cosine sum) relative to the anchor's own orbit."""
    dx, dp = branch.seed_deviation(u)
    xi = np.array(dx, dtype=float, ndmin=1)
    pi_ = np.array(dp, dtype=float, ndmin=1)
    K_eff = branch.K_eff
    gen, cs = kernels.action_sums(xi, pi_, K_eff, branch.steps)
    # cos(2 pi x) = cos(2 pi x_a) cos(2 pi xi) on the anchor's orbit
    c_a = math.cos(TWO_PI * branch.anchor.point.x)
    f_fp = K_eff / (4.0 * math.pi**2)
    return gen - branch.steps * f_fp, c_a * (cs - branch.steps), xi, pi_


def _crossings_at_x(curve: ManifoldCurve, Xq: float, near_P: float, tree: cKDTree, radius: float):
    """Curve segments crossing the vertical line X = Xq near P = near_P; returns (P, u) arrays."""
    idx = tree.query_ball_point([Xq, near_P], radius)
    if not idx:
        return np.zeros(0), np.zeros(0)
    idx = np.unique(np.concatenate([np.asarray(idx), np.asarray(idx) - 1]))
    idx = idx[(idx >= 0) & (idx < len(curve) - 1)]
    x0, x1 = curve.X[idx], curve.X[idx + 1]
    hit = ((x0 - Xq) * (x1 - Xq) <= 0) & (x0 != x1)
    idx, x0, x1 = idx[hit], x0[hit], x1[hit]
    s = (Xq - x0) / (x1 - x0)
    Pc = curve.P[idx] + s * (curve.P[idx + 1] - curve.P[idx])
    uc = curve.u[idx] + s * (curve.u[idx + 1] - curve.u[idx])
    return Pc, uc


def _polish_x(branch: Branch, u: float, Xq: float) -> tuple[float, float]:
    for _ in range(30):
        X, P, dX, _ = branch.evaluate_with_tangent(u)
        if dX[0] == 0:
            break
        du = (Xq - X[0]) / dX[0]
        u += du
        if abs(Xq - X[0]) < 1e-14:
            break
    X, P = branch.evaluate(u)
    return u, float(P[0])


def action_difference_series(
    params: MapParams,
    deltaK: float,
    anchor: FixedPoint,
    t: int,
    n_points: int,
    ds_max: float = DS_MAX,
    theta_max: float = THETA_MAX,
    local_length: float = LOCAL_LENGTH,
    branch: int = 1,
    ambiguity: float = 3.0,
) -> ActionDifferenceSeries:
    """Exact and first-order action differences of paired manifold orbits versus arclength.

    Samples are evenly spaced in arclength along the unperturbed t-iterated
    unstable manifold.  Each is paired with the perturbed-manifold orbit that
    ends at the same lifted x on the nearest branch (smallest momentum gap).
    A sample is excluded as ambiguous when a second branch of either curve
    crosses the same x within ``ambiguity`` times the chosen momentum gap,
    which happens only close to folds.  Actions are measured relative to the
    anchor's own orbit.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    curve0 = manifold_at(params, anchor, "unstable", t, ds_max, theta_max, local_length, branch)
    pparams = params.with_K(params.K + deltaK)
    anchor1 = fixed_point(pparams, anchor.point.x)
    curve1 = manifold_at(pparams, anchor1, "unstable", t, ds_max, theta_max, local_length, branch)
    b0, b1 = curve0.branch, curve1.branch

    ell_s = np.linspace(0.0, curve0.arclength, n_points + 2)[1:-1]
    u_s = np.interp(ell_s, curve0.ell, curve0.u)
    X_s, P_s = b0.evaluate(u_s)

    tree0 = cKDTree(np.column_stack([curve0.X, curve0.P]))
    tree1 = cKDTree(np.column_stack([curve1.X, curve1.P]))
    seg = max(curve0.segment_lengths().max(), curve1.segment_lengths().max())

    keep = np.zeros(n_points, dtype=bool)
    u_p = np.full(n_points, np.nan)
    P_p = np.full(n_points, np.nan)
    for k in range(n_points):
        Xq, Pq = X_s[k], P_s[k]
        radius = 4 * seg + 1e-3
        while True:
            Pc, uc = _crossings_at_x(curve1, Xq, Pq, tree1, radius)
            if len(Pc):
                gap = np.abs(Pc - Pq)
                best = int(np.argmin(gap))
                if gap[best] + seg < radius / ambiguity or radius > 4.0:
                    break
            if radius > 4.0:
                break
            radius *= 2.0
        if not len(Pc):
            continue
        g1 = gap[best]
        others = np.delete(gap, best)
        ok = not np.any(others < ambiguity * max(g1, 1e-12))
        # a second branch of the unperturbed curve at the same x is also a fold sign
        P0c, _ = _crossings_at_x(curve0, Xq, Pq, tree0, ambiguity * g1 + 2 * seg)
        if np.sum(np.abs(P0c - Pq) < ambiguity * max(g1, 1e-12)) > 1:
            ok = False
        if not ok:
            continue
        u1, P1 = _polish_x(b1, float(uc[best]), Xq)
        keep[k] = True
        u_p[k] = u1
        P_p[k] = P1

    S0, C0, _, _ = _referenced_sums(b0, u_s[keep])
    S1, _, Xe, _ = _referenced_sums(b1, u_p[keep])
    dS_exact = S1 - S0
    dS_pert = deltaK / (4.0 * math.pi**2) * C0
    n_excl = int((~keep).sum())
    if n_excl:
        logger.info("excluded %d of %d samples as ambiguous pairings", n_excl, n_points)
    return ActionDifferenceSeries(
        ell_s[keep], dS_exact, dS_pert, P_p[keep] - P_s[keep], int(t), float(deltaK), n_excl, n_points, ell_s[~keep]
    )


def sample_uniform_arclength(
    params: MapParams,
    anchor: FixedPoint,
    t: int,
    n: int,
    local_length: float = LOCAL_LENGTH,
    n_candidates: int = 1_000_000,
    branch: int = 1,
    seed: int = 0,
) -> np.ndarray:
    """Primitive parameters drawn uniformly in arclength along the t-iterated unstable manifold.

    Candidates uniform in u are resampled with weight |d point / du|, the
    exact pointwise arclength density.  A grid-based inverse CDF would need
    cells finer than the fold spacing, which shrinks geometrically with t.
    """
    if n < 1 or n_candidates < n:
        raise ValueError("need 1 <= n <= n_candidates")
    rng = np.random.default_rng(seed)
    br = Branch(params, anchor, "unstable", int(t), float(local_length))
    if branch == 0:
        u = local_length * (2.0 * rng.random(n_candidates) - 1.0)
    else:
        u = branch * local_length * rng.random(n_candidates)
    _, _, dX, dP = br.evaluate_with_tangent(u)
    w = np.hypot(dX, dP)
    cdf = np.cumsum(w)
    # systematic resampling
    q = (rng.random() + np.arange(n)) / n * cdf[-1]
    return u[np.minimum(np.searchsorted(cdf, q), n_candidates - 1)]


@dataclass(frozen=True)
class ActionHistogram:
    t: int
    samples: np.ndarray
    bin_centers: np.ndarray
    counts: np.ndarray
    gaussian_fit: np.ndarray
    mean: float
    variance: float
    normality_pvalue: float


@dataclass(frozen=True)
class DiffusionReport:
    histogram: ActionHistogram
    ts: np.ndarray
    variances: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    predicted_slope: float
    convention_factor: float


def action_difference_histogram(
    params: MapParams,
    deltaK: float,
    anchor: FixedPoint,
    t: int,
    n_points: int,
    bins: int = 60,
    local_length: float = LOCAL_LENGTH,
    n_candidates: int = 1_000_000,
    seed: int = 0,
) -> ActionHistogram:
    """Histogram of first-order action changes along the t-iterated manifold, with a Gaussian fit."""
    if n_points < 10:
        raise ValueError("need at least 10 samples")
    u = sample_uniform_arclength(params, anchor, t, n_points, local_length, max(n_candidates, n_points), seed=seed)
    br = Branch(params, anchor, "unstable", int(t), float(local_length))
    _, C, _, _ = _referenced_sums(br, u)
    dS = deltaK / (4.0 * math.pi**2) * C
    mean, var = float(dS.mean()), float(dS.var(ddof=1))
    counts, edges = np.histogram(dS, bins=bins)
    centers = 0.5 * (edges[1:] + edges[:-1])
    width = edges[1] - edges[0]
    fit = n_points * width * stats.norm.pdf(centers, mean, math.sqrt(var))
    pval = float(stats.normaltest(dS).pvalue)
    return ActionHistogram(int(t), dS, centers, counts, fit, mean, var, pval)


def action_diffusion_report(
    params: MapParams,
    deltaK: float,
    anchor: FixedPoint,
    t: int,
    n_points: int,
    ts: Sequence[int] = tuple(range(4, 13)),
    **kw,
) -> DiffusionReport:
    """Histogram at ``t`` plus a linear fit of the action-change variance over ``ts``.

    The predicted slope is 2 dK^2 K(E): the variance of a time integral of a
    correlated signal grows at twice its correlation-function integral.
    """
    hist = action_difference_histogram(params, deltaK, anchor, t, n_points, **kw)
    ts = np.asarray(ts)
    var = np.array([action_difference_histogram(params, deltaK, anchor, int(s), n_points, **kw).variance for s in ts])
    fit = stats.linregress(ts, var)
    pred = 2.0 * deltaK**2 * action_diffusion_constant(params.K)
    return DiffusionReport(hist, ts, var, float(fit.slope), float(fit.intercept), float(fit.rvalue**2), pred, float(fit.slope / pred))


def orbit_stability(orbit: Orbit) -> TangentFrame:
    from .core_map import orbit_stability as _os

    return _os(orbit)
