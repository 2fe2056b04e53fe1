"""Discrete-time descriptions: hard-wall bounce map and standard map.

Conventions
-----------
A :class:`BounceState` holds the *speed* ``p > 0`` just before a bounce
and the mirror phase ``phi`` at that bounce.  The mirror surface sits at
``lam*sin(t)`` and moves with velocity ``lam*cos(t)``, so an elastic bounce
launches the particle upward with ``u = p + 2*lam*cos(phi)``.  After a
flight time ``dt`` the particle returns with speed ``dt - u``.  In terms
of the signed pre-bounce velocity ``v = -p`` this is exactly
``v' = -v - dt + 2 lam cos(phi)``.

The standard-map momentum is ``wp = 2*p`` (that is ``-2v``) with kick
strength ``K = 4*lam``; both maps then agree in the large-amplitude limit
where ``dt ~ 2u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, TrappedAtWallError

TWO_PI = 2.0 * math.pi
K_CR = 0.9716
"""Greene's critical kick strength for the last golden-mean KAM torus."""

LAMBDA_L = K_CR / 4.0


@dataclass(frozen=True)
class BounceState:
    p: float
    phi: float
    i: int = 0

    def __post_init__(self):
        if not math.isfinite(self.p):
            raise ParameterError("bounce momentum must be finite")
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)


@dataclass(frozen=True)
class MapParams:
    K: float
    lam: float | None = None

    def __post_init__(self):
        if self.K < 0:
            raise ParameterError("K must be >= 0")
        if self.lam is not None and not math.isclose(self.K, 4.0 * self.lam, rel_tol=1e-12, abs_tol=1e-15):
            raise ParameterError("K must equal 4*lambda")

    @classmethod
    def from_lambda(cls, lam: float) -> "MapParams":
        return cls(K=4.0 * lam, lam=lam)


def _flight_residual(dt, u, phi, lam):
    return u * dt - 0.5 * dt * dt - lam * (np.sin(phi + dt) - np.sin(phi))


def flight_time(state, lam: float, tol: float = 1e-12) -> float:
    """Smallest positive dt with u dt - dt^2/2 = lam (sin(phi+dt) - sin(phi)).

    ``state`` is a :class:`BounceState` (or ``(u, phi)`` pair) whose ``p``
    is the upward launch speed ``u``.  The first sign change is bracketed
    by marching in steps of ``min(u, 0.1)`` and refined by bisection.
    """
    if isinstance(state, BounceState):
        u, phi = state.p, state.phi
    else:
        u, phi = state
    u = float(u)
    phi = float(phi)
    if u <= 0:
        raise TrappedAtWallError(f"launch speed must be positive, got {u}")
    if lam == 0.0:
        return 2.0 * u
    step = min(u, 0.1)
    horizon = 10.0 * 2.0 * u + TWO_PI
    n = int(math.ceil(horizon / step)) + 1
    grid = step * np.arange(1, n + 1)
    f = _flight_residual(grid, u, phi, lam)
    # the particle must first rise above the mirror
    eps = 1e-9 * step
    if _flight_residual(eps, u, phi, lam) <= 0.0:
        raise TrappedAtWallError(f"particle with u={u} cannot leave the mirror at phase {phi}")
    neg = np.flatnonzero(f <= 0.0)
    if neg.size == 0:
        raise TrappedAtWallError("no flight-time root within 10 ballistic periods")
    k = neg[0]
    lo = eps if k == 0 else grid[k - 1]
    hi = grid[k]
    flo = _flight_residual(lo, u, phi, lam)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = _flight_residual(mid, u, phi, lam)
        if fm == 0.0:
            return mid
        if (fm > 0.0) == (flo > 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bounce_map_step(state: BounceState, lam: float) -> BounceState:
    u = state.p + 2.0 * lam * math.cos(state.phi)
    dt = flight_time((u, state.phi), lam)
    return BounceState(p=dt - u, phi=state.phi + dt, i=state.i + 1)


def bounce_map_raw(p: float, phi: float, lam: float) -> tuple[float, float]:
    """Unwrapped (p', phi') for finite differencing."""
    u = p + 2.0 * lam * math.cos(phi)
    dt = flight_time((u, phi), lam)
    return dt - u, phi + dt


def bounce_map_energy(w: float, phi: float, lam: float) -> tuple[float, float]:
    """Bounce map in canonical section coordinates (W, phi).

    W = (p + lam cos(phi))^2 / 2 is the kinetic energy of the impact
    relative to the mirror.  The impact map preserves the flux measure
    (p + lam cos phi) dp dphi, so it is area preserving in (W, phi) but
    not in (p, phi), where its Jacobian is the ratio of relative impact
    speeds.
    """
    p = math.sqrt(2.0 * w) - lam * math.cos(phi)
    p1, phi1 = bounce_map_raw(p, phi, lam)
    return 0.5 * (p1 + lam * math.cos(phi1)) ** 2, phi1


def standard_map_step(wp, phi, K):
    """wp' = wp + K cos(phi), phi' = phi + wp' (phi wrapped to [0, 2pi))."""
    wp_new = wp + K * np.cos(phi)
    return wp_new, np.mod(phi + wp_new, TWO_PI)


def standard_map_raw(wp, phi, K):
    wp_new = wp + K * np.cos(phi)
    return wp_new, phi + wp_new


def iterate_standard_map(wp, phi, K, n_steps):
    """Iterate an ensemble; returns arrays of shape (n_steps+1, n) with unwrapped wp."""
    wp = np.array(wp, dtype=float, ndmin=1)
    phi = np.array(phi, dtype=float, ndmin=1)
    W = np.empty((n_steps + 1, wp.size))
    F = np.empty_like(W)
    W[0], F[0] = wp, np.mod(phi, TWO_PI)
    for j in range(1, n_steps + 1):
        wp, phi = standard_map_step(wp, phi, K)
        W[j], F[j] = wp, phi
    return W, F


def _angle_diff(a, b):
    return (a - b + math.pi) % TWO_PI - math.pi


def jacobian_determinant(map_step, point, h: float = 1e-5, angular=(1,)) -> float:
    """Central-difference Jacobian determinant of a 2-d one-step map.

    ``map_step(x, y) -> (x', y')``.  Output components listed in
    ``angular`` are differenced modulo 2*pi.
    """
    if h <= 0:
        raise ParameterError("finite-difference step must be positive")
    x, y = (float(c) for c in point)
    cols = []
    for dx, dy in ((h, 0.0), (0.0, h)):
        a = map_step(x + dx, y + dy)
        b = map_step(x - dx, y - dy)
        col = []
        for k in range(2):
            d = _angle_diff(float(a[k]), float(b[k])) if k in angular else float(a[k]) - float(b[k])
            col.append(d / (2.0 * h))
        cols.append(col)
    (j11, j21), (j12, j22) = cols
    return j11 * j22 - j12 * j21


def map_lyapunov(K: float, wp0: float, phi0: float, n_steps: int, d0: float = 1e-8):
    """Benettin estimate for the standard map; returns (L, convergence series).

    The companion orbit is renormalised back to distance ``d0`` whenever
    the separation grows or shrinks by a factor of 100 (and at the end).
    """
    a = np.array([wp0, phi0], dtype=float)
    b = a + np.array([d0, 0.0])
    log_sum = 0.0
    series = []
    for j in range(1, n_steps + 1):
        a = np.array(standard_map_raw(a[0], a[1], K))
        b = np.array(standard_map_raw(b[0], b[1], K))
        d = math.hypot(b[0] - a[0], _angle_diff(b[1], a[1]))
        if d == 0.0:
            raise ParameterError("separation underflow; increase d0")
        ratio = d / d0
        if ratio >= 100.0 or ratio <= 0.01 or j == n_steps:
            log_sum += math.log(ratio)
            b = a + (b - a) * (d0 / d)
            series.append((j, log_sum / j))
    return log_sum / n_steps, series


@dataclass(frozen=True)
class AcceleratingWindow:
    s: float
    lo: float
    hi: float
    lambda_m: float

    def contains(self, lam: float) -> bool:
        return self.lo <= lam < self.hi


def accelerating_windows(s_max: float) -> list[AcceleratingWindow]:
    """Windows s*pi <= lam < sqrt(1+(s*pi)^2) for s = 1/2, 1, 3/2, ..."""
    if s_max < 0.5:
        raise ParameterError("s_max must be at least 1/2")
    out = []
    k = 1
    while k / 2.0 <= s_max + 1e-12:
        s = k / 2.0
        lo = s * math.pi
        hi = math.sqrt(1.0 + lo * lo)
        out.append(AcceleratingWindow(s, lo, hi, 0.5 * (lo + hi)))
        k += 1
    return out


def in_accelerating_window(lam: float, s_max: float = 10.0) -> AcceleratingWindow | None:
    for w in accelerating_windows(s_max):
        if w.contains(lam):
            return w
    return None
