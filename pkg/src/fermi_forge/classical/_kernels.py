"""Compiled RK4 kernels for the modulated-mirror flow.

All kernels are pure per trajectory: no shared mutable state between
points, so results do not depend on the number of threads.
"""

import numba as nb
import numpy as np

EXP_CLAMP = 700.0

# status codes written per trajectory
OK = 0
CLAMPED = 1
NONFINITE = 2
STEP_VIOLATION = 3


@nb.njit(cache=True, inline="always")
def wall_force(z, t, lam, kappa, v0):
    """kappa*V0*exp(-kappa(z - lam sin t)) and whether the exponent was clamped."""
    e = -kappa * (z - lam * np.sin(t))
    clamped = False
    if e > EXP_CLAMP:
        e = EXP_CLAMP
        clamped = True
    return kappa * v0 * np.exp(e), clamped


@nb.njit(cache=True)
def rk4_step(z, p, t, h, lam, kappa, v0):
    f1, c1 = wall_force(z, t, lam, kappa, v0)
    k1z = p
    k1p = f1 - 1.0
    f2, c2 = wall_force(z + 0.5 * h * k1z, t + 0.5 * h, lam, kappa, v0)
    k2z = p + 0.5 * h * k1p
    k2p = f2 - 1.0
    f3, c3 = wall_force(z + 0.5 * h * k2z, t + 0.5 * h, lam, kappa, v0)
    k3z = p + 0.5 * h * k2p
    k3p = f3 - 1.0
    f4, c4 = wall_force(z + h * k3z, t + h, lam, kappa, v0)
    k4z = p + h * k3p
    k4p = f4 - 1.0
    zn = z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    pn = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    return zn, pn, c1 or c2 or c3 or c4


@nb.njit(cache=True)
def fixed_step_path(z, p, t0, dt, nsteps, stride, lam, kappa, v0, stiffness):
    """Fixed-step RK4; samples every ``stride`` steps (including step 0).

    Stops with STEP_VIOLATION when dt*kappa*|F| exceeds ``stiffness``.
    Returns (t, z, p, status, n_ok_samples).
    """
    nsamp = nsteps // stride + 1
    ts = np.empty(nsamp)
    zs = np.empty(nsamp)
    ps = np.empty(nsamp)
    ts[0] = t0
    zs[0] = z
    ps[0] = p
    status = OK
    k = 1
    t = t0
    for i in range(1, nsteps + 1):
        fw, clamped = wall_force(z, t, lam, kappa, v0)
        if dt * kappa * abs(fw - 1.0) > stiffness:
            status = STEP_VIOLATION
            break
        z, p, c = rk4_step(z, p, t, dt, lam, kappa, v0)
        t = t0 + i * dt
        if c or clamped:
            status = CLAMPED
        if not (np.isfinite(z) and np.isfinite(p)):
            status = NONFINITE
            break
        if i % stride == 0:
            ts[k] = t
            zs[k] = z
            ps[k] = p
            k += 1
    return ts, zs, ps, status, k


@nb.njit(cache=True)
def local_step(z, p, t, dt, eta, lam, kappa, v0):
    fw, _ = wall_force(z, t, lam, kappa, v0)
    rate = kappa * abs(p) + np.sqrt(kappa * fw)
    h = dt
    if rate > 0.0 and eta / rate < h:
        h = eta / rate
    return h


@nb.njit(cache=True)
def advance(z, p, t0, t1, dt, eta, lam, kappa, v0):
    """RK4 from t0 to t1 with steps refined near the wall.

    The step is min(dt, eta / (kappa|p| + sqrt(kappa F_wall))): the first
    term bounds the fraction of a decay length crossed per step, the
    second resolves the local wall oscillation frequency.
    """
    t = t0
    status = OK
    while t1 - t > 1e-12:
        h = local_step(z, p, t, dt, eta, lam, kappa, v0)
        if h > t1 - t:
            h = t1 - t
        z, p, c = rk4_step(z, p, t, h, lam, kappa, v0)
        t += h
        if c:
            status = CLAMPED
        if not (np.isfinite(z) and np.isfinite(p)):
            return z, p, NONFINITE
    return z, p, status


@nb.njit(cache=True, parallel=True)
def ensemble_samples(z0, p0, t0, times, dt, eta, lam, kappa, v0):
    """Advance each point through ``times``; returns (Z, P, status)."""
    n = z0.size
    m = times.size
    Z = np.empty((m, n))
    P = np.empty((m, n))
    status = np.zeros(n, dtype=np.int64)
    for i in nb.prange(n):
        z = z0[i]
        p = p0[i]
        t = t0
        st = OK
        for j in range(m):
            if st == NONFINITE:
                Z[j, i] = np.nan
                P[j, i] = np.nan
                continue
            z, p, s = advance(z, p, t, times[j], dt, eta, lam, kappa, v0)
            if s > st:
                st = s
            t = times[j]
            Z[j, i] = z
            P[j, i] = p
        status[i] = st
    return Z, P, status


@nb.njit(cache=True)
def _inside(z, p, zlo, zhi, plo, phi):
    return zlo <= z <= zhi and plo <= p <= phi


@nb.njit(cache=True, parallel=True)
def survival_times(z0, p0, t0, t_final, dt, eta, lam, kappa, v0, zlo, zhi, plo, phi):
    """First exit time from the rectangle per point (inf if never)."""
    n = z0.size
    out = np.full(n, np.inf)
    for i in nb.prange(n):
        z = z0[i]
        p = p0[i]
        t = t0
        if not _inside(z, p, zlo, zhi, plo, phi):
            out[i] = t0
            continue
        while t_final - t > 1e-12:
            h = local_step(z, p, t, dt, eta, lam, kappa, v0)
            if h > t_final - t:
                h = t_final - t
            z, p, _ = rk4_step(z, p, t, h, lam, kappa, v0)
            t += h
            if not _inside(z, p, zlo, zhi, plo, phi):
                out[i] = t
                break
    return out
