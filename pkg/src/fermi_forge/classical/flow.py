"""Continuous-time Hamiltonian flow of the modulated mirror."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numba
import numpy as np

from ..core import Ensemble, PhasePoint, ScaledParams
from ..errors import NumericalContractError, ParameterError, StepSizeError
from . import _kernels as K

__all__ = [
    "force",
    "Trajectory",
    "integrate_trajectory",
    "max_stable_dt",
    "DiffusionRecord",
    "EnsembleRun",
    "propagate_ensemble",
    "lyapunov_exponent",
    "LyapunovResult",
    "survival_probability",
    "SurvivalResult",
    "unperturbed_period",
]

STIFFNESS = 0.1
DEFAULT_ETA = 0.05


def force(z, t, params: ScaledParams, return_flag: bool = False):
    """-dH/dz = -1 + kappa V0 exp(-kappa (z - lam sin t)), exponent clamped at 700."""
    e = -params.kappa * (np.asarray(z, dtype=float) - params.lam * np.sin(t))
    clamped = e > K.EXP_CLAMP
    f = -1.0 + params.kappa * params.v0 * np.exp(np.minimum(e, K.EXP_CLAMP))
    if np.ndim(f) == 0:
        f = float(f)
        clamped = bool(clamped)
    if return_flag:
        return f, clamped
    return f


def _set_threads(threads):
    if threads is None:
        threads = int(os.environ.get("FERMI_FORGE_THREADS", "0") or 0)
    if threads and threads > 0:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def max_stable_dt(energy: float, params: ScaledParams) -> float:
    """Largest dt with dt <= 0.1/(kappa*F_max) for orbits up to ``energy``.

    F_max is estimated from the deepest possible wall penetration, where
    the wall potential absorbs the full energy.
    """
    reach = max(energy, params.v0 * math.exp(params.kappa * params.lam), 1.0)
    f_max = 1.0 + params.kappa * (reach + 2.0 * params.lam)
    return STIFFNESS / (params.kappa * f_max)


@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    clamped: bool = False

    def points(self):
        return [PhasePoint(float(a), float(b), float(c)) for c, a, b in zip(self.t, self.z, self.p)]

    def rows(self):
        return np.column_stack([self.t, self.z, self.p, self.energy])


def integrate_trajectory(start: PhasePoint, t_final: float, dt: float, params: ScaledParams, stride: int = 1) -> Trajectory:
    """Fixed-step RK4 integration of a single orbit.

    Refuses (``StepSizeError``) when ``dt`` does not resolve the drive
    period or the wall stiffness, before and during the run.
    """
    if dt <= 0 or t_final < 0:
        raise ParameterError("dt must be > 0 and t_final >= 0")
    e0 = float(params.hamiltonian(start.z, start.p, start.t))
    limit = min(max_stable_dt(e0, params), 2.0 * math.pi / 64.0)
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt={dt} exceeds the stability bound {limit:.4g}", suggested_dt=limit)
    nsteps = int(round(t_final / dt))
    if abs(nsteps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ParameterError("t_final must be a multiple of dt")
    stride = max(1, int(stride))
    ts, zs, ps, status, k = K.fixed_step_path(
        start.z, start.p, start.t, dt, nsteps, stride, params.lam, params.kappa, params.v0, STIFFNESS
    )
    if status == K.STEP_VIOLATION:
        suggested = 0.5 * dt
        raise StepSizeError(f"wall stiffness exceeded the step bound at dt={dt}", suggested_dt=suggested)
    if status == K.NONFINITE:
        raise NumericalContractError("trajectory became non-finite")
    ts, zs, ps = ts[:k], zs[:k], ps[:k]
    return Trajectory(ts, zs, ps, params.hamiltonian(zs, ps, ts), clamped=status == K.CLAMPED)


@dataclass(frozen=True)
class DiffusionRecord:
    j: int
    t: float
    mean_z: float
    mean_p: float
    var_z: float
    var_p: float

    @property
    def dz(self) -> float:
        return math.sqrt(self.var_z)

    @property
    def dp(self) -> float:
        return math.sqrt(self.var_p)


def _moments(x, w):
    # fsum is exactly rounded, hence independent of evaluation order
    m = math.fsum(w * x)
    v = math.fsum(w * (x - m) ** 2)
    return m, max(v, 0.0)


@dataclass
class EnsembleRun:
    final: Ensemble
    records: list[DiffusionRecord]
    failed: np.ndarray
    clamped: np.ndarray
    Z: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)

    @property
    def n_failed(self) -> int:
        return int(self.failed.sum())

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def var_p(self) -> np.ndarray:
        return np.array([r.var_p for r in self.records])

    @property
    def var_z(self) -> np.ndarray:
        return np.array([r.var_z for r in self.records])

    def rows(self):
        return np.array([[r.t, r.mean_z, r.mean_p, r.var_z, r.var_p] for r in self.records])


def propagate_ensemble(
    e: Ensemble,
    t_final: float,
    dt: float,
    params: ScaledParams,
    sample_every: float | None = None,
    eta: float = DEFAULT_ETA,
    threads: int | None = None,
) -> EnsembleRun:
    """Advance every point independently; record moments at a fixed stride.

    ``dt`` is the largest RK4 step; near the wall steps shrink to
    ``eta/(kappa|p| + sqrt(kappa F_wall))``.  Points that overflow or go
    non-finite are excluded from the moments and counted in ``failed``.
    """
    if dt <= 0 or t_final <= 0:
        raise ParameterError("dt and t_final must be positive")
    if dt > 2.0 * math.pi / 64.0 * 1.0000001:
        raise StepSizeError("dt must resolve the drive period (dt <= 2pi/64)", suggested_dt=2.0 * math.pi / 64.0)
    if sample_every is None:
        sample_every = t_final / 100.0
    n_samp = int(round(t_final / sample_every))
    times = e.t + sample_every * np.arange(1, n_samp + 1)
    times[-1] = e.t + t_final
    _set_threads(threads)
    Z, P, status = K.ensemble_samples(
        np.ascontiguousarray(e.z), np.ascontiguousarray(e.p), float(e.t), times, dt, eta,
        params.lam, params.kappa, params.v0,
    )
    failed = status == K.NONFINITE
    clamped = status == K.CLAMPED
    ok = ~failed
    w = e.w[ok]
    w = w / math.fsum(w)
    records = []
    for j, t in enumerate(np.concatenate([[e.t], times])):
        zj = e.z[ok] if j == 0 else Z[j - 1, ok]
        pj = e.p[ok] if j == 0 else P[j - 1, ok]
        mz, vz = _moments(zj, w)
        mp, vp = _moments(pj, w)
        records.append(DiffusionRecord(j, float(t), mz, mp, vz, vp))
    final = Ensemble(z=Z[-1, ok], p=P[-1, ok], t=float(times[-1]), weights=w if e.weights is not None else None, seed=e.seed)
    return EnsembleRun(final, records, failed, clamped, Z, P)


def unperturbed_period(z0: float, p0: float, params: ScaledParams, dt: float = 1e-3) -> float:
    """Period of the lambda=0 orbit through (z0, p0), by quadrature.

    T = 2 * integral dz / p(z) between the wall and upper turning points,
    with the integrable endpoint singularities removed by the substitution
    z = z_turn -/+ s^2.
    """
    from scipy.integrate import quad
    from scipy.optimize import brentq

    sp = params.with_lambda(0.0)
    energy = float(sp.hamiltonian(z0, p0, 0.0))

    def V(z):
        return z + sp.v0 * math.exp(-sp.kappa * z)

    # minimum of V
    if sp.kappa * sp.v0 > 1.0:
        zm = math.log(sp.kappa * sp.v0) / sp.kappa
    else:
        zm = -50.0 / sp.kappa
    if energy <= V(zm):
        raise ParameterError("orbit energy lies below the potential minimum")
    z_top = brentq(lambda z: V(z) - energy, zm, energy + 1.0)
    lo = zm - 1.0
    while V(lo) < energy:
        lo -= 1.0 + abs(lo)
    z_bot = brentq(lambda z: V(z) - energy, lo, zm)

    def speed(z):
        return math.sqrt(max(2.0 * (energy - V(z)), 0.0))

    # split at the minimum; substitute z = z_turn +/- s^2 near each turning point
    s_top = math.sqrt(z_top - zm)
    s_bot = math.sqrt(zm - z_bot)
    up, _ = quad(lambda s: 2.0 * s / max(speed(z_top - s * s), 1e-300), 0.0, s_top, limit=200, epsabs=1e-12, epsrel=1e-12)
    dn, _ = quad(lambda s: 2.0 * s / max(speed(z_bot + s * s), 1e-300), 0.0, s_bot, limit=200, epsabs=1e-12, epsrel=1e-12)
    return 2.0 * (up + dn)


@dataclass
class LyapunovResult:
    L: float
    series: list[tuple[float, float]]
    n_renorm: int


def lyapunov_exponent(
    start: PhasePoint,
    t_total: float,
    renorm_interval: float,
    params: ScaledParams,
    d0: float = 1e-8,
    dt: float = 0.1,
    eta: float = DEFAULT_ETA,
) -> LyapunovResult:
    """Benettin two-trajectory estimate of lim (1/t) log(d(t)/d(0)).

    The pair is checked every ``renorm_interval`` and renormalised to ``d0``
    once the separation has changed by a factor of 100 either way.
    """
    if not (0 < renorm_interval < t_total):
        raise ParameterError("need 0 < renorm_interval < t_total")
    za, pa = start.z, start.p
    zb, pb = start.z + d0, start.p
    t = start.t
    n = int(math.ceil(t_total / renorm_interval))
    log_sum = 0.0
    series = []
    n_renorm = 0
    for i in range(1, n + 1):
        t1 = start.t + min(i * renorm_interval, t_total)
        za, pa, sa = K.advance(za, pa, t, t1, dt, eta, params.lam, params.kappa, params.v0)
        zb, pb, sb = K.advance(zb, pb, t, t1, dt, eta, params.lam, params.kappa, params.v0)
        t = t1
        if sa == K.NONFINITE or sb == K.NONFINITE:
            raise NumericalContractError("trajectory became non-finite")
        d = math.hypot(zb - za, pb - pa)
        if d == 0.0:
            raise NumericalContractError("separation underflow; shorten renorm_interval")
        ratio = d / d0
        if ratio > 1e6:
            raise NumericalContractError(
                f"separation grew by {ratio:.3g} within one interval; shorten renorm_interval"
            )
        if ratio >= 100.0 or ratio <= 0.01 or i == n:
            log_sum += math.log(ratio)
            zb = za + (zb - za) * d0 / d
            pb = pa + (pb - pa) * d0 / d
            n_renorm += 1
            running = log_sum
        else:
            running = log_sum + math.log(ratio)
        series.append((t - start.t, running / (t - start.t)))
    return LyapunovResult(log_sum / (t - start.t), series, n_renorm)


@dataclass
class SurvivalResult:
    t: np.ndarray
    P: np.ndarray
    exit_times: np.ndarray

    def tail_slope(self, t_min: float | None = None) -> float:
        """Log-log slope of P(t) over the tail (reported, not asserted)."""
        if t_min is None:
            t_min = self.t[len(self.t) // 10]
        s = (self.t >= t_min) & (self.P > 0)
        if s.sum() < 3:
            return float("nan")
        return float(np.polyfit(np.log(self.t[s]), np.log(self.P[s]), 1)[0])


def survival_probability(
    e: Ensemble,
    region: tuple[float, float, float, float],
    t_final: float,
    dt: float,
    params: ScaledParams,
    n_samples: int = 200,
    eta: float = DEFAULT_ETA,
    threads: int | None = None,
) -> SurvivalResult:
    """Weighted fraction of orbits that never left ``region`` = (z_lo, z_hi, p_lo, p_hi)."""
    zlo, zhi, plo, phi = (float(v) for v in region)
    _set_threads(threads)
    exits = K.survival_times(
        np.ascontiguousarray(e.z), np.ascontiguousarray(e.p), float(e.t), float(e.t + t_final), dt, eta,
        params.lam, params.kappa, params.v0, zlo, zhi, plo, phi,
    )
    ts = e.t + t_final * np.arange(1, n_samples + 1) / n_samples
    w = e.w
    P = np.array([math.fsum(w[exits > t]) for t in ts])
    return SurvivalResult(ts, P, exits)
