"""Split-step Fourier propagation of

    i kbar dpsi/dt = [p^2/2 + z + V0 exp(-kappa (z - lam sin t))] psi

with localisation diagnostics, autocorrelation and space-time carpets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .classical.maps import K_CR
from .core import GridSpec, ScaledParams, WavefunctionState
from .errors import (
    BoundaryContaminationError,
    GridMismatchError,
    NumericalContractError,
    ParameterError,
    StepSizeError,
)

__all__ = [
    "PropagationPlan",
    "ObservableSeries",
    "CarpetField",
    "EvolutionResult",
    "Propagator",
    "split_step",
    "evolve",
    "momentum_distribution",
    "position_distribution",
    "LocalizationWindow",
    "localization_window",
    "BreakTime",
    "quantum_break_time",
    "LocalizationReport",
    "fit_localization",
    "autocorrelation",
    "carpet",
    "excess_kurtosis",
]

EXP_CLAMP = 700.0
MAX_DT = 2.0 * math.pi / 64.0
BOUNDARY_POLICIES = ("hard-cap", "absorber-off")


@dataclass(frozen=True)
class PropagationPlan:
    """Time stepping and sampling.

    ``boundary``: with ``"hard-cap"`` a run aborts as soon as more than
    ``edge_tol`` probability sits within ``edge_points`` grid points of an
    edge; ``"absorber-off"`` only records the edge probability.  No
    absorbing layer is ever applied.
    """

    dt: float
    t_final: float
    stride: int = 1
    boundary: str = "hard-cap"
    carpet_stride: int | None = None
    carpet_bin: int = 1
    edge_points: int = 4
    edge_tol: float = 1e-6
    workers: int | None = None

    def __post_init__(self):
        if not (0 < self.dt <= MAX_DT * (1 + 1e-12)):
            raise StepSizeError(f"dt must lie in (0, 2pi/64], got {self.dt}", suggested_dt=MAX_DT)
        if self.stride < 1:
            raise ParameterError("stride must be >= 1")
        if self.boundary not in BOUNDARY_POLICIES:
            raise ParameterError(f"boundary policy must be one of {BOUNDARY_POLICIES}")
        n = self.t_final / self.dt
        if self.t_final <= 0 or abs(n - round(n)) > 1e-6:
            raise ParameterError("t_final must be a positive multiple of dt")
        if self.carpet_stride is not None and self.carpet_stride < 1:
            raise ParameterError("carpet_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def sample_dt(self) -> float:
        return self.dt * self.stride


@dataclass
class ObservableSeries:
    t: np.ndarray
    norm: np.ndarray
    mean_z: np.ndarray
    mean_p: np.ndarray
    var_z: np.ndarray
    var_p: np.ndarray
    C2: np.ndarray
    edge_probability: np.ndarray

    def rows(self):
        return np.column_stack([self.t, self.norm, self.mean_z, self.mean_p, self.var_z, self.var_p, self.C2])

    def at(self, t: float) -> int:
        """Index of the sample closest to ``t``."""
        return int(np.argmin(np.abs(self.t - t)))


@dataclass
class CarpetField:
    """|psi(z, t)|^2 rows (one per sample time) on a possibly coarsened z axis."""

    density: np.ndarray
    t: np.ndarray
    z: np.ndarray
    dz: float
    norms: np.ndarray

    def row_integrals(self) -> np.ndarray:
        return self.density.sum(axis=1) * self.dz

    def display(self, percentile: float = 99.0) -> np.ndarray:
        """Per-frame scaling to the given percentile, clipped to [0, 1]."""
        ref = np.percentile(self.density, percentile, axis=1, keepdims=True)
        ref = np.where(ref > 0, ref, 1.0)
        return np.clip(self.density / ref, 0.0, 1.0)

    def row_normalized(self) -> np.ndarray:
        peak = self.density.max(axis=1, keepdims=True)
        return self.density / np.where(peak > 0, peak, 1.0)


@dataclass
class EvolutionResult:
    final: WavefunctionState
    series: ObservableSeries
    carpet: CarpetField | None = None


class Propagator:
    """Precomputed Strang splitting for one grid and parameter set.

    Each step applies half a potential phase, the full kinetic phase in
    momentum space and the second half potential phase; the potential is
    evaluated at the midpoint time of the step.
    """

    def __init__(self, grid: GridSpec, params: ScaledParams, dt: float, workers: int | None = None):
        self.grid = grid
        self.params = params
        self.dt = dt
        self.workers = workers
        self.z = grid.z
        self.p = grid.momenta(params.kbar)
        self.kinetic = np.exp(-1j * self.p**2 * dt / (2.0 * params.kbar))
        ez = np.minimum(-params.kappa * self.z, EXP_CLAMP)
        self.wall_profile = params.v0 * np.exp(ez)
        self.gravity_phase = np.exp(-0.5j * dt / params.kbar * self.z)
        # the wall phase is exactly 1.0 in double precision once it drops below 1e-18 rad
        peak = math.exp(min(params.kappa * params.lam, EXP_CLAMP))
        angle = 0.5 * dt / params.kbar * self.wall_profile * peak
        live = np.flatnonzero(angle > 1e-18)
        self.n_wall = int(live[-1]) + 1 if live.size else 0

    def half_phase(self, t_mid: float) -> np.ndarray:
        sp = self.params
        mod = math.exp(min(sp.kappa * sp.lam * math.sin(t_mid), EXP_CLAMP))
        k = self.n_wall
        ph = self.gravity_phase.copy()
        ph[:k] *= np.exp((-0.5j * self.dt / sp.kbar * mod) * self.wall_profile[:k])
        return ph

    def step(self, psi: np.ndarray, t: float) -> np.ndarray:
        ph = self.half_phase(t + 0.5 * self.dt)
        psi = sfft.fft(ph * psi, workers=self.workers)
        psi = sfft.ifft(self.kinetic * psi, workers=self.workers, overwrite_x=True)
        return ph * psi


def split_step(state: WavefunctionState, dt: float, params: ScaledParams | None = None, check_norm: bool = True) -> WavefunctionState:
    """One Strang step of length ``dt``; raises if the norm drifts by > 1e-9."""
    sp = params or state.params
    if not (0 < dt <= MAX_DT * (1 + 1e-12)):
        raise StepSizeError(f"dt must lie in (0, 2pi/64], got {dt}", suggested_dt=MAX_DT)
    prop = Propagator(state.grid, sp, dt)
    psi = prop.step(state.psi, state.t)
    new = WavefunctionState(psi, state.grid, state.t + dt, sp)
    if check_norm:
        drift = abs(new.norm - state.norm)
        if drift > 1e-9:
            raise StepSizeError(f"norm drift {drift:.3g} in one step", suggested_dt=0.5 * dt)
    return new


def _moments(psi, z, p, dz, psi0):
    rho = np.abs(psi) ** 2
    norm = rho.sum() * dz
    mz = (rho * z).sum() * dz / norm
    vz = (rho * (z - mz) ** 2).sum() * dz / norm
    phik = sfft.fft(psi)
    P = np.abs(phik) ** 2
    sP = P.sum()
    mp = (P * p).sum() / sP
    vp = (P * (p - mp) ** 2).sum() / sP
    c2 = abs(np.vdot(psi0, psi) * dz) ** 2
    return norm, mz, mp, vz, vp, c2, rho


def evolve(psi0: WavefunctionState, plan: PropagationPlan, params: ScaledParams | None = None) -> EvolutionResult:
    """Repeated split steps with observables every ``plan.stride`` steps."""
    sp = params or psi0.params
    grid = psi0.grid
    prop = Propagator(grid, sp, plan.dt, plan.workers)
    dz = grid.dz
    z, p = prop.z, prop.p
    ref = psi0.psi.copy()
    psi = psi0.psi.copy()
    ne = plan.edge_points
    rows = []
    carpet_rows, carpet_t = [], []
    cb = max(1, int(plan.carpet_bin))

    def sample(psi, t):
        norm, mz, mp, vz, vp, c2, rho = _moments(psi, z, p, dz, ref)
        edge = (rho[:ne].sum() + rho[-ne:].sum()) * dz
        rows.append((t, norm, mz, mp, vz, vp, c2, edge))
        return rho, edge

    def carpet_row(rho, t):
        carpet_rows.append(rho[: grid.n // cb * cb].reshape(-1, cb).mean(axis=1))
        carpet_t.append(t)

    rho, _ = sample(psi, psi0.t)
    if plan.carpet_stride:
        carpet_row(rho, psi0.t)
    t = psi0.t
    for n in range(1, plan.n_steps + 1):
        psi = prop.step(psi, t)
        t = psi0.t + n * plan.dt
        want_obs = n % plan.stride == 0 or n == plan.n_steps
        want_carpet = plan.carpet_stride and n % plan.carpet_stride == 0
        if want_obs or want_carpet:
            rho = None
            if want_obs:
                rho, edge = sample(psi, t)
                if plan.boundary == "hard-cap" and edge > plan.edge_tol:
                    raise BoundaryContaminationError(
                        f"edge probability {edge:.3g} exceeds {plan.edge_tol:g} at t={t:.6g}; enlarge the grid",
                        t=t,
                        edge_probability=edge,
                    )
                if abs(rows[-1][1] - psi0.norm) > 1e-8 * max(1.0, n / 1e6):
                    raise NumericalContractError(f"norm drifted to {rows[-1][1]!r}")
            if want_carpet:
                if rho is None:
                    rho = np.abs(psi) ** 2
                carpet_row(rho, t)
    arr = np.array(rows)
    series = ObservableSeries(*(arr[:, k].copy() for k in range(8)))
    cf = None
    if plan.carpet_stride:
        dens = np.array(carpet_rows)
        zc = grid.z[: grid.n // cb * cb].reshape(-1, cb).mean(axis=1)
        cf = CarpetField(dens, np.array(carpet_t), zc, dz * cb, dens.sum(axis=1) * dz * cb)
    return EvolutionResult(WavefunctionState(psi, grid, t, sp), series, cf)


def momentum_distribution(state: WavefunctionState) -> tuple[np.ndarray, np.ndarray]:
    """(p, |phi(p)|^2) in ascending p; integrates to the norm with spacing 2 pi kbar / L."""
    grid = state.grid
    kbar = state.params.kbar
    p = grid.momenta(kbar)
    dz = grid.dz
    amp = sfft.fft(state.psi) * dz / math.sqrt(2.0 * math.pi * kbar)
    order = np.argsort(p, kind="stable")
    return p[order], np.abs(amp[order]) ** 2


def position_distribution(state: WavefunctionState) -> tuple[np.ndarray, np.ndarray]:
    return state.grid.z, state.density()


def excess_kurtosis(x: np.ndarray, density: np.ndarray) -> float:
    w = density / density.sum()
    m = (w * x).sum()
    v = (w * (x - m) ** 2).sum()
    return float((w * (x - m) ** 4).sum() / v**2 - 3.0)


@dataclass(frozen=True)
class LocalizationWindow:
    lam: float
    kbar: float
    lambda_l: float
    lambda_u: float
    classification: str
    empty: bool


def localization_window(lam: float, kbar: float) -> LocalizationWindow:
    """Classify lam against lambda_l = K_cr/4 < lam < lambda_u = sqrt(kbar)/2."""
    if lam < 0 or kbar <= 0:
        raise ParameterError("need lam >= 0 and kbar > 0")
    lo = K_CR / 4.0
    hi = math.sqrt(kbar) / 2.0
    if lam <= lo:
        cls = "below"
    elif lam < hi:
        cls = "inside"
    else:
        cls = "above"
    return LocalizationWindow(lam, kbar, lo, hi, cls, hi <= lo)


@dataclass
class BreakTime:
    formula: float
    empirical: float | None
    ratio: np.ndarray | None = None
    t: np.ndarray | None = None


def _running_mean(x, w):
    if w <= 1:
        return np.asarray(x, dtype=float)
    c = np.cumsum(np.insert(np.asarray(x, dtype=float), 0, 0.0))
    out = np.empty(len(x))
    for i in range(len(x)):
        lo = max(0, i - w // 2)
        hi = min(len(x), i + w // 2 + 1)
        out[i] = (c[hi] - c[lo]) / (hi - lo)
    return out


def quantum_break_time(
    lam: float,
    kbar: float,
    series: ObservableSeries | None = None,
    classical=None,
    tolerance: float = 0.2,
    window: float = 50.0,
    min_r2: float = 0.5,
) -> BreakTime:
    """Break time as lam^2/kbar^2 and, with data, as the empirical departure time.

    ``classical`` is the matched classical run: either an object with
    ``times``/``var_p`` (e.g. :class:`~fermi_forge.classical.EnsembleRun`)
    or a ``(t, var_p)`` pair.  The empirical t* is the first sample time
    after which the (running-mean) quantum var_p stays more than
    ``tolerance`` below the classical curve.  No departure is reported when
    the classical reference is not diffusing (linear-fit slope <= 0 or
    R^2 < ``min_r2``).
    """
    if lam < 0 or kbar <= 0:
        raise ParameterError("need lam >= 0 and kbar > 0")
    formula = lam * lam / (kbar * kbar)
    if series is None or classical is None or lam == 0:
        return BreakTime(formula, None)
    if hasattr(classical, "var_p"):
        tc, vc = np.asarray(classical.times), np.asarray(classical.var_p)
    else:
        tc, vc = (np.asarray(a, dtype=float) for a in classical)
    from .analysis import linear_fit

    slope, _, r2 = linear_fit(tc, vc)
    if slope <= 0 or r2 < min_r2:
        return BreakTime(formula, None)
    tq = series.t
    if tq[-1] < formula:
        return BreakTime(formula, None)
    vc_i = np.interp(tq, tc, vc)
    w = max(1, int(round(window / max(tq[1] - tq[0], 1e-300)))) if len(tq) > 1 else 1
    ratio = _running_mean(series.var_p, w) / _running_mean(vc_i, w)
    below = ratio < 1.0 - tolerance
    # last index that is not departed; t* is the next sample
    ok = np.flatnonzero(~below)
    if ok.size == 0:
        idx = 0
    elif ok[-1] == len(tq) - 1:
        return BreakTime(formula, None, ratio, tq)
    else:
        idx = ok[-1] + 1
    return BreakTime(formula, float(tq[idx]), ratio, tq)


@dataclass
class LocalizationReport:
    ell: float
    c_z: float | None
    p_range: tuple[float, float]
    z_range: tuple[float, float] | None
    r2_p: float
    r2_z_sqrt: float | None
    r2_z_linear: float | None
    residual_p: float
    residual_z: float | None
    classification: str | None = None
    unreliable: bool = False
    p_mean: float = 0.0


def _bin(x, y, width):
    """Coarse-grain a density sampled on a uniform axis into bins of ``width``."""
    dx = x[1] - x[0]
    k = max(1, int(round(width / dx)))
    n = len(x) // k * k
    return x[:n].reshape(-1, k).mean(axis=1), y[:n].reshape(-1, k).mean(axis=1), k * dx


def _lsq(x, y):
    A = np.polyfit(x, y, 1)
    yh = np.polyval(A, x)
    ss = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - ((y - yh) ** 2).sum() / ss if ss > 0 else 1.0
    return A, float(min(max(r2, 0.0), 1.0)), float(np.sqrt(((y - yh) ** 2).mean()))


def fit_localization(
    p_density: tuple[np.ndarray, np.ndarray],
    z_density: tuple[np.ndarray, np.ndarray] | None = None,
    bin_width_p: float | None = None,
    bin_width_z: float | None = None,
    core_fraction: float = 0.6,
    n_equivalent: float = 1e6,
    lam: float | None = None,
    kbar: float | None = None,
) -> LocalizationReport:
    """Fit exp(-|p - pbar|/ell) to the momentum tails and exp(-c_z sqrt z) to the position tail.

    Densities are coarse-grained into bins (default: no binning), then
    fitted from the ``core_fraction`` quantile of |p - pbar| (resp. of z)
    outward to where the bin probability drops below ``10/n_equivalent``.
    """
    p, Pp = (np.asarray(a, dtype=float) for a in p_density)
    if bin_width_p:
        p, Pp, wp = _bin(p, Pp, bin_width_p)
    else:
        wp = p[1] - p[0]
    prob = Pp * wp
    prob = prob / prob.sum()
    pbar = float((prob * p).sum())
    a = np.abs(p - pbar)
    order = np.argsort(a, kind="stable")
    cum = np.cumsum(prob[order])
    a_lo = float(a[order][min(np.searchsorted(cum, core_fraction), len(a) - 1)])
    sel = (a >= a_lo) & (prob > 10.0 / n_equivalent)
    if sel.sum() < 3:
        raise ParameterError("momentum density has too few points in the fit range")
    A, r2p, resp = _lsq(a[sel], np.log(prob[sel] / wp))
    ell = -1.0 / A[0] if A[0] < 0 else float("inf")
    c_z = r2s = r2l = resz = None
    zr = None
    if z_density is not None:
        z, Pz = (np.asarray(b, dtype=float) for b in z_density)
        if bin_width_z:
            z, Pz, wz = _bin(z, Pz, bin_width_z)
        else:
            wz = z[1] - z[0]
        pz = Pz * wz
        pz = pz / pz.sum()
        cz = np.cumsum(pz)
        z_lo = float(z[min(np.searchsorted(cz, core_fraction), len(z) - 1)])
        zs = (z >= max(z_lo, 0.0)) & (pz > 10.0 / n_equivalent) & (z > 0)
        if zs.sum() >= 3:
            y = np.log(pz[zs] / wz)
            As, r2s, resz = _lsq(np.sqrt(z[zs]), y)
            _, r2l, _ = _lsq(z[zs], y)
            c_z = float(-As[0])
            zr = (float(z[zs].min()), float(z[zs].max()))
    cls = None
    if lam is not None and kbar is not None:
        cls = localization_window(lam, kbar).classification
    unreliable = r2p < 0.5 or (r2s is not None and r2s < 0.5)
    return LocalizationReport(
        ell, c_z, (a_lo, float(a[sel].max())), zr, r2p, r2s, r2l, resp, resz, cls, unreliable, pbar
    )


def autocorrelation(psi0: WavefunctionState, psit: WavefunctionState) -> float:
    """|<psi0|psi_t>|^2 with the grid weight."""
    if psi0.grid != psit.grid:
        raise GridMismatchError("states live on different grids")
    return float(abs(np.vdot(psi0.psi, psit.psi) * psi0.grid.dz) ** 2)


def carpet(result: EvolutionResult) -> CarpetField:
    if result.carpet is None:
        raise ParameterError("carpet sampling was not enabled in the propagation plan")
    return result.carpet
