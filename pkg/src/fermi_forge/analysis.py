"""Fitting, statistics, lambda scans and revival-peak detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import FermiForgeError, FitError, ParameterError

__all__ = [
    "linear_fit",
    "r_squared",
    "excess_kurtosis",
    "histogram",
    "FitResult",
    "fit_distribution",
    "ScanPoint",
    "ScanResult",
    "lambda_scan",
    "scan_peak_near",
    "detect_revival_peaks",
    "derive_seed",
]

MODELS = ("exponential-p", "sqrt-exponential-z", "gaussian", "barometric")


def r_squared(y, yhat, w=None) -> float:
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    ybar = (w * y).sum() / w.sum()
    ss_tot = (w * (y - ybar) ** 2).sum()
    ss_res = (w * (y - yhat) ** 2).sum()
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def linear_fit(x, y, w=None) -> tuple[float, float, float]:
    """Weighted least squares y = a x + b; returns (a, b, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise FitError("need at least two points for a line")
    ww = None if w is None else np.sqrt(np.asarray(w, dtype=float))
    a, b = np.polyfit(x, y, 1, w=ww)
    return float(a), float(b), float(r_squared(y, a * x + b, w))


def excess_kurtosis(samples, weights=None) -> float:
    x = np.asarray(samples, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    m = (w * x).sum()
    v = (w * (x - m) ** 2).sum()
    if v <= 0:
        raise FitError("degenerate variance")
    return float((w * (x - m) ** 4).sum() / v**2 - 3.0)


def histogram(samples, bins="fd", range=None):
    """(bin_center, count, density); Freedman-Diaconis bins by default."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    counts, edges = np.histogram(x, bins=bins, range=range)
    widths = np.diff(edges)
    density = counts / (counts.sum() * widths)
    return 0.5 * (edges[1:] + edges[:-1]), counts, density


@dataclass
class FitResult:
    model: str
    params: dict
    r2: float
    residual: float
    fit_range: tuple[float, float]
    clamped: bool = False

    @property
    def eta(self) -> float:
        return self.params["eta"]


def fit_distribution(hist, model: str, fit_range: tuple[float, float] | None = None, min_bins: int = 10) -> FitResult:
    """Fit a histogram ``(centers, counts[, density])`` or ``(centers, density)``.

    Exponential-family models are straight lines in log space and are
    fitted by least squares weighted with the counts (Poisson weights).
    The Gaussian model starts from the moments and is refined as a
    parabola in log space; its variance is reported as ``eta``.
    """
    if model not in MODELS:
        raise ParameterError(f"model must be one of {MODELS}")
    x = np.asarray(hist[0], dtype=float)
    if len(hist) == 3:
        counts = np.asarray(hist[1], dtype=float)
        dens = np.asarray(hist[2], dtype=float)
    else:
        dens = np.asarray(hist[1], dtype=float)
        counts = dens / dens.max() * 1e6 if dens.max() > 0 else dens
    sel = dens > 0
    if fit_range is not None:
        sel &= (x >= fit_range[0]) & (x <= fit_range[1])
    if model == "sqrt-exponential-z":
        sel &= x >= 0
    if sel.sum() < min_bins:
        raise FitError(f"only {int(sel.sum())} nonzero bins in range; need {min_bins}")
    xs, ys, ws = x[sel], np.log(dens[sel]), counts[sel]
    rng = (float(xs.min()), float(xs.max()))
    if model == "gaussian":
        prob = dens * np.gradient(x) if x.size > 1 else dens
        m = (prob * x).sum() / prob.sum()
        v = (prob * (x - m) ** 2).sum() / prob.sum()
        if v <= 0:
            raise FitError("degenerate variance")
        c2, c1, c0 = np.polyfit(xs, ys, 2, w=np.sqrt(ws))
        if c2 < 0:
            v = -0.5 / c2
            m = -c1 / (2.0 * c2)
        yhat = np.polyval([c2, c1, c0], xs)
        params = {"eta": float(v), "mean": float(m)}
    else:
        if model == "exponential-p":
            pbar = float((dens * x).sum() / dens.sum())
            u = np.abs(xs - pbar)
        elif model == "sqrt-exponential-z":
            u = np.sqrt(xs)
        else:
            u = xs
        a, b = np.polyfit(u, ys, 1, w=np.sqrt(ws))
        yhat = a * u + b
        if model == "exponential-p":
            params = {"ell": float(-1.0 / a) if a < 0 else math.inf, "mean": pbar, "log_c": float(b)}
        elif model == "sqrt-exponential-z":
            params = {"c_z": float(-a), "log_c": float(b)}
        else:
            params = {"eta": float(-1.0 / a) if a < 0 else math.inf, "log_c": float(b)}
    r2 = r_squared(ys, yhat, ws)
    clamped = not (0.0 <= r2 <= 1.0)
    r2 = min(max(r2, 0.0), 1.0)
    resid = float(np.sqrt((ws * (ys - yhat) ** 2).sum() / ws.sum()))
    return FitResult(model, params, float(r2), resid, rng, clamped)


def derive_seed(master: int, lam: float) -> int:
    """Per-lambda seed, independent of the scan grid."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, int(round(lam * 1_000_000))])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class ScanPoint:
    lam: float
    dp: float
    dz: float
    seed: int
    n_failed: int = 0
    error: str | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class ScanResult:
    points: list[ScanPoint]
    engine: str
    t_final: float

    @property
    def lams(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def dp(self) -> np.ndarray:
        return np.array([p.dp for p in self.points])

    @property
    def dz(self) -> np.ndarray:
        return np.array([p.dz for p in self.points])

    def rows(self):
        return [[p.lam, p.dp, p.dz, p.seed, p.n_failed, p.error or ""] for p in self.points]


def lambda_scan(config, lam_grid, engine: str = "classical", t_final: float | None = None, progress=None) -> ScanResult:
    """One independent run per lambda; failures are recorded and the scan continues.

    ``config`` is a :class:`~fermi_forge.config.RunConfig`.  Classical runs
    use a Gaussian ensemble with ``n_particles`` points; quantum runs a
    Gaussian packet on the configured grid, and record the saturation
    ratio var_p(t)/var_p(t/2) in ``extra``.
    """
    from .classical import propagate_ensemble
    from .core import GridSpec, gaussian_packet, uniform_cell_ensemble
    from .quantum import PropagationPlan, evolve

    lams = np.asarray(lam_grid, dtype=float)
    if lams.size == 0:
        raise ParameterError("empty lambda grid")
    if np.any(np.diff(lams) <= 0):
        raise ParameterError("lambda grid must be strictly increasing")
    if engine not in ("classical", "quantum"):
        raise ParameterError("engine must be 'classical' or 'quantum'")
    T = config.t_final if t_final is None else t_final
    out = []
    for lam in lams:
        seed = derive_seed(config.seed, float(lam))
        sp = config.scaled().with_lambda(float(lam))
        try:
            if engine == "classical":
                e = uniform_cell_ensemble(config.z0, config.p0, config.dz, config.dp, config.n_particles, seed)
                run = propagate_ensemble(e, T, config.dt, sp, sample_every=T, eta=config.eta)
                rec = run.records[-1]
                pt = ScanPoint(float(lam), rec.dp, rec.dz, seed, run.n_failed)
            else:
                grid = GridSpec(config.grid_zmin, config.grid_zmax, config.grid_n)
                psi = gaussian_packet(config.z0, config.p0, config.dz, grid, sp)
                plan = PropagationPlan(config.dt, T, stride=config.stride, boundary=config.boundary)
                res = evolve(psi, plan, sp)
                s = res.series
                ratio = s.var_p[-1] / s.var_p[s.at(T / 2)]
                pt = ScanPoint(float(lam), math.sqrt(s.var_p[-1]), math.sqrt(s.var_z[-1]), seed,
                               extra={"saturation_ratio": float(ratio), "localized": bool(ratio < 1.2)})
        except FermiForgeError as exc:
            pt = ScanPoint(float(lam), math.nan, math.nan, seed, error=f"{type(exc).__name__}: {exc}")
        out.append(pt)
        if progress is not None:
            progress(pt)
    return ScanResult(out, engine, T)


def scan_peak_near(result: ScanResult, center: float, half_window: float = 0.5) -> float:
    """lambda of the largest dp within center +- half_window."""
    lam = result.lams
    dp = result.dp
    sel = (np.abs(lam - center) <= half_window) & np.isfinite(dp)
    if not sel.any():
        raise ParameterError("no scan points near the requested centre")
    i = np.flatnonzero(sel)[np.argmax(dp[sel])]
    return float(lam[i])


def detect_revival_peaks(series, prominence: float = 0.2) -> list[float]:
    """Times of C^2 maxima with at least ``prominence`` (absolute) prominence.

    ``series`` is an :class:`~fermi_forge.quantum.ObservableSeries` or a
    ``(t, C2)`` pair on a uniform stride.  Each maximum is refined by the
    vertex of the parabola through it and its two neighbours.
    """
    if hasattr(series, "C2"):
        t, c = np.asarray(series.t), np.asarray(series.C2)
    else:
        t, c = (np.asarray(a, dtype=float) for a in series)
    if t.size < 3:
        return []
    h = t[1] - t[0]
    idx, _ = find_peaks(c, prominence=prominence)
    out = []
    for i in idx:
        y0, y1, y2 = c[i - 1], c[i], c[i + 1]
        den = y0 - 2 * y1 + y2
        off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        out.append(float(t[i] + np.clip(off, -0.5, 0.5) * h))
    return out
