"""Eigenstates of the triangular well (hard mirror plus gravity) and Wigner functions.

In scaled units the stationary problem is

    -(kbar^2/2) psi'' + z psi = E psi,   psi(0) = 0,

whose solutions are psi_n(z) = N Ai((2/kbar^2)^(1/3) z - z_n) with
E_n = (kbar^2/2)^(1/3) z_n and -z_n the n-th zero of Ai.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy import special

from .core import GridSpec, ScaledParams, WavefunctionState
from .errors import ConvergenceError, ParameterError

__all__ = [
    "airy_zero",
    "airy_zeros",
    "level_energy",
    "mode_energies",
    "CavityMode",
    "cavity_mode",
    "stationary_residual",
    "project_onto_modes",
    "mean_quantum_number",
    "max_mode_index",
    "WignerField",
    "wigner",
]


@lru_cache(maxsize=None)
def _zeros_table(n: int) -> tuple:
    return tuple(-special.ai_zeros(n)[0])


def _refine_zero(guess: float) -> float:
    """Newton on Ai(-x) with the derivative Ai'; converges in a few steps."""
    x = guess
    for _ in range(50):
        ai, aip, _, _ = special.airy(-x)
        step = ai / (-aip)
        x -= step
        if abs(step) < 1e-15 * max(1.0, x):
            return x
    raise ConvergenceError(f"Airy zero refinement did not converge from {guess}")


def airy_zero(n: int) -> float:
    """Positive z_n with Ai(-z_n) = 0, n >= 1."""
    if int(n) != n or n < 1:
        raise ParameterError("Airy zero index must be an integer >= 1")
    n = int(n)
    table = _zeros_table(max(64, 1 << (n - 1).bit_length()))
    return _refine_zero(table[n - 1])


def airy_zeros(n_max: int) -> np.ndarray:
    return np.array([airy_zero(k) for k in range(1, n_max + 1)])


def level_energy(n, kbar: float) -> np.ndarray | float:
    """E_n = (kbar^2/2)^(1/3) z_n."""
    scale = (kbar * kbar / 2.0) ** (1.0 / 3.0)
    if np.ndim(n) == 0:
        return scale * airy_zero(int(n))
    return scale * np.array([airy_zero(int(k)) for k in n])


def mode_energies(n_max: int, kbar: float) -> np.ndarray:
    return (kbar * kbar / 2.0) ** (1.0 / 3.0) * airy_zeros(n_max)


@dataclass(frozen=True)
class CavityMode:
    n: int
    energy: float
    z_n: float
    psi: np.ndarray
    grid: GridSpec
    kbar: float
    truncation: float = 0.0

    def state(self, params: ScaledParams | None = None) -> WavefunctionState:
        sp = params or ScaledParams(kbar=self.kbar, lam=0.0)
        return WavefunctionState(self.psi.astype(complex), self.grid, 0.0, sp)


def cavity_mode(n: int, kbar: float, grid: GridSpec, strict: bool = True) -> CavityMode:
    """Mode n on ``grid``, normalised by grid quadrature.

    ``truncation`` is the probability the exact mode carries beyond
    ``z_max``.  With ``strict`` a grid shorter than 1.5 classical turning
    points raises; otherwise a warning is issued.
    """
    if kbar <= 0:
        raise ParameterError("kbar must be positive")
    zn = airy_zero(n)
    E = (kbar * kbar / 2.0) ** (1.0 / 3.0) * zn
    if grid.z_max < 1.5 * E:
        msg = f"grid z_max={grid.z_max} is below 1.5*E_{n}={1.5 * E:.6g}; mode {n} truncated"
        if strict:
            raise ParameterError(msg)
        warnings.warn(msg, stacklevel=2)
    a = (2.0 / (kbar * kbar)) ** (1.0 / 3.0)
    z = grid.z
    x = a * z - zn
    psi = np.where(z > 0.0, special.airy(x)[0], 0.0)
    psi /= math.sqrt((psi * psi).sum() * grid.dz)
    # tail beyond z_max from the antiderivative of Ai^2: x Ai^2 - Ai'^2
    xe = a * grid.z_max - zn
    ai, aip, _, _ = special.airy(xe)
    tail_x = -(xe * ai * ai - aip * aip)
    ai0, aip0, _, _ = special.airy(-zn)
    total_x = -(-zn * ai0 * ai0 - aip0 * aip0)
    trunc = max(0.0, tail_x / total_x) if total_x > 0 else 0.0
    return CavityMode(n, E, zn, psi, grid, kbar, trunc)


def stationary_residual(mode: CavityMode, interior: float = 0.0) -> float:
    """||-(kbar^2/2) psi'' + (z - E) psi|| / ||psi|| with a 4th-order stencil."""
    h = mode.grid.dz
    psi = mode.psi
    z = mode.grid.z
    d2 = (-psi[4:] + 16 * psi[3:-1] - 30 * psi[2:-2] + 16 * psi[1:-3] - psi[:-4]) / (12 * h * h)
    zc = z[2:-2]
    r = -(mode.kbar**2 / 2.0) * d2 + (zc - mode.energy) * psi[2:-2]
    keep = zc > interior + 2 * h
    return float(np.linalg.norm(r[keep]) / np.linalg.norm(psi[2:-2][keep]))


def project_onto_modes(state: WavefunctionState, n_max: int):
    """Coefficients c_n = <psi_n|psi> for n = 1..n_max, and the resummed state."""
    grid = state.grid
    kbar = state.params.kbar
    c = np.empty(n_max, dtype=complex)
    back = np.zeros(grid.n, dtype=complex)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in range(1, n_max + 1):
            m = cavity_mode(k, kbar, grid, strict=False)
            c[k - 1] = np.vdot(m.psi, state.psi) * grid.dz
            back += c[k - 1] * m.psi
    return c, back


def max_mode_index(kbar: float, grid: GridSpec) -> int:
    """Largest n whose turning point E_n lies below z_max / 1.2."""
    scale = (kbar * kbar / 2.0) ** (1.0 / 3.0)
    zmax = grid.z_max / (1.2 * scale)
    # z_n ~ (3 pi (4n - 1) / 8)^(2/3)
    n = max(1, int((8.0 * zmax**1.5 / (3.0 * math.pi) + 1.0) / 4.0))
    while n > 1 and airy_zero(n) > zmax:
        n -= 1
    return n


def mean_quantum_number(state: WavefunctionState, n_max: int | None = None) -> float:
    if n_max is None:
        n_max = max_mode_index(state.params.kbar, state.grid)
    c, _ = project_onto_modes(state, n_max)
    w = np.abs(c) ** 2
    return float((np.arange(1, n_max + 1) * w).sum() / w.sum())


@dataclass
class WignerField:
    W: np.ndarray
    z: np.ndarray
    p: np.ndarray
    kbar: float
    aliasing: bool = False

    @property
    def dz(self) -> float:
        return float(self.z[1] - self.z[0])

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    def total(self) -> float:
        return float(self.W.sum() * self.dz * self.dp)

    def z_marginal(self) -> np.ndarray:
        return self.W.sum(axis=1) * self.dp

    def p_marginal(self) -> np.ndarray:
        return self.W.sum(axis=0) * self.dz

    def min(self) -> float:
        return float(self.W.min())


def wigner(psi, kbar: float | None = None, grid: GridSpec | None = None, z_stride: int = 1) -> WignerField:
    """W(z, p) = 1/(2 pi kbar) sum_y psi*(z + y/2) psi(z - y/2) exp(i p y / kbar) dy.

    The displacement is sampled as y = 2 m dz (m integer), so
    psi(z +- y/2) are grid values and the conjugate momentum grid has
    spacing pi kbar / (N dz) with Nyquist limit pi kbar / (2 dz).  The
    z-marginal is exact; the p-marginal equals the discrete momentum
    density interpolated onto the finer grid.  Content of |phi(p)|^2
    beyond the Wigner Nyquist limit is folded back and reported through
    ``aliasing``.
    """
    if isinstance(psi, WavefunctionState):
        kbar = psi.params.kbar if kbar is None else kbar
        grid = psi.grid
        psi = psi.psi
    if kbar is None or grid is None:
        raise ParameterError("need kbar and grid for a raw amplitude array")
    psi = np.asarray(psi, dtype=complex)
    n = psi.size
    dz = grid.dz
    m = np.arange(n) - n // 2  # displacement index
    rows = np.arange(0, n, z_stride)
    W = np.empty((rows.size, n))
    P = np.abs(sfft.fft(psi)) ** 2
    P /= P.sum()
    fold = P[np.abs(np.fft.fftfreq(n)) >= 0.25].sum()
    for k, i in enumerate(rows):
        ip = i + m
        im = i - m
        ok = (ip >= 0) & (ip < n) & (im >= 0) & (im < n)
        f = np.zeros(n, dtype=complex)
        f[ok] = np.conj(psi[ip[ok]]) * psi[im[ok]]
        # sum_m f_m exp(i p 2 m dz / kbar) with p_j = pi kbar j / (n dz): exp(2 pi i j m / n)
        g = sfft.ifft(sfft.ifftshift(f)) * n
        W[k] = np.real(sfft.fftshift(g))
    W *= 2.0 * dz / (2.0 * math.pi * kbar)
    j = np.arange(n) - n // 2
    p = math.pi * kbar * j / (n * dz)
    return WignerField(W, grid.z[rows], p, kbar, aliasing=bool(fold > 1e-10))
