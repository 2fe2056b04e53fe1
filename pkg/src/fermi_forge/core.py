"""Dimensionless units, parameter records and initial states.

Scaled variables follow z -> (Omega^2/g) z, p -> (Omega/m g) p_z,
t -> Omega t, so that the Hamiltonian reads

    H = p^2/2 + z + V0 exp(-kappa (z - lambda sin t)).

The scaled Planck constant is kbar = (Omega/Omega0)^3 with
Omega0 = (m g^2 / hbar)^(1/3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ParameterError

__all__ = [
    "PhysicalParams",
    "ScaledParams",
    "PhasePoint",
    "Ensemble",
    "GridSpec",
    "WavefunctionState",
    "omega0",
    "scale_parameters",
    "unscale_parameters",
    "default_grid",
    "gaussian_packet",
    "uniform_cell_ensemble",
]


@dataclass(frozen=True)
class PhysicalParams:
    """SI inputs: mass, gravity, mirror decay constant, Rabi frequency,
    mirror-phase modulation amplitude, modulation frequency, hbar."""

    m: float
    g: float
    kappa: float
    omega_eff: float
    epsilon: float
    omega: float
    hbar: float = 1.054571817e-34

    def __post_init__(self):
        for name in ("m", "g", "kappa", "omega", "hbar"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {v!r}")
        for name in ("omega_eff", "epsilon"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ParameterError(f"{name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True)
class ScaledParams:
    """Dimensionless system constants."""

    kbar: float = 4.0
    lam: float = 0.0
    kappa: float = 0.5
    v0: float = 4.0

    def __post_init__(self):
        if not (math.isfinite(self.kbar) and self.kbar > 0):
            raise ParameterError(f"kbar must be > 0, got {self.kbar!r}")
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise ParameterError(f"kappa must be > 0, got {self.kappa!r}")
        if not (math.isfinite(self.v0) and self.v0 >= 0):
            raise ParameterError(f"v0 must be >= 0, got {self.v0!r}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ParameterError(f"lambda must be >= 0, got {self.lam!r}")

    def with_lambda(self, lam: float) -> "ScaledParams":
        return ScaledParams(kbar=self.kbar, lam=lam, kappa=self.kappa, v0=self.v0)

    def potential(self, z, t):
        """V(z, t) = z + V0 exp(-kappa (z - lambda sin t))."""
        return z + self.v0 * np.exp(-self.kappa * (z - self.lam * np.sin(t)))

    def hamiltonian(self, z, p, t):
        return 0.5 * np.asarray(p) ** 2 + self.potential(z, t)


def omega0(m: float, g: float, hbar: float) -> float:
    """Frequency at which the scaled Planck constant equals one."""
    return (m * g * g / hbar) ** (1.0 / 3.0)


def scale_parameters(phys: PhysicalParams) -> ScaledParams:
    w = phys.omega
    return ScaledParams(
        kbar=(w / omega0(phys.m, phys.g, phys.hbar)) ** 3,
        lam=phys.epsilon * w * w / phys.g,
        kappa=phys.kappa * phys.g / (w * w),
        v0=phys.hbar * phys.omega_eff * w * w / (phys.m * phys.g * phys.g),
    )


def unscale_parameters(sp: ScaledParams, m: float, g: float, hbar: float) -> PhysicalParams:
    """Inverse of :func:`scale_parameters` given the reference constants."""
    w = omega0(m, g, hbar) * sp.kbar ** (1.0 / 3.0)
    return PhysicalParams(
        m=m,
        g=g,
        kappa=sp.kappa * w * w / g,
        omega_eff=sp.v0 * m * g * g / (hbar * w * w),
        epsilon=sp.lam * g / (w * w),
        omega=w,
        hbar=hbar,
    )


@dataclass(frozen=True)
class PhasePoint:
    z: float
    p: float
    t: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.z, self.p, self.t)):
            raise ParameterError("phase point coordinates must be finite")


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Weighted population of phase points sharing a common time.

    Stored column-wise (``z``, ``p`` arrays) for vectorised propagation;
    iterate to get :class:`PhasePoint` objects.
    """

    z: np.ndarray
    p: np.ndarray
    t: float = 0.0
    weights: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        z = np.array(self.z, dtype=float).ravel()
        p = np.array(self.p, dtype=float).ravel()
        if z.size == 0:
            raise ParameterError("ensemble must be nonempty")
        if z.shape != p.shape:
            raise ParameterError("z and p arrays differ in length")
        z.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "p", p)
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).ravel()
            if w.shape != z.shape or np.any(w < 0):
                raise ParameterError("weights must be nonnegative, one per point")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ParameterError("weights must sum to 1")
            w.flags.writeable = False
            object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.z.size

    def __iter__(self) -> Iterator[PhasePoint]:
        for zi, pi in zip(self.z, self.p):
            yield PhasePoint(float(zi), float(pi), self.t)

    @property
    def w(self) -> np.ndarray:
        """Weights, uniform 1/n when none were given."""
        if self.weights is None:
            return np.full(self.z.size, 1.0 / self.z.size)
        return self.weights

    @classmethod
    def from_points(cls, points, weights=None, seed=None) -> "Ensemble":
        points = list(points)
        if not points:
            raise ParameterError("ensemble must be nonempty")
        return cls(
            z=[pt.z for pt in points],
            p=[pt.p for pt in points],
            t=points[0].t,
            weights=weights,
            seed=seed,
        )


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic position grid z_i = z_min + i*dz, i < n."""

    z_min: float
    z_max: float
    n: int

    def __post_init__(self):
        if not (self.z_min < 0 < self.z_max):
            raise ParameterError(f"grid must satisfy z_min < 0 < z_max, got [{self.z_min}, {self.z_max}]")
        if self.n < 2 or self.n & (self.n - 1):
            raise ParameterError(f"grid size must be a power of two, got {self.n}")

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / self.n

    @property
    def z(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.n)

    def momenta(self, kbar: float) -> np.ndarray:
        """Momentum grid in FFT order, p = kbar * wavenumber."""
        return 2.0 * np.pi * kbar * np.fft.fftfreq(self.n, d=self.dz)


def default_grid(params: ScaledParams, z0: float, p0: float, n: int = 4096) -> GridSpec:
    """Grid from -2/kappa to three times the turning-point height."""
    top = 3.0 * max(z0 + 0.5 * p0 * p0, 1.0)
    return GridSpec(-2.0 / params.kappa, top, n)


@dataclass(frozen=True, eq=False)
class WavefunctionState:
    psi: np.ndarray
    grid: GridSpec
    t: float
    params: ScaledParams

    def __post_init__(self):
        psi = np.array(self.psi, dtype=complex)
        if psi.shape != (self.grid.n,):
            raise ParameterError("wavefunction length does not match grid")
        psi.flags.writeable = False
        object.__setattr__(self, "psi", psi)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dz)

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def replace(self, psi=None, t=None) -> "WavefunctionState":
        return WavefunctionState(
            self.psi if psi is None else psi,
            self.grid,
            self.t if t is None else t,
            self.params,
        )


def gaussian_packet(z0: float, p0: float, dz: float, grid: GridSpec, params: ScaledParams | float) -> WavefunctionState:
    """Minimum-uncertainty packet with position width ``dz``.

    Momentum width is kbar/(2 dz). ``params`` may be a bare kbar.
    """
    if isinstance(params, ScaledParams):
        sp = params
    else:
        sp = ScaledParams(kbar=float(params))
    if dz <= 0:
        raise ParameterError("packet width must be positive")
    if z0 - 4 * dz < grid.z_min or z0 + 4 * dz > grid.z_max:
        raise ParameterError(
            f"packet at z0={z0} with width {dz} is clipped by grid [{grid.z_min}, {grid.z_max}]"
        )
    z = grid.z
    psi = np.exp(-((z - z0) ** 2) / (4.0 * dz * dz) + 1j * p0 * (z - z0) / sp.kbar)
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * grid.dz)
    return WavefunctionState(psi, grid, 0.0, sp)


def uniform_cell_ensemble(z0: float, p0: float, dz: float, dp: float, n: int, seed: int = 0) -> Ensemble:
    """Gaussian cloud matching a quantum packet's marginals."""
    if n < 1:
        raise ParameterError("ensemble needs at least one point")
    rng = np.random.default_rng(seed)
    z = z0 + dz * rng.standard_normal(n)
    p = p0 + dp * rng.standard_normal(n)
    return Ensemble(z=z, p=p, t=0.0, seed=seed)
