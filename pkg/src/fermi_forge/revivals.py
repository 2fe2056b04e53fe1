"""Recurrence-time theory near a nonlinear resonance.

Frequencies and nonlinearities follow from the triangular-well spectrum
E_n = (kbar^2/2)^(1/3) z_n:  omega = E'_r / kbar and zeta = E''_r / kbar^2,
with the large-n closed forms implemented by :func:`classical_frequency`
and :func:`nonlinearity`.  The drive frequency is 1 and only M = 1
resonances N omega = 1 are considered.

Two families of modification factors are exposed and kept separate:
``modification_factors`` (the Fermi-accelerator forms, positive) and
``secular_modification_factors`` (the generic secular-theory forms, whose
classical factor carries a minus sign).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConvergenceError, NearResonanceError, ParameterError, SingularityError

__all__ = [
    "classical_frequency",
    "nonlinearity",
    "ResonanceData",
    "resonance_data",
    "matrix_element",
    "modification_factors",
    "secular_mu",
    "secular_modification_factors",
    "alpha_factor",
    "beta_factor",
    "RevivalEstimate",
    "recurrence_times",
    "MathieuSolution",
    "mathieu_char_value",
    "mathieu_nu",
    "mathieu_q",
    "quasi_energy",
    "quasi_energy_n",
    "ResonanceCenter",
    "resonance_center",
    "resonance_center_evolution_flag",
    "energy_at_quantum_number",
]

NEAR_RESONANCE_GUARD = 1e-3
SINGULAR_GUARD = 1e-6


def classical_frequency(r: float, kbar: float) -> float:
    """omega = (pi^2 / (3 r kbar))^(1/3)."""
    if r <= 0 or kbar <= 0:
        raise ParameterError("need r > 0 and kbar > 0")
    return (math.pi**2 / (3.0 * r * kbar)) ** (1.0 / 3.0)


def nonlinearity(r: float, kbar: float) -> float:
    """zeta = -(pi / (9 r^2 kbar^2))^(2/3), always negative."""
    if r <= 0 or kbar <= 0:
        raise ParameterError("need r > 0 and kbar > 0")
    return -((math.pi / (9.0 * r * r * kbar * kbar)) ** (2.0 / 3.0))


def energy_at_quantum_number(r: float, kbar: float) -> float:
    """Unperturbed energy at a (possibly fractional) quantum number r.

    Integer r uses the exact Airy zero; fractional r interpolates the
    zeros with a cubic spline in n.
    """
    from .modes import airy_zeros

    scale = (kbar * kbar / 2.0) ** (1.0 / 3.0)
    if float(r).is_integer() and r >= 1:
        from .modes import airy_zero

        return scale * airy_zero(int(r))
    from scipy.interpolate import CubicSpline

    n_hi = int(math.ceil(r)) + 8
    ns = np.arange(1, n_hi + 1)
    return float(scale * CubicSpline(ns, airy_zeros(n_hi))(r))


@dataclass(frozen=True)
class ResonanceData:
    r: float
    N: int
    N_raw: float
    E0: float
    E_N: float
    omega: float
    omega_N: float
    delta: float
    mu: float
    M: int = 1


def resonance_data(E_N: float, E0: float, kbar: float, omega: float, r: float = float("nan")) -> ResonanceData:
    """N = round(sqrt(2 E_N)/pi), omega_N = 1/N, Delta = 1/(1 - omega_N/omega),
    mu = -(kbar/4)(1/E0) sqrt(E_N/E0)."""
    if E_N <= 0 or E0 <= 0:
        raise ParameterError("resonance and mean energies must be positive")
    if omega <= 0 or kbar <= 0:
        raise ParameterError("need omega > 0 and kbar > 0")
    n_raw = math.sqrt(2.0 * E_N) / math.pi
    N = max(1, int(round(n_raw)))
    omega_N = 1.0 / N
    gap = 1.0 - omega_N / omega
    if abs(gap) < NEAR_RESONANCE_GUARD:
        raise NearResonanceError(f"|1 - omega_N/omega| = {abs(gap):.3g} is below {NEAR_RESONANCE_GUARD:g}; Delta diverges")
    mu = -(kbar / 4.0) / E0 * math.sqrt(E_N / E0)
    if abs(1.0 - mu * mu) < SINGULAR_GUARD:
        raise SingularityError("mu^2 = 1")
    return ResonanceData(r, N, n_raw, E0, E_N, omega, omega_N, 1.0 / gap, mu)


def matrix_element(E0: float, N: int) -> float:
    """V = -2 E0 / (N^2 pi^2), the large-N coupling."""
    if N < 1:
        raise ParameterError("N must be >= 1")
    return -2.0 * E0 / (N * N * math.pi**2)


def modification_factors(lam: float, E_N: float, mu: float) -> tuple[float, float]:
    """Fermi-accelerator factors (M_cl, M_Q)."""
    d = 1.0 - mu * mu
    if abs(d) < SINGULAR_GUARD:
        raise SingularityError(f"|1 - mu^2| = {abs(d):.3g}")
    if E_N <= 0:
        raise ParameterError("E_N must be positive")
    s = 0.125 * (lam / E_N) ** 2
    return s / d**2, s * (3.0 + mu * mu) / d**3


def secular_mu(N: int, kbar: float, zeta: float, delta: float, omega: float) -> float:
    return N * N * kbar * zeta * delta / (2.0 * omega)


def alpha_factor(lam: float, V: float, zeta: float, delta: float, omega: float) -> float:
    return 0.5 * (lam * V * zeta * delta**2 / omega**2) ** 2


def beta_factor(lam: float, V: float, N: int, zeta: float, kbar: float) -> float:
    return 0.5 * (4.0 * lam * V / (N * N * zeta * kbar * kbar)) ** 2


def secular_modification_factors(lam: float, V: float, zeta: float, delta: float, omega: float, mu: float) -> tuple[float, float]:
    """Generic factors: M_cl = -alpha/(1-mu^2)^2, M_Q = alpha (3+mu^2)/(1-mu^2)^3."""
    d = 1.0 - mu * mu
    if abs(d) < SINGULAR_GUARD:
        raise SingularityError(f"|1 - mu^2| = {abs(d):.3g}")
    a = alpha_factor(lam, V, zeta, delta, omega)
    return -a / d**2, a * (3.0 + mu * mu) / d**3


@dataclass
class RevivalEstimate:
    r: float
    N: int | None
    omega: float
    zeta: float
    delta: float
    mu: float
    M_cl: float
    M_Q: float
    T0_cl: float
    T0_Q: float
    Tl_cl: float
    Tl_Q: float
    regime: str
    alpha: float
    beta: float
    lam: float = 0.0
    kbar: float = 1.0
    factors: str = "fermi"
    T0_Q_secular: float = field(default=float("nan"))
    Tl_Q_secular: float = field(default=float("nan"))

    def row(self):
        return [self.r, self.N if self.N is not None else 0, self.omega, self.zeta, self.delta, self.mu,
                self.M_cl, self.M_Q, self.T0_cl, self.T0_Q, self.Tl_cl, self.Tl_Q, self.regime]

    @staticmethod
    def header():
        return ["r", "N", "omega", "zeta", "Delta", "mu", "M_cl", "M_Q", "T0_cl", "T0_Q", "Tl_cl", "Tl_Q", "regime"]


def _regime(zeta, alpha, beta, vanishing=1e-6):
    if abs(zeta) < vanishing:
        return "vanishing"
    return "weak" if alpha <= beta else "strong"


def recurrence_times(
    lam: float,
    r: float,
    kbar: float,
    resonance: ResonanceData | None = None,
    factors: str = "fermi",
    zeta: float | None = None,
    omega: float | None = None,
) -> RevivalEstimate:
    """Classical period and quantum revival time with and without driving.

    T0_cl = 2 pi/omega, T0_Q = 2 pi/(kbar |zeta|), Tl_cl = (1 - M_cl) T0_cl Delta,
    Tl_Q = (1 - M_Q) T0_Q.  ``factors`` selects the M factors:
    ``"fermi"``, ``"secular"`` (generic), ``"weak"`` (M_cl = -alpha,
    M_Q = 3 alpha) or ``"strong"`` (M_cl = M_Q = -beta).  With lam = 0 both
    factors vanish and Delta is 1.  ``T0_Q_secular`` = 4 pi/(kbar |zeta|)
    is the revival time implied by the second n-derivative of the
    spectrum; ``Tl_Q_secular`` applies the same M_Q to it.
    ``zeta``/``omega`` override the closed forms (e.g. to probe zeta -> 0).
    """
    if lam < 0:
        raise ParameterError("lam must be >= 0")
    w = classical_frequency(r, kbar) if omega is None else omega
    z = nonlinearity(r, kbar) if zeta is None else zeta
    T0_cl = 2.0 * math.pi / w
    T0_Q = 2.0 * math.pi / (kbar * abs(z)) if z != 0 else math.inf
    T0_Qs = 2.0 * T0_Q
    if lam == 0.0 or resonance is None:
        if lam != 0.0:
            raise ParameterError("a resonance is required when lam > 0")
        return RevivalEstimate(r, None, w, z, 1.0, 0.0, 0.0, 0.0, T0_cl, T0_Q, T0_cl, T0_Q,
                               _regime(z, 0.0, 0.0), 0.0, 0.0, lam, kbar, factors, T0_Qs, T0_Qs)
    res = resonance
    N = res.N
    delta = 1.0 / (1.0 - res.omega_N / w)
    V = matrix_element(res.E0, N)
    a = alpha_factor(lam, V, z, delta, w)
    b = beta_factor(lam, V, N, z, kbar) if z != 0 else math.inf
    mu = res.mu
    if factors == "fermi":
        M_cl, M_Q = modification_factors(lam, res.E_N, mu)
    elif factors == "secular":
        mu = secular_mu(N, kbar, z, delta, w)
        M_cl, M_Q = secular_modification_factors(lam, V, z, delta, w, mu)
    elif factors == "weak":
        M_cl, M_Q = -a, 3.0 * a
    elif factors == "strong":
        M_cl, M_Q = -b, -b
    else:
        raise ParameterError(f"unknown factor family {factors!r}")
    Tl_cl = (1.0 - M_cl) * T0_cl * delta
    Tl_Q = (1.0 - M_Q) * T0_Q
    return RevivalEstimate(r, N, w, z, delta, mu, M_cl, M_Q, T0_cl, T0_Q, Tl_cl, Tl_Q,
                           _regime(z, a, b), a, b, lam, kbar, factors, T0_Qs, (1.0 - M_Q) * T0_Qs)


@dataclass(frozen=True)
class MathieuSolution:
    a: float
    nu: float
    q: float
    truncation: int
    residual: float
    history: tuple = ()


def _floquet_matrix(nu, q, K):
    k = np.arange(-K, K + 1)
    return (nu + 2.0 * k) ** 2, np.full(2 * K, float(q))


def _cosine_matrix(m, q, K):
    """Even-solution bases for integer order m: cos(2kz) or cos((2k+1)z)."""
    if m % 2 == 0:
        d = (2.0 * np.arange(K + 1)) ** 2
        e = np.full(K, float(q))
        e[0] = math.sqrt(2.0) * q
    else:
        d = (2.0 * np.arange(K + 1) + 1.0) ** 2
        d[0] += q
        e = np.full(K, float(q))
    return d, e


def _track(nu, q, K, step):
    """Eigenvalue continued from a(q=0) = nu^2 by eigenvector overlap."""
    m = round(nu)
    integer = abs(nu - m) < 1e-12
    if integer:
        mk = abs(int(m))
        build = lambda qq: _cosine_matrix(mk, qq, K)
        start = mk // 2
    else:
        shift = 2 * round(nu / 2.0)
        nu_r = nu - shift
        build = lambda qq: _floquet_matrix(nu_r, qq, K)
        start = K + shift // 2
    n_steps = max(1, int(math.ceil(abs(q) / step)))
    qs = np.linspace(0.0, q, n_steps + 1)
    d, e = build(0.0)
    vec = np.zeros(d.size)
    vec[start] = 1.0
    a = d[start]
    for qq in qs[1:]:
        d, e = build(qq)
        w, v = eigh_tridiagonal(d, e)
        j = int(np.argmax(np.abs(v.T @ vec)))
        a, vec = w[j], v[:, j]
    return float(a), vec


def mathieu_char_value(nu: float, q: float, truncation: int | None = None, tol: float = 1e-10, step: float = 0.25, max_doublings: int = 6) -> MathieuSolution:
    """Characteristic value a_nu(q) of y'' + (a - 2q cos 2z) y = 0.

    Fractional nu uses the Floquet basis exp(i(nu+2k)z), k = -K..K.
    Integer nu uses the even (cosine) basis, i.e. the a_m branch.  The
    branch is followed from q = 0 in steps of at most ``step`` by
    eigenvector overlap.  The truncation is doubled until the value
    changes by less than ``tol``.
    """
    nu = float(nu)
    if not (math.isfinite(nu) and math.isfinite(q)):
        raise ParameterError("nu and q must be finite")
    nu = abs(nu)
    K_min = int(math.ceil(20 + nu + 2.0 * math.sqrt(abs(q))))
    K = max(K_min, int(truncation) if truncation is not None else K_min)
    if q == 0.0:
        return MathieuSolution(nu * nu, nu, 0.0, K, 0.0)
    hist = []
    a_prev, _ = _track(nu, q, K, step)
    hist.append((K, a_prev))
    for _ in range(max_doublings):
        K2 = 2 * K
        a2, _ = _track(nu, q, K2, step)
        hist.append((K2, a2))
        res = abs(a2 - a_prev)
        if res <= tol * max(1.0, abs(a2)):
            return MathieuSolution(a_prev, nu, q, K, res, tuple(hist))
        K, a_prev = K2, a2
    raise ConvergenceError("Mathieu characteristic value did not converge under truncation doubling", history=hist)


def mathieu_nu(n: float, r: float, N: int, omega: float, zeta: float, kbar: float) -> float:
    return 2.0 * (n - r) / N + 2.0 * (omega - 1.0 / N) / (N * zeta * kbar)


def mathieu_q(lam: float, V: float, N: int, zeta: float, kbar: float) -> float:
    return 4.0 * lam * V / (N * N * zeta * kbar * kbar)


def quasi_energy(nu: float, q: float, resonance: ResonanceData | int, kbar: float, zeta: float, H0: float = 0.0, omega: float | None = None) -> float:
    """E_nu = (kbar^2 N^2 zeta / 8) a_nu(q) - (omega - 1/N)^2 / (2 zeta) + H0.

    ``H0`` is the constant of the expansion about r; it shifts all quasi
    energies equally and drops out of recurrence times.
    """
    if isinstance(resonance, ResonanceData):
        N = resonance.N
        omega = resonance.omega if omega is None else omega
    else:
        N = int(resonance)
        if omega is None:
            raise ParameterError("omega is required when only N is given")
    if zeta == 0.0:
        raise SingularityError("vanishing nonlinearity: the Mathieu reduction does not apply")
    a = mathieu_char_value(nu, q).a
    return kbar * kbar * N * N * zeta / 8.0 * a - (omega - 1.0 / N) ** 2 / (2.0 * zeta) + H0


def quasi_energy_n(n: float, r: float, lam: float, kbar: float, resonance: ResonanceData, H0: float = 0.0) -> float:
    """Quasi energy as a function of the quantum number n (nu and q from r, lam)."""
    w = classical_frequency(r, kbar)
    z = nonlinearity(r, kbar)
    N = resonance.N
    V = matrix_element(resonance.E0, N)
    nu = mathieu_nu(n, r, N, w, z, kbar)
    q = mathieu_q(lam, V, N, z, kbar)
    return quasi_energy(nu, q, N, kbar, z, H0, omega=w)


@dataclass
class ResonanceCenter:
    z: float
    p: float
    N: int
    trace: float
    energy: float
    half_width: float
    elliptic: bool


def _unperturbed_bounce_delay(z, p, params, T):
    """Time from (z, p) until the next lower turning point of the lam=0 orbit."""
    from .classical import integrate_trajectory
    from .core import PhasePoint

    sp = params.with_lambda(0.0)
    n = 4000
    tr = integrate_trajectory(PhasePoint(z, p, 0.0), 1.05 * T, 1.05 * T / n, sp)
    s = np.flatnonzero((tr.p[:-1] < 0.0) & (tr.p[1:] >= 0.0))
    if s.size == 0:
        raise ConvergenceError("no bounce found within one period")
    i = s[0]
    f = -tr.p[i] / (tr.p[i + 1] - tr.p[i])
    return float(tr.t[i] + f * (tr.t[i + 1] - tr.t[i]))


def resonance_center(N: int, params, guess: tuple[float, float] | None = None, n_steps: int = 4000, max_iter: int = 30) -> ResonanceCenter:
    """Elliptic fixed point of the stroboscopic map over N drive periods.

    Newton iteration on the flow map P(z, p) - (z, p) with a
    finite-difference monodromy matrix.  The half width in energy is the
    pendulum estimate omega_N * 2 sqrt(lam |V| / |d omega/dI|), with V the
    large-N coupling and d omega/dI from the soft-wall period.
    """
    from .classical import integrate_trajectory, unperturbed_period
    from .core import PhasePoint

    T = 2.0 * math.pi * N
    dt = T / n_steps

    def P(x):
        tr = integrate_trajectory(PhasePoint(x[0], x[1], 0.0), T, dt, params, stride=n_steps)
        return np.array([tr.z[-1], tr.p[-1]])

    if guess is None:
        # hard-wall orbit bouncing with speed N pi at drive phase pi/2, seen pi/2 earlier
        u = N * math.pi
        guess = (0.5 * math.pi * u - 0.125 * math.pi**2, 0.5 * math.pi - u)
    x = np.array(guess, dtype=float)
    h = 1e-6
    J = None
    for _ in range(max_iter):
        f = P(x) - x
        J = np.column_stack([(P(x + d) - P(x - d)) / (2 * h) for d in (np.array([h, 0.0]), np.array([0.0, h]))])
        dx = np.linalg.solve(J - np.eye(2), -f)
        step = np.linalg.norm(dx)
        if step > 5.0:
            dx *= 5.0 / step
        x = x + dx
        if np.linalg.norm(dx) < 1e-10:
            break
    else:
        raise ConvergenceError("stroboscopic fixed point not found")
    tr = float(np.trace(J))
    sp0 = params.with_lambda(0.0)
    E = float(sp0.hamiltonian(x[0], x[1], 0.0))
    # d omega / dI = omega * d omega / dE on the soft-wall orbit family
    def omega_at(Eq):
        from scipy.optimize import brentq

        zt = brentq(lambda z: float(sp0.potential(z, 0.0)) - Eq, 0.0, Eq + 1.0)
        return 2.0 * math.pi / unperturbed_period(zt, 0.0, sp0)

    dE = 1e-3 * E
    w = omega_at(E)
    dw = (omega_at(E + dE) - omega_at(E - dE)) / (2 * dE) * w
    V = matrix_element(E, N)
    half = (1.0 / N) * 2.0 * math.sqrt(params.lam * abs(V) / abs(dw)) if dw != 0 else math.inf
    return ResonanceCenter(float(x[0]), float(x[1]), N, tr, E, half, abs(tr) < 2.0)


def resonance_center_evolution_flag(z0: float, p0: float, lam: float, resonance: ResonanceData | int | None, params=None, fraction: float = 0.5) -> str:
    """``"harmonic-revival"`` when (z0, p0) at t = 0 lies in the harmonic core of the resonance.

    The point is placed in pendulum coordinates relative to the elliptic
    centre: h = (dE / half_width)^2 + sin^2(dpsi / 2), where dpsi is the
    resonance-angle offset obtained from the difference in time to the
    next bounce.  The core is h < fraction^2.
    """
    from .core import ScaledParams

    if lam == 0.0 or resonance is None:
        return "generic"
    N = resonance.N if isinstance(resonance, ResonanceData) else int(resonance)
    sp = (params or ScaledParams()).with_lambda(lam)
    try:
        c = resonance_center(N, sp, guess=(z0, p0))
    except (ConvergenceError, np.linalg.LinAlgError):
        return "generic"
    if not c.elliptic:
        return "generic"
    from .classical import unperturbed_period

    sp0 = sp.with_lambda(0.0)
    E0 = float(sp0.hamiltonian(z0, p0, 0.0))
    try:
        T = unperturbed_period(z0, p0, sp0)
        d0 = _unperturbed_bounce_delay(z0, p0, sp, T)
        dc = _unperturbed_bounce_delay(c.z, c.p, sp, 2.0 * math.pi * N)
    except Exception:
        return "generic"
    # resonance angle N theta - t; theta advances 2 pi per N drive periods
    dpsi = dc - d0
    h = ((E0 - c.energy) / c.half_width) ** 2 + math.sin(0.5 * dpsi) ** 2
    return "harmonic-revival" if h < fraction * fraction else "generic"
