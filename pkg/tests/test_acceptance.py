"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The heavy physics runs are marked ``slow``; they still run by default
(deselect with ``-m "not slow"``).  A failing criterion fails its test.
"""

import csv
import math
from pathlib import Path

import numpy as np
import pytest

from fermi_forge.analysis import detect_revival_peaks, lambda_scan, linear_fit, scan_peak_near
from fermi_forge.classical import iterate_standard_map, jacobian_determinant, standard_map_raw
from fermi_forge.cli import EXIT_OK, main
from fermi_forge.config import RunConfig
from fermi_forge.core import GridSpec, ScaledParams, gaussian_packet
from fermi_forge.io import read_csv
from fermi_forge.modes import airy_zeros, cavity_mode, mean_quantum_number, stationary_residual, wigner
from fermi_forge.quantum import (
    ObservableSeries,
    PropagationPlan,
    evolve,
    excess_kurtosis,
    localization_window,
    momentum_distribution,
    quantum_break_time,
)
from fermi_forge.revivals import (
    classical_frequency,
    energy_at_quantum_number,
    mathieu_char_value,
    mathieu_nu,
    mathieu_q,
    matrix_element,
    modification_factors,
    beta_factor,
    nonlinearity,
    recurrence_times,
    resonance_data,
)
from oracles import airy_zero_bisect, crank_nicolson, mathieu_a_cosine

KBAR = 4.0

LOCALIZATION_CFG = """\
kbar = 4
lambda = {lam}
kappa = 0.5
v0 = 4
z0 = 14.5
p0 = 0
dz = 2
seed = 11
grid_n = 16384
grid_zmin = -12
grid_zmax = 600
t_final = 3200
dt = 0.025
stride = 100
boundary = hard-cap
n_particles = 5000
"""

CLASSICAL_CFG = LOCALIZATION_CFG.replace("dt = 0.025\nstride = 100", "dt = 0.05\nstride = 200")


def _cli(tmp, name, cmd, text):
    cfg = tmp / f"{name}.cfg"
    cfg.write_text(text)
    out = tmp / name
    code = main([cmd, "--config", str(cfg), "--out", str(out), "--threads", "1"])
    assert code == EXIT_OK, f"{cmd} exited with {code}"
    return out


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def localization_runs(workdir):
    """Quantum and matched classical lam=0.8 runs through the CLI."""
    text_q = LOCALIZATION_CFG.format(lam=0.8)
    text_c = CLASSICAL_CFG.format(lam=0.8)
    return {
        "quantum": _cli(workdir, "loc_q", "quantum", text_q),
        "classical": _cli(workdir, "loc_c", "classical", text_c),
        "text_q": text_q,
        "text_c": text_c,
    }


def _column(path, name):
    header, data = read_csv(path)
    return data[:, header.index(name)]


def test_criterion_01_standard_map_area(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for wp, phi, K in zip(rng.uniform(-50, 50, 100), rng.uniform(0, 2 * math.pi, 100), rng.uniform(0, 12, 100)):
        det = jacobian_determinant(lambda a, b: standard_map_raw(a, b, K), (wp, phi), h=1e-5, angular=())
        worst = max(worst, abs(det - 1))
    assert report(1, worst <= 1e-9, f"max |det - 1| over 100 points = {worst:.2e} (tol 1e-9)")


def test_criterion_02_diffusion_law(report):
    K = 5.0
    rng = np.random.default_rng(5)
    W, _ = iterate_standard_map(np.zeros(10_000), rng.uniform(0, 2 * math.pi, 10_000), K, 500)
    slope, _, _ = linear_fit(np.arange(501), W.var(axis=1))
    rel = abs(slope - K * K / 2) / (K * K / 2)
    assert report(2, rel <= 0.3, f"D = {slope:.3f} vs K^2/2 = {K * K / 2:.3f}, rel dev {rel:.3f} (tol 0.3)")


@pytest.mark.slow
def test_criterion_03_classical_lambda_scan(report):
    cfg = RunConfig(z0=14.5, p0=0.0, dz=2.0, n_particles=2000, seed=3, dt=0.05)
    lams = np.round(np.arange(0.0, 4.0 + 1e-9, 0.1), 10)
    res = lambda_scan(cfg, lams, engine="classical", t_final=500.0)
    dp = res.dp
    found = []
    ok = bool(np.all(np.isfinite(dp)))
    for lm in (1.716, 3.219):
        peak = scan_peak_near(res, lm, 0.2)
        i = int(np.flatnonzero(res.lams == peak)[0])
        local = 0 < i < len(dp) - 1 and dp[i] > dp[i - 1] and dp[i] > dp[i + 1]
        found.append(f"{peak:.1f}{'' if local else '(edge)'}")
        ok &= local
    low = dp[res.lams < 0.24]
    spread = float(np.max(np.abs(low - low.mean())) / low.mean())
    ok &= spread <= 0.1
    assert report(3, ok, f"maxima near 1.716/3.219 at {found}; low-lambda spread {spread:.3f} (tol 0.1)")


def test_criterion_04_window_constants(report):
    w = localization_window(0.8, KBAR)
    ok = round(w.lambda_l, 4) == 0.2429 and round(w.lambda_u, 3) == 1.0
    assert report(4, ok, f"(lambda_l, lambda_u) = ({w.lambda_l:.4f}, {w.lambda_u:.3f})")


@pytest.mark.slow
def test_criterion_05_dynamical_localization(report, localization_runs):
    q = localization_runs["quantum"]
    c = localization_runs["classical"]
    with open(q / "localization.csv") as fh:
        r2_p = float(next(csv.DictReader(fh))["r2_p"])
    t = _column(q / "observables.csv", "t")
    vp = _column(q / "observables.csv", "var_p")
    ratio = vp[np.argmin(abs(t - 3200))] / vp[np.argmin(abs(t - 1600))]
    tc = _column(c / "dispersion.csv", "t")
    vc = _column(c / "dispersion.csv", "var_p")
    _, _, r2_c = linear_fit(tc, vc)
    ok = r2_p >= 0.9 and ratio < 1.2 and r2_c >= 0.9
    assert report(5, ok, f"tail R^2 = {r2_p:.3f}, var_p(3200)/var_p(1600) = {ratio:.3f}, classical R^2 = {r2_c:.3f}")


@pytest.mark.slow
def test_criterion_06_delocalization(report):
    # tall grid: exponential tails otherwise wrap through the periodic box
    sp = ScaledParams(kbar=KBAR, lam=1.2, kappa=0.5, v0=4.0)
    psi = gaussian_packet(14.5, 0.0, 2.0, GridSpec(-12.0, 5000.0, 65536), sp)
    res = evolve(psi, PropagationPlan(dt=0.025, t_final=3200.0, stride=400, boundary="absorber-off"), sp)
    s = res.series
    ratio = s.var_p[s.at(3200)] / s.var_p[s.at(800)]
    p, P = momentum_distribution(res.final)
    kurt = excess_kurtosis(p, P)
    ok = ratio >= 2 and abs(kurt) < abs(kurt - 3)
    assert report(6, ok, f"var_p(3200)/var_p(800) = {ratio:.2f} (>= 2); excess kurtosis = {kurt:.2f} (needs < 1.5); "
                         f"max edge probability {s.edge_probability.max():.1e}")


@pytest.mark.slow
def test_criterion_07_break_time(report, localization_runs):
    q = localization_runs["quantum"] / "observables.csv"
    c = localization_runs["classical"] / "dispersion.csv"
    header, data = read_csv(q)
    col = {k: data[:, i] for i, k in enumerate(header)}
    n = len(col["t"])
    series = ObservableSeries(col["t"], col["norm"], col["mean_z"], col["mean_p"], col["var_z"], col["var_p"],
                              col["C2"], np.zeros(n))
    bt = quantum_break_time(0.8, KBAR, series, (_column(c, "t"), _column(c, "var_p")))
    ok = bt.empirical is not None and 125.0 <= bt.empirical <= 500.0
    assert report(7, ok, f"empirical t* = {bt.empirical} (target 250 within x2); formula lam^2/kbar^2 = {bt.formula:.3f} (reported only)")


def test_criterion_08_cavity_modes(report):
    grid = GridSpec(-4.0, 60.0, 4096)
    zerr = max(abs(a - airy_zero_bisect(n)) for n, a in enumerate(airy_zeros(3), 1))
    modes = [cavity_mode(n, KBAR, grid) for n in (1, 2, 3)]
    res = max(stationary_residual(m) for m in modes)
    G = np.array([[np.dot(a.psi, b.psi) * grid.dz for b in modes] for a in modes])
    orth = float(np.max(np.abs(G - np.eye(3))))
    ok = zerr <= 1e-8 and res < 1e-6 and orth <= 1e-8
    assert report(8, ok, f"zero error {zerr:.1e}, residual {res:.1e}, orthonormality {orth:.1e}")


def test_criterion_09_wigner(report):
    grid = GridSpec(-4.0, 40.0, 1024)
    worst = 0.0
    negative = []
    states = [cavity_mode(n, KBAR, grid) for n in (1, 2, 3)]
    packet = gaussian_packet(15.0, 1.5, 1.5, grid, KBAR)
    for k, st in enumerate(states + [packet]):
        psi = st.psi
        W = wigner(psi, KBAR, grid)
        sel = np.abs(W.p) < 15.0
        phi = np.exp(-1j * np.outer(W.p[sel], grid.z) / KBAR) @ psi * grid.dz / math.sqrt(2 * math.pi * KBAR)
        errs = (
            abs(W.total() - 1),
            np.max(np.abs(W.z_marginal() - np.abs(psi) ** 2)),
            np.max(np.abs(W.p_marginal()[sel] - np.abs(phi) ** 2)),
        )
        worst = max(worst, *errs)
        if k in (1, 2):
            negative.append(W.min())
    ok = worst <= 1e-6 and all(m < 0 for m in negative)
    assert report(9, ok, f"max normalisation/marginal error {worst:.1e}; min W for n=2,3: {negative[0]:.2e}, {negative[1]:.2e}")


@pytest.mark.slow
def test_criterion_10_split_step_vs_implicit(report):
    grid = GridSpec(-10.0, 70.0, 2048)
    sp = ScaledParams(kbar=KBAR, lam=0.5, kappa=0.5, v0=4.0)
    psi = gaussian_packet(14.5, 0.0, 2.0, grid, sp)

    def final(dt):
        return evolve(psi, PropagationPlan(dt=dt, t_final=50.0, stride=int(round(50 / dt))), sp).final.psi

    ss = final(0.01)
    cn = crank_nicolson(psi.psi, grid.z, 50.0, 0.005, KBAR, 0.5, sp.kappa, sp.v0)
    overlap = abs(np.vdot(cn, ss) * grid.dz) ** 2
    ref = final(0.00125)
    e1 = np.linalg.norm(final(0.02) - ref)
    e2 = np.linalg.norm(ss - ref)
    ok = overlap >= 0.999 and e1 / e2 >= 4
    assert report(10, ok, f"overlap with Crank-Nicolson {overlap:.6f}; error reduction per dt halving {e1 / e2:.2f}")


def test_criterion_11_revival_identities(report):
    r = 12.0
    E0 = energy_at_quantum_number(r, KBAR)
    w = classical_frequency(r, KBAR)
    res = resonance_data(E0, E0, KBAR, w, r)
    zero = recurrence_times(0.0, r, KBAR)
    q = mathieu_q(0.0, matrix_element(E0, res.N), res.N, nonlinearity(r, KBAR), KBAR)
    nu = mathieu_nu(int(r), r, res.N, w, nonlinearity(r, KBAR), KBAR)
    chain = max(abs(zero.Tl_cl - zero.T0_cl) / zero.T0_cl, abs(zero.Tl_Q - zero.T0_Q) / zero.T0_Q)
    chain_ok = q == 0 and mathieu_char_value(nu, q).a == nu * nu and chain <= 1e-12 and zero.M_cl == zero.M_Q == 0
    e = recurrence_times(0.3, r, KBAR, res, factors="weak")
    weak = abs(3 * e.Tl_cl * e.T0_Q + e.delta * e.T0_cl * e.Tl_Q - 4 * e.delta * e.T0_Q * e.T0_cl) / abs(4 * e.delta * e.T0_Q * e.T0_cl)
    e = recurrence_times(0.3, r, KBAR, res, factors="strong")
    strong = abs(e.Tl_cl * e.T0_Q - e.delta * e.T0_cl * e.Tl_Q) / abs(e.Tl_cl * e.T0_Q)
    mc, mq = modification_factors(0.3, 10.0, 1e-7)
    b = [beta_factor(0.3, -0.4, 3, -0.02, k) * k**4 for k in (1.0, 2.0, 4.0)]
    beta_ok = b[1] == b[0] or abs(b[1] - b[0]) <= 4 * np.spacing(b[0])
    beta_ok &= abs(b[2] - b[0]) <= 4 * np.spacing(b[0])
    ok = chain_ok and weak <= 1e-9 and strong <= 1e-9 and abs(mq / mc - 3) < 1e-6 and beta_ok
    assert report(11, ok, f"limit chain {chain:.1e}; weak {weak:.1e}; strong {strong:.1e}; "
                          f"M_Q/M_cl at mu=1e-7 {mq / mc:.9f}; beta*kbar^4 spread {max(b) - min(b):.1e}")


def test_criterion_12_mathieu(report):
    free = all(mathieu_char_value(nu, 0.0).a == nu * nu for nu in (0.0, 0.5, 1.0, 2.3, 7.0))
    a50 = mathieu_char_value(0.0, 1.0, truncation=50).a
    a100 = mathieu_char_value(0.0, 1.0, truncation=100).a
    oracle = mathieu_a_cosine(0, 1.0, 80)
    ok = free and abs(a50 - a100) <= 1e-10 and abs(a50 - oracle) <= 1e-10
    assert report(12, ok, f"a_nu(0) = nu^2: {free}; a_0(1) = {a50:.14f}, K50 vs K100 {abs(a50 - a100):.1e}, "
                          f"oracle diff {abs(a50 - oracle):.1e}")


def _revival_run(lam, t_final):
    sp = ScaledParams(kbar=KBAR, lam=lam, kappa=0.5, v0=4.0)
    psi = gaussian_packet(14.5, 1.45, 2.0, GridSpec(-12.0, 150.0, 4096), sp)
    return psi, evolve(psi, PropagationPlan(dt=0.01, t_final=t_final, stride=5), sp).series


@pytest.mark.slow
def test_criterion_13_revival_benchmark(report):
    _, s3 = _revival_run(0.3, 60.0)
    peaks = detect_revival_peaks(s3)
    first = peaks[0] if peaks else math.nan
    dev = abs(first - 4 * math.pi) / (4 * math.pi)
    psi0, s0 = _revival_run(0.0, 500.0)
    est = recurrence_times(0.0, mean_quantum_number(psi0), KBAR)
    # envelope: max C^2 over consecutive windows one classical period long
    n_win = int(s0.t[-1] // est.T0_cl)
    edges = est.T0_cl * np.arange(n_win + 1)
    env = np.array([s0.C2[(s0.t >= a) & (s0.t < b)].max() for a, b in zip(edges[:-1], edges[1:])])
    k = 1 + int(np.argmin(env[1:]))
    floor, t_floor = env[k], 0.5 * (edges[k] + edges[k + 1])
    # collapse: envelope sinks 0.2 below its first window; late revival: a detected peak 0.2 above the floor
    collapsed = floor <= env[0] - 0.2
    late = [t for t in detect_revival_peaks(s0) if t > t_floor and s0.C2[s0.at(t)] >= floor + 0.2]
    T0Q = est.T0_Q
    ok = dev <= 0.05 and collapsed and bool(late)
    late_txt = f"{late[0]:.1f} (C^2 {s0.C2[s0.at(late[0])]:.2f})" if late else "none"
    assert report(13, ok, f"lam=0.3 first peak {first:.3f} vs 4pi {4 * math.pi:.3f}, dev {dev:.3f} (tol 0.05); "
                          f"lam=0 collapse floor {floor:.2f} at t={t_floor:.1f}, late revival {late_txt}, T0_Q = {T0Q:.1f}")


@pytest.mark.slow
def test_criterion_14_determinism(report, localization_runs, workdir):
    a_q, a_c = localization_runs["quantum"], localization_runs["classical"]
    b_q = _cli(workdir, "loc_q2", "quantum", localization_runs["text_q"])
    b_c = _cli(workdir, "loc_c2", "classical", localization_runs["text_c"])
    names = []
    same = True
    for a, b in ((a_q, b_q), (a_c, b_c)):
        for f in sorted(Path(a).glob("*.csv")):
            names.append(f.name)
            same &= f.read_bytes() == (b / f.name).read_bytes()
    assert report(14, same and len(names) >= 5, f"{len(names)} CSV files compared byte for byte: {'identical' if same else 'differ'}")
