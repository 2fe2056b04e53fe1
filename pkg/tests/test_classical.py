import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from fermi_forge.classical import (
    K_CR,
    LAMBDA_L,
    BounceState,
    MapParams,
    accelerating_windows,
    bounce_map_energy,
    bounce_map_raw,
    bounce_map_step,
    flight_time,
    force,
    in_accelerating_window,
    integrate_trajectory,
    iterate_standard_map,
    jacobian_determinant,
    lyapunov_exponent,
    map_lyapunov,
    max_stable_dt,
    propagate_ensemble,
    standard_map_raw,
    standard_map_step,
    survival_probability,
    unperturbed_period,
)
from fermi_forge.core import PhasePoint, ScaledParams, uniform_cell_ensemble
from fermi_forge.errors import ParameterError, StepSizeError, TrappedAtWallError


def test_force_examples():
    sp = ScaledParams(lam=0.0, kappa=0.5, v0=4.0)
    assert force(0.0, 1.234, sp) == pytest.approx(1.0)
    assert force(500.0, 0.0, sp) == pytest.approx(-1.0)
    sp = ScaledParams(lam=0.3, kappa=0.5, v0=4.0)
    t = 0.7
    z = 0.3 * math.sin(t) + math.log(0.5 * 4.0) / 0.5
    assert abs(force(z, t, sp)) < 1e-14
    f, clamped = force(-5000.0, 0.0, sp, return_flag=True)
    assert clamped and math.isfinite(f)


def test_free_fall_exact():
    sp = ScaledParams(lam=0.0, v0=0.0)
    tr = integrate_trajectory(PhasePoint(10.0, 2.0), 4.0, 0.01, sp)
    np.testing.assert_allclose(tr.z, 10 + 2 * tr.t - tr.t**2 / 2, atol=1e-10)


def test_energy_conservation():
    sp = ScaledParams(lam=0.0, kappa=0.5, v0=4.0)
    tr = integrate_trajectory(PhasePoint(14.5, 0.0), 100.0, 0.005, sp, stride=20)
    assert np.max(np.abs(tr.energy - tr.energy[0]) / abs(tr.energy[0])) < 1e-8


def test_step_refusal():
    sp = ScaledParams(lam=0.0, kappa=5.0, v0=4.0)
    limit = max_stable_dt(20.0, sp)
    with pytest.raises(StepSizeError) as exc:
        integrate_trajectory(PhasePoint(14.5, 0.0), 10.0, 10 * limit, sp)
    assert exc.value.suggested_dt is not None


def test_resonance_orbit_returns_near_4pi():
    sp = ScaledParams(lam=0.3)
    tr = integrate_trajectory(PhasePoint(14.5, 1.45), 20.0, 0.001, sp, stride=10)
    d = np.hypot(tr.z - 14.5, tr.p - 1.45)
    sel = tr.t > 8
    t_ret = tr.t[sel][np.argmin(d[sel])]
    assert abs(t_ret - 4 * math.pi) / (4 * math.pi) < 0.06


def test_unperturbed_period_hard_wall_limit():
    sp = ScaledParams(lam=0.0, kappa=60.0, v0=1e3)
    # hard wall at z_w: ballistic period 2 sqrt(2 (E - z_w))
    T = unperturbed_period(14.5, 0.0, sp)
    zw = math.log(1e3 / 14.5) / 60.0
    assert T == pytest.approx(2 * math.sqrt(2 * (14.5 - zw)), rel=2e-3)


def test_flight_time_ballistic():
    assert flight_time(BounceState(5.0, 0.3), 0.0) == pytest.approx(10.0, abs=1e-12)


def test_flight_time_oracle():
    lam = 0.1
    u = 5.0 + 2 * lam
    dt = flight_time((u, 0.0), lam)
    root = brentq(lambda x: u * x - x * x / 2 - lam * (math.sin(x) - 0.0), 5.0, 15.0, xtol=1e-14)
    assert dt == pytest.approx(root, abs=1e-10)
    assert abs(u * dt - dt * dt / 2 - lam * math.sin(dt)) < 1e-10
    s = bounce_map_step(BounceState(5.0, 0.0), lam)
    assert s.p == pytest.approx(root - u, abs=1e-10)


def test_trapped_at_wall():
    with pytest.raises(TrappedAtWallError):
        flight_time(BounceState(0.1, 0.0), 0.5)


def test_bounce_map_zero_drive():
    s = bounce_map_step(BounceState(5.0, 0.0), 0.0)
    assert s.p == pytest.approx(5.0) and s.phi == pytest.approx(10.0 % (2 * math.pi))
    assert s.i == 1


@settings(max_examples=40, deadline=None)
@given(st.floats(2.0, 40.0), st.floats(0.0, 2 * math.pi), st.floats(0.0, 0.6))
def test_bounce_phase_bookkeeping(p, phi, lam):
    s = BounceState(p, phi)
    u = p + 2 * lam * math.cos(s.phi)
    dt = flight_time((u, s.phi), lam)
    s1 = bounce_map_step(s, lam)
    assert s1.p == pytest.approx(dt - u, abs=1e-9)
    assert abs(math.remainder(s1.phi - s.phi - dt, 2 * math.pi)) < 1e-9


def test_bounce_jacobian():
    lam = 0.3
    # the (p, phi) map is not area preserving; its determinant is the ratio of relative impact speeds
    p, phi = 6.0, 1.0
    p1, phi1 = bounce_map_raw(p, phi, lam)
    det = jacobian_determinant(lambda a, b: bounce_map_raw(a, b, lam), (p, phi), h=1e-6, angular=())
    assert det == pytest.approx((p + lam * math.cos(phi)) / (p1 + lam * math.cos(phi1)), rel=1e-6)
    w = 0.5 * (p + lam * math.cos(phi)) ** 2
    detw = jacobian_determinant(lambda a, b: bounce_map_energy(a, b, lam), (w, phi), h=1e-6, angular=())
    assert detw == pytest.approx(1.0, abs=1e-6)


def test_large_amplitude_matches_standard_map():
    lam = 0.05
    p, phi = 50 * lam * 20, 0.3
    s = BounceState(p, phi)
    wp, ph = 2 * p, phi
    for _ in range(20):
        s = bounce_map_step(s, lam)
        wp, ph = standard_map_raw(wp, ph, 4 * lam)
    assert 2 * s.p == pytest.approx(wp, rel=0.05)


def test_standard_map_basics():
    wp, phi = standard_map_step(1.3, 0.4, 0.0)
    assert wp == 1.3 and phi == pytest.approx(1.7)
    assert K_CR == 0.9716 and LAMBDA_L == pytest.approx(0.2429)
    assert MapParams.from_lambda(0.5).K == 2.0
    with pytest.raises(ParameterError):
        MapParams(K=1.0, lam=0.5)


def test_standard_map_area_preserving():
    rng = np.random.default_rng(0)
    for wp, phi, K in zip(rng.uniform(-20, 20, 100), rng.uniform(0, 2 * math.pi, 100), rng.uniform(0, 10, 100)):
        det = jacobian_determinant(lambda a, b: standard_map_raw(a, b, K), (wp, phi), h=1e-5, angular=())
        assert abs(det - 1) < 1e-9


def test_dissipative_map_determinant():
    det = jacobian_determinant(lambda a, b: (0.5 * a, b + a), (1.0, 2.0), angular=())
    assert det == pytest.approx(0.5, abs=1e-9)


def test_standard_map_diffusion():
    rng = np.random.default_rng(1)
    K = 5.0
    W, _ = iterate_standard_map(np.zeros(10000), rng.uniform(0, 2 * math.pi, 10000), K, 500)
    j = np.arange(501)
    slope = np.polyfit(j, W.var(axis=1), 1)[0]
    assert abs(slope - K * K / 2) / (K * K / 2) < 0.3


def test_map_lyapunov_large_k():
    L, series = map_lyapunov(10.0, 0.1, 0.2, 20000)
    assert abs(L - math.log(5.0)) < 0.1
    assert series[-1][0] == 20000


def test_flow_lyapunov_regular_and_chaotic():
    reg = lyapunov_exponent(PhasePoint(14.5, 0.0), 20000.0, 20.0, ScaledParams(lam=0.1))
    assert abs(reg.L) < 0.01
    ch = lyapunov_exponent(PhasePoint(14.5, 0.0), 20000.0, 20.0, ScaledParams(lam=0.5))
    # positive and well separated from the regular estimate
    assert ch.L > 0.005 and ch.L > 10 * abs(reg.L)


def test_accelerating_windows():
    w = accelerating_windows(1.0)
    assert w[0].lo == pytest.approx(1.5708, abs=1e-4) and w[0].hi == pytest.approx(1.8621, abs=1e-4)
    assert w[0].lambda_m == pytest.approx(1.716, abs=1e-3)
    assert w[1].lo == pytest.approx(3.1416, abs=1e-4) and w[1].hi == pytest.approx(3.2969, abs=1e-4)
    assert w[1].lambda_m == pytest.approx(3.219, abs=1e-3)
    assert in_accelerating_window(0.5) is None
    assert in_accelerating_window(1.7).s == 0.5
    with pytest.raises(ParameterError):
        accelerating_windows(0.25)


def test_ensemble_linear_growth_and_determinism():
    e = uniform_cell_ensemble(14.5, 0.0, 2.0, 1.0, 1000, seed=5)
    sp = ScaledParams(lam=0.8)
    run = propagate_ensemble(e, 1600.0, 0.05, sp, sample_every=40.0)
    assert run.n_failed == 0
    t, v = run.times, run.var_p
    a, b = np.polyfit(t, v, 1)
    r2 = 1 - ((v - (a * t + b)) ** 2).sum() / ((v - v.mean()) ** 2).sum()
    assert a > 0 and r2 >= 0.9
    short = uniform_cell_ensemble(14.5, 0.0, 2.0, 1.0, 200, seed=5)
    run = propagate_ensemble(short, 200.0, 0.05, sp, sample_every=20.0)
    again = propagate_ensemble(short, 200.0, 0.05, sp, sample_every=20.0)
    np.testing.assert_array_equal(run.Z, again.Z)
    np.testing.assert_array_equal(run.P, again.P)


def test_ensemble_bounded_without_drive():
    e = uniform_cell_ensemble(14.5, 0.0, 2.0, 1.0, 400, seed=6)
    run = propagate_ensemble(e, 400.0, 0.05, ScaledParams(lam=0.0), sample_every=20.0)
    assert run.var_p.max() < 3 * max(run.var_p[len(run.var_p) // 4:].min(), 1.0)
    E0 = 0.5 * e.p**2 + e.z + 4 * np.exp(-0.5 * e.z)
    E1 = 0.5 * run.final.p**2 + run.final.z + 4 * np.exp(-0.5 * run.final.z)
    assert np.max(np.abs(E1 - E0) / E0) < 1e-4


def test_survival():
    e = uniform_cell_ensemble(14.5, 0.0, 0.5, 0.3, 200, seed=2)
    whole = survival_probability(e, (-1e9, 1e9, -1e9, 1e9), 100.0, 0.1, ScaledParams(lam=0.8))
    assert np.all(whole.P == 1.0)
    kam = survival_probability(e, (-5.0, 40.0, -10.0, 10.0), 500.0, 0.1, ScaledParams(lam=0.1))
    assert kam.P.min() >= 0.9
    mixed = survival_probability(e, (-5.0, 25.0, -8.0, 8.0), 500.0, 0.1, ScaledParams(lam=0.8))
    assert mixed.P[-1] < 1.0
    assert math.isfinite(mixed.tail_slope()) or mixed.P[-1] == 0
