"""Command-line entry point: ``fermi-forge <subcommand> [options]``."""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, FermiForgeError, NumericalContractError, StepSizeError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = ("map", "classical", "quantum", "modes", "wigner", "revival", "scan", "carpet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fermi-forge", description="Classical and quantum Fermi-accelerator simulations.")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    helps = {
        "map": "standard-map diffusion and accelerating windows",
        "classical": "classical ensemble propagation",
        "quantum": "split-step wave-packet propagation and localisation fits",
        "modes": "triangular-well eigenstates",
        "wigner": "Wigner function of a mode or Gaussian packet",
        "revival": "recurrence-time estimates and Mathieu characteristic values",
        "scan": "lambda scan of the momentum width",
        "carpet": "space-time density carpet",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", metavar="FILE")
        p.add_argument("--out", metavar="DIR", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    return ap


def _threads(args):
    n = args.threads
    if n is None and os.environ.get("FERMI_FORGE_THREADS"):
        n = int(os.environ["FERMI_FORGE_THREADS"])
    return n


def _windows_rows(lam_max):
    from .classical import accelerating_windows

    s_max = max(0.5, math.floor(2 * max(lam_max, 1.6) / math.pi) / 2 + 0.5)
    return [[w.s, w.lo, w.hi, w.lambda_m] for w in accelerating_windows(s_max)]


def _cmd_map(cfg: RunConfig, out, threads, man):
    from .classical import iterate_standard_map, map_lyapunov, K_CR

    K = 4.0 * cfg.lam
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_particles
    wp0 = np.zeros(n)
    phi0 = rng.uniform(0.0, 2 * math.pi, n)
    W, _ = iterate_standard_map(wp0, phi0, K, cfg.map_steps)
    j = np.arange(cfg.map_steps + 1)
    out.csv("map_dispersion.csv", ["j", "mean_wp", "var_wp"], zip(j, W.mean(axis=1), W.var(axis=1)))
    L, _ = map_lyapunov(K, 0.1, 0.2, 20000)
    slope = float(np.polyfit(j[1:], W.var(axis=1)[1:], 1)[0])
    out.csv("map_summary.csv", ["K", "K_cr", "diffusion_slope", "K2_over_2", "lyapunov"], [[K, K_CR, slope, K * K / 2, L]])
    out.csv("windows.csv", ["s", "lo", "hi", "lambda_m"], _windows_rows(cfg.lambda_max))


def _cmd_classical(cfg, out, threads, man):
    from .analysis import histogram
    from .classical import integrate_trajectory, max_stable_dt, propagate_ensemble
    from .core import PhasePoint, uniform_cell_ensemble

    sp = cfg.scaled()
    e = uniform_cell_ensemble(cfg.z0, cfg.p0, cfg.dz, cfg.dp, cfg.n_particles, cfg.seed)
    every = cfg.dt * cfg.stride
    run = propagate_ensemble(e, cfg.t_final, cfg.dt, sp, sample_every=every, eta=cfg.eta, threads=threads)
    out.csv("dispersion.csv", ["t", "mean_z", "mean_p", "var_z", "var_p"],
            ([r.t, r.mean_z, r.mean_p, r.var_z, r.var_p] for r in run.records))
    c, n, d = histogram(run.final.p)
    out.csv("histogram.csv", ["bin_center", "count", "density"], zip(c, n, d))
    E = float(sp.hamiltonian(cfg.z0, cfg.p0, 0.0))
    h = min(max_stable_dt(E, sp), 2 * math.pi / 64)
    t_traj = min(cfg.t_final, 200.0)
    # driven orbits gain energy and reach deeper into the wall; shrink the step when refused
    for _ in range(8):
        h = t_traj / math.ceil(t_traj / h)
        try:
            tr = integrate_trajectory(PhasePoint(cfg.z0, cfg.p0, 0.0), t_traj, h, sp, stride=max(1, int(round(0.1 / h))))
            break
        except StepSizeError as exc:
            h = exc.suggested_dt or 0.5 * h
    else:
        raise NumericalContractError("trajectory step refused after repeated refinement")
    out.csv("trajectory.csv", ["t", "z", "p", "H"], tr.rows())
    man.notes.update(n_failed=run.n_failed, n_clamped=int(run.clamped.sum()) if hasattr(run.clamped, "sum") else run.clamped)


def _packet_and_grid(cfg):
    from .core import GridSpec, gaussian_packet

    grid = GridSpec(cfg.grid_zmin, cfg.grid_zmax, cfg.grid_n)
    sp = cfg.scaled()
    return gaussian_packet(cfg.z0, cfg.p0, cfg.dz, grid, sp), sp


def _cmd_quantum(cfg, out, threads, man, carpet=False):
    from .quantum import PropagationPlan, evolve, fit_localization, momentum_distribution, position_distribution

    psi0, sp = _packet_and_grid(cfg)
    plan = PropagationPlan(cfg.dt, cfg.t_final, stride=cfg.stride, boundary=cfg.boundary,
                           carpet_stride=cfg.carpet_stride if carpet else None, carpet_bin=cfg.carpet_bin,
                           workers=threads)
    res = evolve(psi0, plan, sp)
    s = res.series
    out.csv("observables.csv", ["t", "norm", "mean_z", "mean_p", "var_z", "var_p", "C2"], s.rows())
    if carpet:
        from .io import write_csv

        cf = res.carpet
        out.pgm("carpet.pgm", cf.display(99.0))
        rows = [["t", i, v] for i, v in enumerate(cf.t)] + [["z", i, v] for i, v in enumerate(cf.z)]
        out.csv("carpet.csv", ["axis", "index", "value"], rows)
        return
    p, P = momentum_distribution(res.final)
    z, R = position_distribution(res.final)
    out.csv("pdist.csv", ["p", "density"], zip(p, P))
    out.csv("zdist.csv", ["z", "density"], zip(z, R))
    try:
        rep = fit_localization((p, P), (z, R), bin_width_p=cfg.p_bin, bin_width_z=1.0, core_fraction=cfg.fit_core,
                               n_equivalent=cfg.n_equivalent, lam=cfg.lam, kbar=cfg.kbar)
        out.csv("localization.csv",
                ["ell", "c_z", "r2_p", "r2_z_sqrt", "r2_z_linear", "p_lo", "p_hi", "classification", "unreliable"],
                [[rep.ell, rep.c_z, rep.r2_p, rep.r2_z_sqrt, rep.r2_z_linear, rep.p_range[0], rep.p_range[1],
                  rep.classification, rep.unreliable]])
    except FermiForgeError as exc:
        man.notes["localization_fit"] = str(exc)


def _cmd_carpet(cfg, out, threads, man):
    _cmd_quantum(cfg, out, threads, man, carpet=True)


def _cmd_modes(cfg, out, threads, man):
    from .core import GridSpec
    from .modes import cavity_mode

    grid = GridSpec(cfg.grid_zmin, cfg.grid_zmax, cfg.grid_n)
    rows = []
    for n in range(1, cfg.n_modes + 1):
        m = cavity_mode(n, cfg.kbar, grid, strict=False)
        rows.append([n, m.energy, m.z_n])
        out.csv(f"mode_psi_{n}.csv", ["z", "psi"], zip(grid.z, m.psi))
    out.csv("modes.csv", ["n", "E_n", "z_n"], rows)


def _cmd_wigner(cfg, out, threads, man):
    from .core import GridSpec, gaussian_packet
    from .modes import cavity_mode, wigner

    grid = GridSpec(cfg.grid_zmin, cfg.grid_zmax, cfg.grid_n)
    if cfg.mode_n >= 1:
        state = cavity_mode(cfg.mode_n, cfg.kbar, grid, strict=False).state(cfg.scaled())
    else:
        state = gaussian_packet(cfg.z0, cfg.p0, cfg.dz, grid, cfg.scaled())
    w = wigner(state)
    lo, hi = w.W.min(), w.W.max()
    img = (w.W - lo) / (hi - lo) if hi > lo else np.zeros_like(w.W)
    # rows are p (top = largest p), columns are z
    out.pgm("wigner.pgm", img.T[::-1])
    rows = [["z", i, v] for i, v in enumerate(w.z)] + [["p", i, v] for i, v in enumerate(w.p[::-1])]
    out.csv("wigner.csv", ["axis", "index", "value"], rows)
    out.csv("wigner_summary.csv", ["total", "min", "max", "aliasing"], [[w.total(), lo, hi, w.aliasing]])
    man.notes["aliasing"] = w.aliasing


def _cmd_revival(cfg, out, threads, man):
    from .modes import mean_quantum_number
    from .revivals import (
        classical_frequency, energy_at_quantum_number, mathieu_char_value, mathieu_nu, mathieu_q,
        matrix_element, nonlinearity, recurrence_times, resonance_data,
    )

    if cfg.r is not None:
        r = cfg.r
    else:
        psi0, _ = _packet_and_grid(cfg)
        r = mean_quantum_number(psi0)
    w = classical_frequency(r, cfg.kbar)
    z = nonlinearity(r, cfg.kbar)
    E0 = energy_at_quantum_number(r, cfg.kbar)
    N = max(1, int(round(math.sqrt(2 * E0) / math.pi)))
    res = resonance_data(0.5 * (N * math.pi) ** 2, E0, cfg.kbar, w, r)
    est = recurrence_times(cfg.lam, r, cfg.kbar, res if cfg.lam > 0 else None)
    out.csv("revival_estimate.csv", est.header(), [est.row()])
    V = matrix_element(E0, N)
    q = mathieu_q(cfg.lam, V, N, z, cfg.kbar)
    rows = []
    for n in range(max(1, int(r) - 5), int(r) + 6):
        nu = mathieu_nu(n, r, N, w, z, cfg.kbar)
        sol = mathieu_char_value(nu, q)
        rows.append([sol.nu, sol.q, sol.a, sol.residual])
    out.csv("mathieu.csv", ["nu", "q", "a", "residual"], rows)


def _cmd_scan(cfg, out, threads, man):
    from .analysis import lambda_scan
    from .classical.flow import _set_threads

    _set_threads(threads)
    res = lambda_scan(cfg, cfg.lambda_grid(), engine=cfg.engine, t_final=cfg.t_final)
    out.csv("scan.csv", ["lambda", "dp", "dz", "seed", "n_failed", "error"], res.rows())
    out.csv("windows.csv", ["s", "lo", "hi", "lambda_m"], _windows_rows(cfg.lambda_max))
    man.notes["failed_lambdas"] = [p.lam for p in res.points if p.error]


HANDLERS = {
    "map": _cmd_map,
    "classical": _cmd_classical,
    "quantum": _cmd_quantum,
    "modes": _cmd_modes,
    "wigner": _cmd_wigner,
    "revival": _cmd_revival,
    "scan": _cmd_scan,
    "carpet": _cmd_carpet,
}


def main(argv=None) -> int:
    from .io import OutputDir, RunManifest

    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        cfg = load_config(args.config, {"seed": args.seed})
        threads = _threads(args)
        if threads is not None and threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.dry_run:
            sys.stdout.write(f"# command = {args.command}\n" + cfg.to_text())
            return EXIT_OK
        out = OutputDir(args.out or f"{args.command}_out")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    man = RunManifest(args.command, dict(cfg.items()), cfg.seed, threads)
    try:
        HANDLERS[args.command](cfg, out, threads, man)
    except (ConfigError, ValueError) as exc:
        man.close(out, status=f"config error: {exc}")
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalContractError as exc:
        man.close(out, status=f"numerical contract failure: {exc}")
        print(f"numerical contract failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    man.close(out)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
