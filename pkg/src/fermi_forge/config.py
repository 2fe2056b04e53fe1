"""Plain-text run configuration: one ``key = value`` per line, ``#`` comments."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .core import ScaledParams
from .errors import ConfigError

__all__ = ["RunConfig", "parse_config", "load_config", "CORE_KEYS"]

CORE_KEYS = (
    "kbar", "lambda", "kappa", "v0", "z0", "p0", "dz", "n_particles", "seed",
    "grid_n", "grid_zmin", "grid_zmax", "t_final", "dt",
)


@dataclass
class RunConfig:
    # system
    kbar: float = 4.0
    lam: float = 0.8
    kappa: float = 0.5
    v0: float = 4.0
    # initial state
    z0: float = 14.5
    p0: float = 0.0
    dz: float = 2.0
    dp: float | None = None  # defaults to kbar / (2 dz)
    n_particles: int = 5000
    seed: int = 0
    # grid and time
    grid_n: int = 16384
    grid_zmin: float = -12.0
    grid_zmax: float = 600.0
    t_final: float = 3200.0
    dt: float = 0.025
    stride: int = 400
    boundary: str = "hard-cap"
    eta: float = 0.05  # classical near-wall step refinement
    # scans
    lambda_min: float = 0.0
    lambda_max: float = 4.0
    lambda_step: float = 0.1
    engine: str = "classical"
    # maps
    map_steps: int = 500
    # fits
    p_bin: float | None = None  # defaults to kbar / (2 dz)
    fit_core: float = 0.6
    n_equivalent: float = 1e6
    # modes, wigner, revivals
    n_modes: int = 10
    mode_n: int = 1
    r: float | None = None
    prominence: float = 0.2
    carpet_stride: int = 40
    carpet_bin: int = 4

    def __post_init__(self):
        if self.dp is None:
            self.dp = self.kbar / (2.0 * self.dz)
        if self.p_bin is None:
            self.p_bin = self.kbar / (2.0 * self.dz)

    def scaled(self) -> ScaledParams:
        return ScaledParams(kbar=self.kbar, lam=self.lam, kappa=self.kappa, v0=self.v0)

    def lambda_grid(self):
        import numpy as np

        n = int(math.floor((self.lambda_max - self.lambda_min) / self.lambda_step + 1e-9)) + 1
        return np.round(self.lambda_min + self.lambda_step * np.arange(n), 12)

    def items(self):
        """(key, value) in file spelling, for manifests and --dry-run."""
        for f in dataclasses.fields(self):
            key = "lambda" if f.name == "lam" else f.name
            yield key, getattr(self, f.name)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())


_FIELDS = {("lambda" if f.name == "lam" else f.name): f for f in dataclasses.fields(RunConfig)}
_STRINGS = {"boundary": ("hard-cap", "absorber-off"), "engine": ("classical", "quantum")}


def _convert(key, raw, lineno):
    f = _FIELDS[key]
    typ = f.type if isinstance(f.type, str) else f.type.__name__
    try:
        if key in _STRINGS:
            if raw not in _STRINGS[key]:
                raise ValueError(f"expected one of {_STRINGS[key]}")
            return raw
        if typ.startswith("int"):
            v = float(raw)
            if not v.is_integer():
                raise ValueError("expected an integer")
            return int(v)
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("expected a finite number")
        return v
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {raw!r} ({exc})") from None


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, lineno)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    kwargs = {("lam" if k == "lambda" else k): v for k, v in values.items()}
    try:
        cfg = RunConfig(**kwargs)
        cfg.scaled()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.n_particles < 1:
        raise ConfigError("n_particles must be >= 1")
    if cfg.dt <= 0 or cfg.t_final <= 0 or cfg.dz <= 0:
        raise ConfigError("dt, t_final and dz must be positive")
    if cfg.grid_n < 2 or cfg.grid_n & (cfg.grid_n - 1):
        raise ConfigError("grid_n must be a power of two")
    if not cfg.grid_zmin < 0 < cfg.grid_zmax:
        raise ConfigError("need grid_zmin < 0 < grid_zmax")
    return cfg


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    if path is None:
        return parse_config("", overrides)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)
