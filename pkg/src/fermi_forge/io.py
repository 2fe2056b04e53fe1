"""Deterministic output: CSV tables, 16-bit graymaps and the run manifest."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError

__all__ = ["format_value", "write_csv", "read_csv", "write_pgm16", "read_pgm16", "OutputDir", "RunManifest", "sha256_file"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows) -> Path:
    """One header row, then rows; floats with 17 significant digits."""
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")
    return path


def read_csv(path):
    """(header, float array) for all-numeric tables."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_pgm16(path, image) -> Path:
    """Binary P5 graymap, maxval 65535 (big-endian); ``image`` in [0, 1], row 0 on top."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    if img.ndim != 2:
        raise ValueError("graymap must be two-dimensional")
    data = np.round(img * 65535.0).astype(">u2")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())
    return path


def read_pgm16(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary graymap")
    w, h = (int(s) for s in parts[1].split())
    if int(parts[2]) != 65535:
        raise ValueError("expected a 16-bit graymap")
    return np.frombuffer(parts[3], dtype=">u2").reshape(h, w)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class OutputDir:
    """Write-once output directory; refuses a nonempty target."""

    def __init__(self, path):
        self.path = Path(path)
        if self.path.exists():
            if not self.path.is_dir():
                raise ConfigError(f"output path {self.path} is not a directory")
            if any(self.path.iterdir()):
                raise ConfigError(f"output directory {self.path} is not empty")
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def __truediv__(self, name) -> Path:
        p = self.path / name
        self.files.append(p)
        return p

    def csv(self, name, header, rows) -> Path:
        return write_csv(self / name, header, rows)

    def pgm(self, name, image) -> Path:
        return write_pgm16(self / name, image)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    threads: int | None
    version: str = __version__
    start: float = field(default_factory=time.time)
    end: float | None = None
    files: dict = field(default_factory=dict)
    status: str = "running"
    notes: dict = field(default_factory=dict)

    def close(self, out: OutputDir, status: str = "ok") -> Path:
        self.end = time.time()
        self.status = status
        self.files = {p.name: sha256_file(p) for p in out.files if p.exists()}
        path = out.path / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True, default=str) + "\n")
        return path

    @staticmethod
    def verify(directory) -> bool:
        d = Path(directory)
        m = json.loads((d / "manifest.json").read_text())
        return all(sha256_file(d / name) == dig for name, dig in m["files"].items())
