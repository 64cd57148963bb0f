"""CSV tables and the flat key=value run manifest."""

from __future__ import annotations

import hashlib
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ModelParams, SimConfig, dump_config

RICCATI_HEADER = ("t", "P", "K", "Pi")
PHI_HEADER = ("t",) + tuple(f"phi{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3))
LIMIT_PATHS_HEADER = ("path", "t", "ybar0", "xbar", "psibar", "xbar0", "ybar", "phibar", "zbar0", "Vbar")
EPSILON_HEADER = ("N", "epsilon", "stderr", "n_paths")
COSTS_HEADER = ("N", "J0", "J0_stderr", "Ji_mean", "Ji_stderr")
GAPS_HEADER = ("target", "direction", "delta", "gap")


def fmt(x) -> str:
    """Fixed-point decimal with 12 significant digits; integers and labels verbatim."""
    if isinstance(x, (str, int, np.integer)) and not isinstance(x, bool):
        return str(x)
    x = float(x)
    if x == 0.0:
        return "0"
    return np.format_float_positional(x, precision=12, unique=False, fractional=False, trim="-")


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def riccati_rows(t, P, K, Pi):
    return zip(t, P, K, Pi)


def phi_rows(t, Phi):
    return ([tk, *Phi_k.reshape(-1)] for tk, Phi_k in zip(t, Phi))


def limit_path_rows(state, path_ids):
    t = state.grid.t
    for j, p in enumerate(path_ids):
        Y, X, Z = state.Y[j], state.X[j], state.Z[j]
        for k in range(len(t)):
            yield (int(p), t[k], Y[k, 0], Y[k, 1], Y[k, 2], X[k, 0], X[k, 1], X[k, 2], Z[k, 0], Z[k, 2])


class RunManifest:
    """Accumulates artifacts, timings and checks; written last as ``manifest.txt``."""

    def __init__(self, out: Path, command: str, version: str):
        self.out = Path(out)
        self.entries: dict[str, str] = {"command": command, "version": version}
        self.files: dict[str, str] = {}

    def echo_config(self, params: ModelParams, sim: SimConfig) -> None:
        for line in dump_config(params, sim).splitlines():
            k, v = (s.strip() for s in line.split("=", 1))
            self.entries[f"config.{k}"] = v

    def set(self, key: str, value) -> None:
        self.entries[key] = value if isinstance(value, str) else fmt(value)

    def check(self, name: str, passed: bool) -> None:
        self.entries[f"check.{name}"] = "pass" if passed else "fail"

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.entries[f"time.{name}"] = f"{time.perf_counter() - t0:.3f}"

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = self.out / name
        path.write_text(csv_text(header, rows))
        self.files[name] = sha256_file(path)
        return path

    def write(self) -> Path:
        lines = [f"{k}={v}" for k, v in self.entries.items()]
        lines += [f"sha256.{name}={h}" for name, h in self.files.items()]
        path = self.out / "manifest.txt"
        path.write_text("\n".join(lines) + "\n")
        return path


def read_manifest(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out
