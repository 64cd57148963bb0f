"""Model parameters, time grid and simulation settings.

The config file format is one ``key = value`` per line with ``#`` comments.
Every key is optional; missing keys fall back to the reference parameter set
(all unit constants, ``D = 0.05``, ``H0 = 0``, couplings 0.5, ``T = 5``).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

LIMIT = "limit"

Population = Union[int, str]


class ConfigError(ValueError):
    """Malformed config file or field value."""


@dataclass(frozen=True)
class DistSpec:
    """Scalar distribution descriptor: ``det:v``, ``uniform:a:b`` or ``gaussian:m:var``."""

    kind: str
    args: tuple[float, ...]

    _ARITY = {"det": 1, "uniform": 2, "gaussian": 2}

    def __post_init__(self):
        if self.kind not in self._ARITY:
            raise ConfigError(f"unknown distribution kind {self.kind!r}")
        if len(self.args) != self._ARITY[self.kind]:
            raise ConfigError(
                f"{self.kind} takes {self._ARITY[self.kind]} parameter(s), got {len(self.args)}"
            )

    @classmethod
    def parse(cls, text: str) -> "DistSpec":
        kind, *rest = [p.strip() for p in text.strip().split(":")]
        try:
            args = tuple(float(r) for r in rest)
        except ValueError as exc:
            raise ConfigError(f"non-numeric distribution parameter in {text!r}") from exc
        return cls(kind, args)

    def __str__(self) -> str:
        return ":".join([self.kind, *(repr(a) for a in self.args)])

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.args[0] + self.args[1])
        return self.args[0]

    @property
    def variance(self) -> float:
        if self.kind == "det":
            return 0.0
        if self.kind == "uniform":
            return (self.args[1] - self.args[0]) ** 2 / 12.0
        return self.args[1]

    def problems(self) -> list[str]:
        out = []
        if not all(math.isfinite(a) for a in self.args):
            out.append("finite parameters")
        if self.kind == "uniform" and self.args[0] > self.args[1]:
            out.append("a <= b")
        if self.kind == "gaussian" and self.args[1] < 0:
            out.append("variance >= 0")
        return out

    def sample(self, u: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Map uniforms ``u`` / standard normals ``z`` (same shape) to draws."""
        if self.kind == "det":
            return np.full(np.shape(u), self.args[0])
        if self.kind == "uniform":
            a, b = self.args
            return a + (b - a) * u
        m, var = self.args
        return m + math.sqrt(var) * z


@dataclass(frozen=True)
class ModelParams:
    # leader dynamics
    A0: float = 1.0
    B0: float = 1.0
    C0: float = 1.0
    f0: float = 1.0
    # follower dynamics
    A: float = 1.0
    B: float = 1.0
    F: float = 1.0
    G: float = 1.0
    f: float = 1.0
    D: float = 0.05
    # leader cost
    Q0: float = 1.0
    R0: float = 1.0
    H0: float = 0.0
    Gamma0: float = 0.5
    eta0: float = 1.0
    # follower cost
    Q: float = 1.0
    R: float = 1.0
    L: float = 1.0
    H: float = 1.0
    Gamma: float = 0.5
    Gamma1: float = 0.5
    eta: float = 1.0
    T: float = 5.0
    xi_dist: DistSpec = DistSpec("uniform", (0.0, 10.0))
    xi0_spec: DistSpec = DistSpec("gaussian", (0.0, 5.0))

    @property
    def xi_bar(self) -> float:
        return self.xi_dist.mean

    @property
    def xi0_mean(self) -> float:
        return self.xi0_spec.mean

    @property
    def g(self) -> float:
        """Effective leader-control loading on the followers, ``G - B L / R``."""
        return self.G - self.B * self.L / self.R

    @property
    def b2r(self) -> float:
        return self.B * self.B / self.R

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be positive and finite")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("M must be a positive integer")

    @property
    def h(self) -> float:
        return self.T / self.M

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.M * factor)


@dataclass(frozen=True)
class Tolerances:
    riccati_residual_tol: float = 1e-6
    beta_condition_max: float = 1e12
    fixed_point_denominator_min: float = 1e-10


@dataclass(frozen=True)
class SimConfig:
    grid: TimeGrid = TimeGrid(5.0, 2000)
    n_paths: int = 200
    N_list: tuple[int, ...] = (25, 100, 400)
    seed: int = 20240501
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        tol = self.tolerances
        if min(tol.riccati_residual_tol, tol.beta_condition_max, tol.fixed_point_denominator_min) <= 0:
            raise ValueError("tolerances must be positive")

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __contains__(self, text: str) -> bool:
        return any(text in v for v in self.violations)

    def __str__(self) -> str:
        return "; ".join(self.violations) if self.violations else "ok"


def validate(params: ModelParams, N: Population = LIMIT) -> ValidationReport:
    """List every violated standing assumption for population size ``N``.

    Never raises; an empty report means the Riccati equations for this ``N``
    (or the limit equations when ``N == "limit"``) are well posed.
    """
    report = ValidationReport()

    def need(cond: bool, name: str):
        if not cond:
            report.violations.append(f"{name} violated")

    scalars = {f.name: getattr(params, f.name) for f in dataclasses.fields(params)
               if isinstance(getattr(params, f.name), float | int)}
    for name, value in scalars.items():
        need(math.isfinite(value), f"{name} finite")

    need(params.R > 0, "R > 0")
    need(params.R0 > 0, "R0 > 0")
    need(params.Q >= 0, "Q >= 0")
    need(params.Q0 >= 0, "Q0 >= 0")
    need(params.H >= 0, "H >= 0")
    need(params.H0 >= 0, "H0 >= 0")
    need(params.T > 0, "T > 0")
    for p in params.xi_dist.problems():
        need(False, f"xi_dist {p}")
    for p in params.xi0_spec.problems():
        need(False, f"xi0_spec {p}")

    if N == LIMIT:
        need(1 - params.Gamma >= 0, "1 - Gamma >= 0")
    else:
        if int(N) != N or N < 1:
            report.violations.append("N positive integer violated")
            return report
        c = 1 - params.Gamma / N
        need(c >= 0, "1 - Gamma/N >= 0")
        need(c * (1 - params.Gamma) >= 0, "(1 - Gamma/N)(1 - Gamma) >= 0")
    return report


_FLOAT_KEYS = [f.name for f in dataclasses.fields(ModelParams)
               if f.name not in ("xi_dist", "xi0_spec")]
_KEYS = _FLOAT_KEYS + ["M", "n_paths", "seed", "xi_dist", "xi0_spec", "N_list"]


def parse_config(text: str) -> tuple[ModelParams, SimConfig]:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in ("M", "n_paths", "seed"):
                values[key] = int(value)
            elif key == "N_list":
                values[key] = tuple(int(v) for v in value.split(",") if v.strip())
            else:
                values[key] = DistSpec.parse(value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r} ({exc})") from exc

    params = ModelParams(**{k: v for k, v in values.items()
                            if k in _FLOAT_KEYS or k in ("xi_dist", "xi0_spec")})
    defaults = SimConfig()
    try:
        sim = SimConfig(
            grid=TimeGrid(params.T, values.get("M", defaults.grid.M)),
            n_paths=values.get("n_paths", defaults.n_paths),
            N_list=values.get("N_list", defaults.N_list),
            seed=values.get("seed", defaults.seed),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return params, sim


def load_config(path: str | Path) -> tuple[ModelParams, SimConfig]:
    """Read a config file; raises ``OSError`` if missing, ``ConfigError`` if malformed."""
    return parse_config(Path(path).read_text())


def dump_config(params: ModelParams, sim: SimConfig) -> str:
    lines = [f"{k} = {getattr(params, k)!r}" for k in _FLOAT_KEYS]
    lines += [
        f"M = {sim.grid.M}",
        f"n_paths = {sim.n_paths}",
        f"seed = {sim.seed}",
        f"xi_dist = {params.xi_dist}",
        f"xi0_spec = {params.xi0_spec}",
        f"N_list = {','.join(str(n) for n in sim.N_list)}",
    ]
    return "\n".join(lines) + "\n"
