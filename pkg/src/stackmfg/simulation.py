"""Monte Carlo engine for the leader + N-follower closed loop.

Paths are processed in fixed-size blocks (independent of the worker count)
and every per-path quantity is computed element-wise, so results are
bit-for-bit reproducible for a given ``(params, config, N)``. Followers are
indexed ``0 .. N-1`` in arrays; their random streams use agent ids ``1 .. N``
(agent 0 is the common noise).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import ndtri

from . import rng
from .config import LIMIT, ModelParams, SimConfig, TimeGrid, validate
from .limit_system import LimitSolution, LimitState, simulate_limit, solve_limit
from .strategies import FollowerStrategy, LeaderStrategy

BLOCK_ELEMENTS = 8_000_000


class InvalidParametersError(ValueError):
    pass


def check_params(params: ModelParams, N) -> None:
    problems = []
    for n in (N, LIMIT) if N != LIMIT else (LIMIT,):
        problems += validate(params, n).violations
    if problems:
        raise InvalidParametersError("; ".join(dict.fromkeys(problems)))


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseBundle:
    seed: int
    path: int
    dW0: np.ndarray   # (M,)
    dW: np.ndarray    # (N, M)
    xi: np.ndarray    # (N,)
    xi0: float
    xi0_mean: float


def _draw_block(params: ModelParams, config: SimConfig, N: int, paths: Sequence[int]):
    M, h = config.grid.M, config.grid.h
    seed = config.seed
    n = len(paths)
    raw0 = np.empty((n, M), dtype=np.uint64)
    raw = np.empty((n, N, M), dtype=np.uint64)
    raw_xi = np.empty((n, N), dtype=np.uint64)
    raw_xi0 = np.empty(n, dtype=np.uint64)
    for j, p in enumerate(paths):
        raw0[j] = rng.raw_stream(seed, rng.COMMON_NOISE, p, 0, M)
        raw_xi0[j] = rng.raw_stream(seed, rng.LEADER_TERMINAL, p, 0, 1)[0]
        for i in range(N):
            raw[j, i] = rng.raw_stream(seed, rng.IDIOSYNCRATIC_NOISE, p, i + 1, M)
            raw_xi[j, i] = rng.raw_stream(seed, rng.INITIAL_STATE, p, i + 1, 1)[0]
    sqrt_h = math.sqrt(h)
    dW0 = sqrt_h * ndtri(rng.to_uniform(raw0))
    dW = sqrt_h * ndtri(rng.to_uniform(raw))
    u_xi = rng.to_uniform(raw_xi)
    xi = params.xi_dist.sample(u_xi, ndtri(u_xi))
    u_xi0 = rng.to_uniform(raw_xi0)
    xi0 = params.xi0_spec.sample(u_xi0, ndtri(u_xi0))
    return dW0, dW, xi, xi0


def draw_noise(params: ModelParams, config: SimConfig, N: int, path: int) -> NoiseBundle:
    """All randomness for one Monte Carlo path, reproducible from ``(seed, path)``."""
    dW0, dW, xi, xi0 = _draw_block(params, config, N, [path])
    return NoiseBundle(config.seed, path, dW0[0], dW[0], xi[0], float(xi0[0]), params.xi0_mean)


def _stack(bundles: Sequence[NoiseBundle]):
    return (np.stack([b.dW0 for b in bundles]), np.stack([b.dW for b in bundles]),
            np.stack([b.xi for b in bundles]), np.array([b.xi0 for b in bundles]))


def path_blocks(n_paths: int, N: int, M: int) -> list[range]:
    size = max(1, BLOCK_ELEMENTS // max(1, N * M))
    return [range(s, min(s + size, n_paths)) for s in range(0, n_paths, size)]


# ---------------------------------------------------------------------------
# deviations from the decentralized strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Deviation:
    """Open-loop additive offsets on top of the decentralized controls.

    Offsets are node arrays of length ``M + 1``, read as piecewise constant
    on ``[t_k, t_{k+1})``. A leader offset also moves the leader's backward
    state; followers still apply their feedback rule to the realized ``u0``.
    """

    leader_offset: Optional[np.ndarray] = None
    follower: Optional[int] = None
    follower_offset: Optional[np.ndarray] = None

    def combine(self, other: "Deviation") -> "Deviation":
        def add(a, b):
            if a is None:
                return b
            return a if b is None else a + b

        if self.follower is not None and other.follower is not None and self.follower != other.follower:
            raise ValueError("only one deviating follower supported")
        return Deviation(
            add(self.leader_offset, other.leader_offset),
            self.follower if self.follower is not None else other.follower,
            add(self.follower_offset, other.follower_offset),
        )


def leader_state_shift(params: ModelParams, grid: TimeGrid, offset: np.ndarray) -> np.ndarray:
    """Response of ``x0`` to a deterministic control offset.

    Solves ``d(dx0)/dt = A0 dx0 + B0 offset``, ``dx0(T) = 0`` exactly for
    piecewise-constant ``offset`` (no martingale part is needed since the
    forcing is deterministic).
    """
    M, h, a = grid.M, grid.h, params.A0
    decay = math.exp(-a * h)
    gain = -h if a == 0 else math.expm1(-a * h) / a
    out = np.zeros(M + 1)
    for k in range(M - 1, -1, -1):
        out[k] = decay * out[k + 1] + gain * params.B0 * offset[k]
    return out


# ---------------------------------------------------------------------------
# quadrature and costs
# ---------------------------------------------------------------------------

def trapezoid_weights(grid: TimeGrid) -> np.ndarray:
    w = np.full(grid.M + 1, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def leader_cost_paths(params: ModelParams, grid: TimeGrid, x0, xavg, u0) -> np.ndarray:
    """Per-path leader cost from node arrays of shape ``(..., M + 1)``."""
    p = params
    x0 = np.asarray(x0, dtype=float)
    integrand = p.Q0 * (x0 - p.Gamma0 * np.asarray(xavg) - p.eta0) ** 2 + p.R0 * np.asarray(u0) ** 2
    return 0.5 * (integrand @ trapezoid_weights(grid) + p.H0 * x0[..., 0] ** 2)


def follower_integrand(params: ModelParams, x_i, xavg, x0, u_i, u0):
    p = params
    return (p.Q * (x_i - p.Gamma * xavg - p.Gamma1 * x0 - p.eta) ** 2
            + p.R * u_i ** 2 + 2.0 * u_i * p.L * u0)


def follower_cost_paths(params: ModelParams, grid: TimeGrid, x_i, xavg, x0, u_i, u0) -> np.ndarray:
    """Per-path cost of one follower; the cross term can make it negative."""
    x_i = np.asarray(x_i, dtype=float)
    integrand = follower_integrand(params, x_i, xavg, x0, u_i, u0)
    return 0.5 * (integrand @ trapezoid_weights(grid) + params.H * x_i[..., -1] ** 2)


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "Estimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        mean = float(np.sum(samples) / n)
        se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, se)


# ---------------------------------------------------------------------------
# ensemble
# ---------------------------------------------------------------------------

@dataclass
class PopulationEnsemble:
    """Simulated closed loop; per-path arrays have leading axis ``n_paths``."""

    params: ModelParams
    grid: TimeGrid
    N: int
    paths: np.ndarray
    limit: LimitState
    x0: np.ndarray              # realized leader state (n, M+1)
    u0: np.ndarray              # realized leader control (n, M+1)
    xavg: np.ndarray            # follower state average (n, M+1)
    eps_integral: np.ndarray    # int_0^T (xavg - xbar)^2 dt per path
    Ji_paths: np.ndarray        # (n, N)
    stationarity_follower: np.ndarray
    stationarity_leader: np.ndarray
    xi0: np.ndarray
    follower_paths: Optional[np.ndarray] = None     # (n, N, M+1)
    follower_controls: Optional[np.ndarray] = None  # (n, N, M+1)

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def xbar(self) -> np.ndarray:
        return self.limit.xbar


@dataclass(frozen=True)
class GapRecord:
    target: Union[str, int]
    direction: int
    delta: float
    gap: float
    stderr: float


@dataclass
class CostReport:
    N: int
    n_paths: int
    J0: Estimate
    Ji_mean: Estimate
    epsilon_N: Estimate
    stationarity_follower_sup: float
    stationarity_leader_sup: float
    gaps: list[GapRecord] = field(default_factory=list)

    @property
    def stationarity_sup(self) -> float:
        return max(self.stationarity_follower_sup, self.stationarity_leader_sup)


def _simulate_block(solution: LimitSolution, N: int, dW0, dW, xi, deviation: Deviation,
                    keep_paths: bool) -> dict:
    params, grid = solution.params, solution.grid
    M, h = grid.M, grid.h
    t = grid.t
    n = dW0.shape[0]
    leader = LeaderStrategy(params, solution.riccati.Pi)
    follower = FollowerStrategy.from_riccati(params, solution.riccati)
    limit = simulate_limit(solution, dW0)

    x0 = limit.x0
    u0 = np.empty((n, M + 1))
    stat_l = np.zeros(n)
    for k in range(M + 1):
        u0[:, k] = leader.control(t[k], limit.ybar0[:, k], limit.ybar[:, k], limit.psibar[:, k])
        r = leader.stationarity_residual(t[k], limit.ybar0[:, k], limit.ybar[:, k],
                                         limit.psibar[:, k], u0[:, k])
        stat_l = np.maximum(stat_l, np.abs(r))
    if deviation.leader_offset is not None:
        x0 = x0 + leader_state_shift(params, grid, deviation.leader_offset)
        u0 = u0 + deviation.leader_offset

    dev_i = deviation.follower
    dev_v = deviation.follower_offset
    steps = np.ascontiguousarray(np.moveaxis(dW, 2, 0))  # (M, n, N)
    w = trapezoid_weights(grid)
    x = np.array(xi, dtype=float)
    xavg = np.empty((n, M + 1))
    eps_int = np.zeros(n)
    J = np.zeros((n, N))
    stat_f = np.zeros(n)
    keep_x = np.empty((n, N, M + 1)) if keep_paths else None
    keep_u = np.empty((n, N, M + 1)) if keep_paths else None
    D = params.D
    for k in range(M + 1):
        xb = limit.xbar[:, k, None]
        ph = limit.phibar[:, k, None]
        u0k = u0[:, k, None]
        x0k = x0[:, k, None]
        u = follower.control(t[k], x, xb, ph, u0k)
        if dev_i is not None:
            u[:, dev_i] += dev_v[k]
        stat_f = np.maximum(stat_f, np.max(np.abs(
            follower.stationarity_residual(t[k], x, xb, ph, u, u0k)), axis=1))
        avg = x.sum(axis=1) / N
        xavg[:, k] = avg
        eps_int += w[k] * (avg - limit.xbar[:, k]) ** 2
        J += w[k] * follower_integrand(params, x, avg[:, None], x0k, u, u0k)
        if keep_paths:
            keep_x[:, :, k] = x
            keep_u[:, :, k] = u
        if k < M:
            x = x + follower.open_loop_drift(x, u, x0k, u0k) * h + D * steps[k]
    J = 0.5 * (J + params.H * x ** 2)
    return dict(limit=limit, x0=x0, u0=u0, xavg=xavg, eps_integral=eps_int, Ji_paths=J,
                stationarity_follower=stat_f, stationarity_leader=stat_l,
                follower_paths=keep_x, follower_controls=keep_u)


def _assemble(solution: LimitSolution, N: int, paths, parts: list[dict], xi0) -> PopulationEnsemble:
    def cat(key, axis=0):
        vals = [p[key] for p in parts]
        return None if vals[0] is None else np.concatenate(vals, axis=axis)

    limit = LimitState(solution.grid,
                       np.concatenate([p["limit"].Y for p in parts]),
                       np.concatenate([p["limit"].X for p in parts]),
                       np.concatenate([p["limit"].Z for p in parts]))
    return PopulationEnsemble(
        params=solution.params, grid=solution.grid, N=N, paths=np.asarray(paths), limit=limit,
        x0=cat("x0"), u0=cat("u0"), xavg=cat("xavg"), eps_integral=cat("eps_integral"),
        Ji_paths=cat("Ji_paths"), stationarity_follower=cat("stationarity_follower"),
        stationarity_leader=cat("stationarity_leader"), xi0=np.asarray(xi0),
        follower_paths=cat("follower_paths"), follower_controls=cat("follower_controls"),
    )


def simulate_from_noise(solution: LimitSolution, bundles: Sequence[NoiseBundle],
                        deviation: Deviation = Deviation(), keep_paths: bool = False) -> PopulationEnsemble:
    """Run the closed loop on explicitly supplied noise (one bundle per path)."""
    dW0, dW, xi, xi0 = _stack(bundles)
    N = dW.shape[1]
    part = _simulate_block(solution, N, dW0, dW, xi, deviation, keep_paths)
    return _assemble(solution, N, [b.path for b in bundles], [part], xi0)


def _map_blocks(fn, blocks, workers: int):
    if workers <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def cost_leader(ensemble: PopulationEnsemble) -> Estimate:
    return Estimate.from_samples(
        leader_cost_paths(ensemble.params, ensemble.grid, ensemble.x0, ensemble.xavg, ensemble.u0))


def cost_follower(ensemble: PopulationEnsemble, i: int) -> Estimate:
    """Cost of follower ``i``; recomputed from stored paths when available."""
    if ensemble.follower_paths is None:
        return Estimate.from_samples(ensemble.Ji_paths[:, i])
    return Estimate.from_samples(follower_cost_paths(
        ensemble.params, ensemble.grid, ensemble.follower_paths[:, i], ensemble.xavg,
        ensemble.x0, ensemble.follower_controls[:, i], ensemble.u0))


def epsilon_estimate(ensemble: PopulationEnsemble) -> Estimate:
    I = Estimate.from_samples(ensemble.eps_integral)
    eps = math.sqrt(max(I.mean, 0.0))
    return Estimate(eps, I.stderr / (2.0 * eps) if eps > 0 else 0.0)


def simulate_ensemble(params: ModelParams, config: SimConfig, N: int, *,
                      solution: Optional[LimitSolution] = None,
                      deviation: Deviation = Deviation(),
                      keep_paths: bool = False,
                      workers: int = 1) -> tuple[PopulationEnsemble, CostReport]:
    check_params(params, N)
    if solution is None:
        solution = solve_limit(params, config.grid, config.tolerances)
    blocks = path_blocks(config.n_paths, N, config.grid.M)

    def run(block):
        dW0, dW, xi, xi0 = _draw_block(params, config, N, block)
        return _simulate_block(solution, N, dW0, dW, xi, deviation, keep_paths), xi0

    results = _map_blocks(run, blocks, workers)
    ensemble = _assemble(solution, N, np.arange(config.n_paths),
                         [r[0] for r in results], np.concatenate([r[1] for r in results]))
    report = CostReport(
        N=N,
        n_paths=config.n_paths,
        J0=cost_leader(ensemble),
        Ji_mean=Estimate.from_samples(ensemble.Ji_paths.sum(axis=1) / N),
        epsilon_N=epsilon_estimate(ensemble),
        stationarity_follower_sup=float(np.max(ensemble.stationarity_follower)),
        stationarity_leader_sup=float(np.max(ensemble.stationarity_leader)),
    )
    return ensemble, report


# ---------------------------------------------------------------------------
# perturbation experiments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSpec:
    """Deviate ``target`` ("leader" or a follower index) by ``delta * direction``."""

    target: Union[str, int]
    direction: np.ndarray
    magnitudes: tuple[float, ...] = (-0.5, -0.25, 0.0, 0.25, 0.5)
    direction_id: int = 0

    def __post_init__(self):
        if np.max(np.abs(self.direction)) > 10:
            raise ValueError("direction must satisfy sup|v| <= 10")
        if self.target != "leader" and not isinstance(self.target, (int, np.integer)):
            raise ValueError("target must be 'leader' or a follower index")

    def deviation(self, delta: float) -> Deviation:
        v = delta * self.direction
        if self.target == "leader":
            return Deviation(leader_offset=v)
        return Deviation(follower=int(self.target), follower_offset=v)


def random_direction(config: SimConfig, direction_id: int, pieces: int = 10) -> np.ndarray:
    """Piecewise-constant direction with ``pieces`` equal segments, values in [-1, 1]."""
    M = config.grid.M
    vals = 2.0 * rng.uniforms(config.seed, rng.DIRECTION, 0, direction_id, pieces) - 1.0
    seg = np.minimum((np.arange(M + 1) * pieces) // M, pieces - 1)
    return vals[seg]


def _target_costs(ensemble_part: dict, solution: LimitSolution, target) -> np.ndarray:
    if target == "leader":
        return leader_cost_paths(solution.params, solution.grid, ensemble_part["x0"],
                                 ensemble_part["xavg"], ensemble_part["u0"])
    return ensemble_part["Ji_paths"][:, int(target)]


def perturbation_gap(params: ModelParams, config: SimConfig, N: int,
                     specs: Union[PerturbationSpec, Sequence[PerturbationSpec]], *,
                     solution: Optional[LimitSolution] = None,
                     leader_offset: Optional[np.ndarray] = None,
                     workers: int = 1) -> list[GapRecord]:
    """Cost change of each target when it deviates, under common random numbers.

    ``gap = J(deviated) - J(baseline)`` averaged over paths, where both runs
    use identical noise. ``leader_offset`` makes the baseline leader play
    ``u0_hat + leader_offset`` instead of ``u0_hat`` (an arbitrary announced
    strategy, for the followers' equilibrium check).
    """
    check_params(params, N)
    if isinstance(specs, PerturbationSpec):
        specs = [specs]
    if solution is None:
        solution = solve_limit(params, config.grid, config.tolerances)
    base_dev = Deviation(leader_offset=leader_offset)
    blocks = path_blocks(config.n_paths, N, config.grid.M)
    scenarios = [(s, d) for s in specs for d in s.magnitudes]

    def run(block):
        dW0, dW, xi, _ = _draw_block(params, config, N, block)
        base = _simulate_block(solution, N, dW0, dW, xi, base_dev, False)
        diffs = []
        for spec, delta in scenarios:
            if delta == 0.0:
                diffs.append(np.zeros(len(block)))
                continue
            dev = base_dev.combine(spec.deviation(delta))
            pert = _simulate_block(solution, N, dW0, dW, xi, dev, False)
            diffs.append(_target_costs(pert, solution, spec.target)
                         - _target_costs(base, solution, spec.target))
        return diffs

    per_block = _map_blocks(run, blocks, workers)
    records = []
    for j, (spec, delta) in enumerate(scenarios):
        est = Estimate.from_samples(np.concatenate([b[j] for b in per_block]))
        records.append(GapRecord(spec.target, spec.direction_id, delta, est.mean, est.stderr))
    return records


def epsilon_hat(records: Sequence[GapRecord]) -> float:
    """Smallest ``e >= 0`` with ``gap >= -e`` for every record."""
    return max(0.0, -min(r.gap for r in records))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    rows: list[tuple[int, float, float, int]]   # (N, epsilon, stderr, n_paths)
    slope: Optional[float]
    reports: list[CostReport] = field(default_factory=list)


def loglog_slope(Ns: Sequence[int], values: Sequence[float]) -> Optional[float]:
    Ns = np.asarray(Ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(np.unique(Ns)) < 2 or np.any(values <= 0):
        return None
    return float(np.polyfit(np.log(Ns), np.log(values), 1)[0])


def epsilon_sweep(params: ModelParams, config: SimConfig, N_list: Optional[Sequence[int]] = None, *,
                  solution: Optional[LimitSolution] = None, workers: int = 1) -> SweepResult:
    """epsilon(N) for each N, each with its own seed derived from ``config.seed`` and N."""
    N_list = tuple(config.N_list if N_list is None else N_list)
    if solution is None:
        solution = solve_limit(params, config.grid, config.tolerances)
    rows, reports = [], []
    for N in N_list:
        cfg = config.replace(seed=rng.derive_seed(config.seed, N))
        _, report = simulate_ensemble(params, cfg, N, solution=solution, workers=workers)
        rows.append((N, report.epsilon_N.mean, report.epsilon_N.stderr, config.n_paths))
        reports.append(report)
    slope = loglog_slope([r[0] for r in rows], [r[1] for r in rows])
    return SweepResult(rows, slope, reports)
