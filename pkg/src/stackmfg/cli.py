"""Command-line front end: ``stackmfg {riccati,phi,simulate,sweep}``.

Exit codes: 0 success, 2 invalid config or parameters (nothing written),
3 numerical failure, 4 degenerate fixed point, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import artifacts
from .config import LIMIT, ConfigError, ModelParams, SimConfig, load_config
from .limit_system import DegenerateFixedPointError, solve_limit
from .riccati import (
    NumericalError,
    phi_residual,
    solve_follower_riccati,
    solve_phi_direct,
    solve_phi_flow,
    solve_Pi,
)
from .simulation import (
    InvalidParametersError,
    PerturbationSpec,
    check_params,
    epsilon_hat,
    epsilon_sweep,
    perturbation_gap,
    random_direction,
    simulate_ensemble,
)

EXIT_OK, EXIT_OTHER, EXIT_INVALID, EXIT_NUMERICAL, EXIT_DEGENERATE = 0, 1, 2, 3, 4
IDENTITY_TOL = 1e-8
RESIDUAL_TOL = 1e-6
STATIONARITY_TOL = 1e-10
SLOPE_BAND = (-0.65, -0.35)
GAP_MAGNITUDES = (-0.5, -0.25, 0.0, 0.25, 0.5)


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def resolve(args) -> tuple[ModelParams, SimConfig]:
    params, sim = load_config(args.config) if args.config else (ModelParams(), SimConfig())
    try:
        if args.seed is not None:
            sim = sim.replace(seed=args.seed)
        if args.paths is not None:
            sim = sim.replace(n_paths=args.paths)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return params, sim


def _manifest(args, params, sim) -> artifacts.RunManifest:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m = artifacts.RunManifest(out, args.command, version())
    m.echo_config(params, sim)
    return m


def cmd_riccati(args) -> int:
    params, sim = resolve(args)
    check_params(params, LIMIT)
    grid = sim.grid
    m = _manifest(args, params, sim)
    with m.stage("riccati"):
        ric = solve_follower_riccati(params, grid, LIMIT)
    gap = ric.identity_gap
    m.set("identity_gap", gap)
    m.check("identity_gap", gap <= IDENTITY_TOL)
    if gap > IDENTITY_TOL:
        raise NumericalError(f"Pi = P + K violated by {gap:.3e}")
    m.write_csv("riccati.csv", artifacts.RICCATI_HEADER,
                artifacts.riccati_rows(grid.t, ric.P.values, ric.K.values, ric.Pi.values))
    m.write()
    return EXIT_OK


def cmd_phi(args) -> int:
    params, sim = resolve(args)
    check_params(params, LIMIT)
    grid = sim.grid
    fine2, fine4 = grid.refined(2), grid.refined(4)
    m = _manifest(args, params, sim)
    with m.stage("pi"):
        Pi4 = solve_Pi(params, fine4, LIMIT)
    with m.stage("phi_flow"):
        flow = solve_phi_flow(params, Pi4, fine2, sim.tolerances)
    with m.stage("phi_direct"):
        direct = solve_phi_direct(params, Pi4, fine2)
    Pi2 = Pi4.restrict(fine2)
    residual = phi_residual(params, Pi2, flow.Phi, "plus")
    residual_omitted = phi_residual(params, Pi2, flow.Phi, "omitted")
    discrepancy = float(np.max(np.abs(flow.Phi.values - direct.values)))
    Phi = flow.Phi.restrict(grid).values
    m.set("residual_sup", residual)
    m.set("residual_sup_without_C_term", residual_omitted)
    m.set("beta_condition_max", float(np.max(flow.beta_cond.values)))
    m.set("two_method_discrepancy", discrepancy)
    m.set("asymmetry_sup", float(np.max(np.abs(Phi - np.swapaxes(Phi, 1, 2)))))
    m.check("residual_sup", residual <= RESIDUAL_TOL)
    m.check("two_method_discrepancy", discrepancy <= RESIDUAL_TOL)
    m.check("terminal_zero", bool(np.all(Phi[-1] == 0.0)))
    m.write_csv("phi.csv", artifacts.PHI_HEADER, artifacts.phi_rows(grid.t, Phi))
    m.write()
    return EXIT_OK


def default_specs(sim: SimConfig, N: int, n_directions: int) -> list[PerturbationSpec]:
    specs = []
    for d in range(n_directions):
        v = random_direction(sim, d)
        specs.append(PerturbationSpec("leader", v, GAP_MAGNITUDES, d))
        specs.append(PerturbationSpec(0, v, GAP_MAGNITUDES, d))
    return specs


def cmd_simulate(args) -> int:
    params, sim = resolve(args)
    N = args.N
    check_params(params, N)
    m = _manifest(args, params, sim)
    with m.stage("limit"):
        sol = solve_limit(params, sim.grid, sim.tolerances)
    with m.stage("ensemble"):
        ens, rep = simulate_ensemble(params, sim, N, solution=sol, workers=args.workers)
    with m.stage("gaps"):
        gaps = perturbation_gap(params, sim, N, default_specs(sim, N, args.directions),
                                solution=sol, workers=args.workers)
    m.set("N", N)
    m.set("epsilon_N", rep.epsilon_N.mean)
    m.set("stationarity_follower_sup", rep.stationarity_follower_sup)
    m.set("stationarity_leader_sup", rep.stationarity_leader_sup)
    m.set("epsilon_hat", epsilon_hat(gaps))
    m.check("stationarity", rep.stationarity_sup <= STATIONARITY_TOL)
    m.check("zero_gap", all(g.gap == 0.0 for g in gaps if g.delta == 0.0))
    pairs = {(g.target, g.direction, g.delta): g.gap for g in gaps}
    m.check("symmetrized_gap", all(pairs[(t, d, dl)] + pairs.get((t, d, -dl), 0.0) >= -1e-9
                                   for (t, d, dl) in pairs))
    m.write_csv("costs.csv", artifacts.COSTS_HEADER,
                [(N, rep.J0.mean, rep.J0.stderr, rep.Ji_mean.mean, rep.Ji_mean.stderr)])
    m.write_csv("gaps.csv", artifacts.GAPS_HEADER,
                [(g.target, g.direction, g.delta, g.gap) for g in gaps])
    if args.dump_paths:
        m.write_csv("limit_paths.csv", artifacts.LIMIT_PATHS_HEADER,
                    artifacts.limit_path_rows(ens.limit, ens.paths))
    m.write()
    return EXIT_OK


def cmd_sweep(args) -> int:
    params, sim = resolve(args)
    for N in sim.N_list:
        check_params(params, N)
    m = _manifest(args, params, sim)
    with m.stage("sweep"):
        res = epsilon_sweep(params, sim, workers=args.workers)
    eps = [r[1] for r in res.rows]
    if res.slope is None:
        m.set("slope", "n/a")
    else:
        m.set("slope", res.slope)
        m.check("slope", SLOPE_BAND[0] <= res.slope <= SLOPE_BAND[1])
    m.check("strictly_decreasing", all(a > b for a, b in zip(eps, eps[1:])))
    m.write_csv("epsilon.csv", artifacts.EPSILON_HEADER, res.rows)
    m.write()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value parameter file (defaults if omitted)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--paths", type=int, help="overrides n_paths")
    common.add_argument("--workers", type=int, default=1)

    parser = argparse.ArgumentParser(prog="stackmfg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("riccati", parents=[common], help="follower Riccati curves").set_defaults(func=cmd_riccati)
    sub.add_parser("phi", parents=[common], help="leader decoupling field").set_defaults(func=cmd_phi)
    p = sub.add_parser("simulate", parents=[common], help="costs and perturbation gaps for one N")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--directions", type=int, default=5)
    p.add_argument("--dump-paths", action="store_true", help="also write limit_paths.csv")
    p.set_defaults(func=cmd_simulate)
    sub.add_parser("sweep", parents=[common], help="epsilon(N) over N_list").set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidParametersError) as exc:
        code = EXIT_INVALID
        msg = str(exc)
    except DegenerateFixedPointError as exc:
        code, msg = EXIT_DEGENERATE, str(exc)
    except NumericalError as exc:
        code, msg = EXIT_NUMERICAL, str(exc)
    except Exception as exc:  # noqa: BLE001
        code, msg = EXIT_OTHER, f"{type(exc).__name__}: {exc}"
    print(f"stackmfg: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
