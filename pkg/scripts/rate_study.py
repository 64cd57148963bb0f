"""epsilon(N) over a wider N grid, with the fitted log-log slope.

    python scripts/rate_study.py --N 10 25 50 100 200 400 800 --paths 200 --M 1000
"""

import argparse

from stackmfg.config import ModelParams, SimConfig, TimeGrid
from stackmfg.limit_system import solve_limit
from stackmfg.simulation import epsilon_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[10, 25, 50, 100, 200, 400])
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--M", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20240501)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    params = ModelParams()
    cfg = SimConfig(grid=TimeGrid(params.T, args.M), n_paths=args.paths, seed=args.seed)
    sol = solve_limit(params, cfg.grid)
    res = epsilon_sweep(params, cfg, args.N, solution=sol, workers=args.workers)
    print(f"{'N':>6} {'epsilon':>10} {'stderr':>9} {'eps*sqrt(N)':>12}")
    for N, eps, se, _ in res.rows:
        print(f"{N:>6} {eps:>10.5f} {se:>9.5f} {eps * N ** 0.5:>12.4f}")
    print(f"slope = {res.slope:.4f}" if res.slope is not None else "slope = n/a")


if __name__ == "__main__":
    main()
