"""Compare Phi from the (alpha, beta) flow with direct solves of the leader
Riccati equation under each treatment of the C Phi C term, for several C0.

Shows that the flow reproduces the direct solve only when the C Phi C term is
absent (or C0 = 0).
"""

import argparse

import numpy as np

from stackmfg.config import ModelParams, TimeGrid
from stackmfg.riccati import phi_residual, solve_phi_direct, solve_phi_flow, solve_Pi


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--M", type=int, default=2000)
    ap.add_argument("--C0", type=float, nargs="+", default=[0.0, 0.25, 0.5, 1.0])
    args = ap.parse_args()

    print(f"{'C0':>5} {'variant':>8} {'max|flow-direct|':>17} {'flow residual':>14} {'cond(beta)':>11}")
    for C0 in args.C0:
        p = ModelParams(C0=C0)
        g = TimeGrid(p.T, args.M)
        fine = g.refined(2)
        Pi4 = solve_Pi(p, g.refined(4))
        flow = solve_phi_flow(p, Pi4, fine)
        cond = float(np.max(flow.beta_cond.values))
        for variant in ("plus", "minus", "omitted"):
            direct = solve_phi_direct(p, Pi4, fine, variant)
            disc = float(np.max(np.abs(flow.Phi.values - direct.values)))
            res = phi_residual(p, Pi4.restrict(fine), flow.Phi, variant)
            print(f"{C0:>5g} {variant:>8} {disc:>17.3e} {res:>14.3e} {cond:>11.2f}")


if __name__ == "__main__":
    main()
