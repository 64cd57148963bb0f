"""Decoupled limit system: time-0 fixed point, solution bundle, and forward
simulation of ``Y`` along common-noise paths with ``X = Phi Y + Psi``."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .blocks import BlockMatrices, assemble_blocks
from .config import LIMIT, ModelParams, TimeGrid, Tolerances
from .riccati import (
    BLOWUP_MAGNITUDE,
    BlowUpError,
    FollowerRiccati,
    LeaderDecoupling,
    solve_follower_riccati,
    solve_phi_flow,
    solve_Pi,
    solve_Psi,
)

__all__ = [
    "BlockMatrices",
    "assemble_blocks",
    "DegenerateFixedPointError",
    "FixedPoint0",
    "resolve_fixed_point",
    "LimitSolution",
    "solve_limit",
    "LimitState",
    "simulate_limit",
    "simulate_limit_path",
    "mean_path",
]


class DegenerateFixedPointError(RuntimeError):
    pass


@dataclass(frozen=True)
class FixedPoint0:
    x0_init: float
    Y0: np.ndarray
    denominator: float


def resolve_fixed_point(Phi0: np.ndarray, Psi0: np.ndarray, params: ModelParams,
                        tolerances: Tolerances = Tolerances()) -> FixedPoint0:
    """Close ``Y(0) = [H0 x0(0), xi_bar, 0]`` against ``x0(0) = (Phi(0) Y(0) + Psi(0))_1``."""
    H0, xi_bar = params.H0, params.xi_bar
    denom = 1.0 - H0 * Phi0[0, 0]
    if abs(denom) < tolerances.fixed_point_denominator_min:
        raise DegenerateFixedPointError(
            f"1 - H0 * Phi11(0) = {denom:.3e} below {tolerances.fixed_point_denominator_min:.1e}"
        )
    numer = Phi0[0, 1] * xi_bar + Psi0[0]
    x0_init = numer if H0 == 0 else numer / denom
    return FixedPoint0(float(x0_init), np.array([H0 * x0_init, xi_bar, 0.0]), float(denom))


@dataclass(frozen=True)
class LimitSolution:
    """Everything deterministic the decentralized strategies need, on one grid."""

    params: ModelParams
    grid: TimeGrid
    riccati: FollowerRiccati
    decoupling: LeaderDecoupling
    fixed_point: FixedPoint0

    @property
    def Phi(self) -> np.ndarray:
        return self.decoupling.Phi.values

    @property
    def Psi(self) -> np.ndarray:
        return self.decoupling.Psi.values

    def node_blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked ``A2``, ``B2`` per node and the constant ``f`` vector."""
        bl = [assemble_blocks(self.params, float(p)) for p in self.riccati.Pi.values]
        return np.stack([b.A2 for b in bl]), np.stack([b.B2 for b in bl]), bl[0].f_vec


def solve_limit(params: ModelParams, grid: TimeGrid,
                tolerances: Tolerances = Tolerances()) -> LimitSolution:
    """Follower Riccati triple, (alpha, beta) flow, Phi, Psi and the fixed point.

    Phi is integrated on ``grid.refined(2)`` with the follower coefficient on
    ``grid.refined(4)``, so every RK4 substage (here and in the Psi solve) reads
    a stored node rather than an interpolant.
    """
    riccati = solve_follower_riccati(params, grid, LIMIT)
    fine2, fine4 = grid.refined(2), grid.refined(4)
    Pi4 = solve_Pi(params, fine4, LIMIT)
    dec2 = solve_phi_flow(params, Pi4, fine2, tolerances)
    Psi = solve_Psi(params, dec2.Phi, grid, params.xi0_mean, Pi_limit=Pi4.restrict(fine2))
    dec = dataclasses.replace(dec2.restrict(grid), Psi=Psi, xi0_mean=params.xi0_mean)
    fp = resolve_fixed_point(dec.Phi.values[0], Psi.values[0], params, tolerances)
    return LimitSolution(params, grid, riccati, dec, fp)


@dataclass(frozen=True)
class LimitState:
    """Per-path limit states, arrays of shape ``(n_paths, M + 1, 3)``.

    ``Y = [y0_bar, x_bar, psi_bar]``, ``X = [x0_bar, y_bar, phi_bar]``,
    ``Z = [z0_bar, 0, V_bar]``.
    """

    grid: TimeGrid
    Y: np.ndarray
    X: np.ndarray
    Z: np.ndarray

    @property
    def x0(self) -> np.ndarray:
        return self.X[..., 0]

    @property
    def xbar(self) -> np.ndarray:
        return self.Y[..., 1]

    @property
    def phibar(self) -> np.ndarray:
        return self.X[..., 2]

    @property
    def ybar0(self) -> np.ndarray:
        return self.Y[..., 0]

    @property
    def ybar(self) -> np.ndarray:
        return self.X[..., 1]

    @property
    def psibar(self) -> np.ndarray:
        return self.Y[..., 2]

    def path(self, i: int) -> "LimitState":
        return LimitState(self.grid, self.Y[i], self.X[i], self.Z[i])


def simulate_limit(solution: LimitSolution, dW0: np.ndarray) -> LimitState:
    """Euler-Maruyama for ``Y`` with ``X = Phi Y + Psi`` and ``Z = -Phi C Y``.

    ``dW0`` has shape ``(n_paths, M)`` (or ``(M,)`` for a single path) and holds
    the common-noise increments with variance ``h``.
    """
    dW0 = np.asarray(dW0, dtype=float)
    single = dW0.ndim == 1
    dW0 = np.atleast_2d(dW0)
    grid = solution.grid
    M, h = grid.M, grid.h
    if dW0.shape[1] != M:
        raise ValueError(f"expected {M} increments per path, got {dW0.shape[1]}")
    n = dW0.shape[0]
    A2, B2, fvec = solution.node_blocks()
    Phi, Psi = solution.Phi, solution.Psi
    C0 = solution.params.C0

    Y = np.empty((n, M + 1, 3))
    X = np.empty((n, M + 1, 3))
    Y[:, 0] = solution.fixed_point.Y0
    for k in range(M):
        y = Y[:, k]
        x = y @ Phi[k].T + Psi[k]
        X[:, k] = x
        drift = x @ A2[k].T - y @ B2[k].T + fvec
        y_next = y + drift * h
        y_next[:, 0] -= C0 * y[:, 0] * dW0[:, k]
        if not np.all(np.isfinite(y_next)) or np.any(np.abs(y_next) > BLOWUP_MAGNITUDE):
            raise BlowUpError(k + 1, "limit state")
        Y[:, k + 1] = y_next
    X[:, M] = Y[:, M] @ Phi[M].T + Psi[M]
    Z = -(C0 * Y[:, :, 0])[:, :, None] * Phi[None, :, :, 0]
    state = LimitState(grid, Y, X, Z)
    return state.path(0) if single else state


def simulate_limit_path(solution: LimitSolution, dW0: np.ndarray) -> LimitState:
    """Single-path form of :func:`simulate_limit`."""
    return simulate_limit(solution, np.asarray(dW0, dtype=float).reshape(-1))


def mean_path(solution: LimitSolution) -> LimitState:
    """The noise-free recursion; by linearity it is the exact mean of the Euler scheme."""
    return simulate_limit_path(solution, np.zeros(solution.grid.M))
