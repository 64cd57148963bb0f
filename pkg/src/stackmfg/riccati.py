"""Backward integration of the follower Riccati equations and the leader's
3x3 decoupling field.

All ODEs share one fixed-step classical RK4 kernel running from ``t = T``
down to ``t = 0``. Time-varying coefficients are read from trajectories by
linear interpolation, so a coefficient stored on a grid twice as fine as the
integration grid is evaluated exactly at every RK4 substage; the solver
drivers in this package always arrange that.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Literal, Optional

import numpy as np

from .blocks import assemble_blocks
from .config import LIMIT, ModelParams, Population, TimeGrid, Tolerances

BLOWUP_MAGNITUDE = 1e100


class NumericalError(RuntimeError):
    """Base class for solver failures (mapped to CLI exit code 3)."""


class BlowUpError(NumericalError):
    def __init__(self, node: int, what: str = "ODE"):
        super().__init__(f"{what}: non-finite or |value| > 1e100 at node {node}")
        self.node = node


class BetaSingularError(NumericalError):
    def __init__(self, node: int, cond: float):
        super().__init__(f"beta(t) near-singular at node {node} (cond = {cond:.3e})")
        self.node = node
        self.cond = cond


@dataclass(frozen=True)
class Trajectory:
    """Values on the nodes of a grid; shape ``(M + 1, *value_shape)``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[0] != self.grid.M + 1:
            raise ValueError("one value per grid node required")

    def __call__(self, t: float) -> np.ndarray:
        """Linear interpolation in time; exact at nodes, clamped outside ``[0, T]``."""
        M, T = self.grid.M, self.grid.T
        x = min(max(t, 0.0), T) * M / T
        k = round(x)
        if abs(x - k) <= 1e-9:
            return self.values[k]
        j = int(x)
        w = x - j
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]

    def restrict(self, grid: TimeGrid) -> "Trajectory":
        """Sub-sample onto a coarser grid whose nodes are a subset of ours."""
        factor, rem = divmod(self.grid.M, grid.M)
        if rem or grid.T != self.grid.T:
            raise ValueError("target grid is not a coarsening of this grid")
        return Trajectory(grid, self.values[::factor])

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def integrate_backward_ode(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    terminal,
    grid: TimeGrid,
    what: str = "ODE",
) -> Trajectory:
    """Solve ``dy/dt = rhs(t, y)`` on ``grid`` from ``y(T) = terminal`` backwards.

    Classical RK4 with step ``-h``. The terminal value is stored verbatim.
    Raises ``BlowUpError`` naming the first node whose value is non-finite or
    exceeds 1e100 in magnitude.
    """
    t = grid.t
    h = grid.h
    y = np.array(terminal, dtype=float)
    out = np.empty((grid.M + 1,) + y.shape)
    out[grid.M] = y
    for k in range(grid.M - 1, -1, -1):
        t1, t0 = t[k + 1], t[k]
        tm = 0.5 * (t0 + t1)
        k1 = rhs(t1, y)
        k2 = rhs(tm, y - 0.5 * h * k1)
        k3 = rhs(tm, y - 0.5 * h * k2)
        k4 = rhs(t0, y - h * k3)
        y = y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.any(np.abs(y) > BLOWUP_MAGNITUDE):
            raise BlowUpError(k, what)
        out[k] = y
    return Trajectory(grid, out)


# ---------------------------------------------------------------------------
# follower side
# ---------------------------------------------------------------------------

def _coupling(params: ModelParams, N: Population) -> float:
    return 1.0 if N == LIMIT else 1.0 - params.Gamma / N


def solve_P(params: ModelParams, grid: TimeGrid, N: Population = LIMIT) -> Trajectory:
    A, b2r, Q = params.A, params.b2r, params.Q
    c = _coupling(params, N)

    def rhs(_t, p):
        return -(2.0 * A * p - b2r * p * p + c * Q)

    return integrate_backward_ode(rhs, params.H, grid, what="P Riccati")


def solve_K(params: ModelParams, P: Trajectory, grid: TimeGrid, N: Population = LIMIT) -> Trajectory:
    """``P`` should live on ``grid.refined(2)`` (or finer) for full RK4 order."""
    A, b2r, QG = params.A, params.b2r, params.Q * params.Gamma
    c = _coupling(params, N)

    def rhs(t, k):
        p = P(t)
        return -(2.0 * A * k - b2r * p * k - b2r * k * (p + k) - c * QG)

    return integrate_backward_ode(rhs, 0.0, grid, what="K equation")


def solve_Pi(params: ModelParams, grid: TimeGrid, N: Population = LIMIT) -> Trajectory:
    A, b2r = params.A, params.b2r
    q = _coupling(params, N) * params.Q * (1.0 - params.Gamma)

    def rhs(_t, p):
        return -(2.0 * A * p - b2r * p * p + q)

    return integrate_backward_ode(rhs, params.H, grid, what="Pi Riccati")


@dataclass(frozen=True)
class FollowerRiccati:
    P: Trajectory
    K: Trajectory
    Pi: Trajectory
    N: Population

    @property
    def identity_gap(self) -> float:
        """sup over nodes of ``|Pi - (P + K)|``."""
        return float(np.max(np.abs(self.Pi.values - self.P.values - self.K.values)))


def solve_follower_riccati(params: ModelParams, grid: TimeGrid, N: Population = LIMIT) -> FollowerRiccati:
    # P and Pi on the 4x grid, K on the 2x grid so its substages hit P's nodes
    fine = grid.refined(4)
    P_fine = solve_P(params, fine, N)
    K = solve_K(params, P_fine, grid.refined(2), N).restrict(grid)
    Pi = solve_Pi(params, fine, N).restrict(grid)
    return FollowerRiccati(P_fine.restrict(grid), K, Pi, N)


def riccati_convergence_gap(params: ModelParams, grid: TimeGrid, N: int) -> float:
    """``sup|P_N - P_bar| + sup|K_N - K_bar|``; should decay like 1/N."""
    fin = solve_follower_riccati(params, grid, N)
    lim = solve_follower_riccati(params, grid, LIMIT)
    return float(np.max(np.abs(fin.P.values - lim.P.values))
                 + np.max(np.abs(fin.K.values - lim.K.values)))


# ---------------------------------------------------------------------------
# leader side
# ---------------------------------------------------------------------------

CTerm = Literal["plus", "minus", "omitted"]
_C_SIGN = {"plus": 1.0, "minus": -1.0, "omitted": 0.0}


@dataclass(frozen=True)
class LeaderDecoupling:
    alpha: Trajectory
    beta: Trajectory
    Phi: Trajectory
    beta_cond: Trajectory
    residual_sup: float
    Psi: Optional[Trajectory] = None
    xi0_mean: Optional[float] = None

    def restrict(self, grid: TimeGrid) -> "LeaderDecoupling":
        return dataclasses.replace(
            self,
            alpha=self.alpha.restrict(grid),
            beta=self.beta.restrict(grid),
            Phi=self.Phi.restrict(grid),
            beta_cond=self.beta_cond.restrict(grid),
            Psi=None if self.Psi is None else self.Psi.restrict(grid),
        )


def _blocks_at(params: ModelParams, Pi_limit: Trajectory):
    return lambda t: assemble_blocks(params, float(Pi_limit(t)))


def phi_rhs(params: ModelParams, Pi_limit: Trajectory, c_term: CTerm = "plus"):
    """Right-hand side of the leader's nonsymmetric Riccati equation solved for dPhi/dt.

    The full equation is
    ``dPhi/dt - Phi B2 + Phi A2 Phi - A1 Phi + B1 + C Phi C = 0``; ``c_term``
    selects how the ``C Phi C`` term enters: ``plus`` (as written, the value
    implied by ``Z = -Phi C Y``), ``minus``, or ``omitted``. ``omitted`` is the
    equation that ``Phi = alpha beta^-1`` satisfies exactly, so the flow and
    the direct solve only agree for ``C0 = 0`` unless this is selected.
    """
    blocks = _blocks_at(params, Pi_limit)
    s = _C_SIGN[c_term]

    def rhs(t, Phi):
        b = blocks(t)
        out = Phi @ b.B2 - Phi @ b.A2 @ Phi + b.A1 @ Phi - b.B1
        if s:
            out = out - s * (b.C @ Phi @ b.C)
        return out

    return rhs


def phi_residual(params: ModelParams, Pi_limit: Trajectory, Phi: Trajectory,
                 c_term: CTerm = "plus") -> float:
    """sup-norm residual of the Riccati equation for ``Phi`` on its own grid.

    dPhi/dt is taken by five-point central differences, so only interior
    nodes ``2 .. M-2`` enter. Coefficients are read at the nodes.
    """
    grid = Phi.grid
    if grid.M < 4:
        raise ValueError("need at least 4 steps for the residual stencil")
    V = Phi.values
    h = grid.h
    dPhi = (V[:-4] - 8.0 * V[1:-3] + 8.0 * V[3:-1] - V[4:]) / (12.0 * h)
    rhs = phi_rhs(params, Pi_limit, c_term)
    t = grid.t
    res = 0.0
    for j, k in enumerate(range(2, grid.M - 1)):
        res = max(res, float(np.max(np.abs(dPhi[j] - rhs(t[k], V[k])))))
    return res


def solve_phi_flow(params: ModelParams, Pi_limit: Trajectory, grid: TimeGrid,
                   tolerances: Tolerances = Tolerances(),
                   residual_c_term: CTerm = "plus") -> LeaderDecoupling:
    """Integrate the linear 6x3 flow for ``(alpha, beta)`` and form ``Phi = alpha beta^-1``.

    Raises ``BetaSingularError`` if ``cond(beta)`` exceeds
    ``tolerances.beta_condition_max`` at any node.
    """
    blocks = _blocks_at(params, Pi_limit)

    def rhs(t, ab):
        b = blocks(t)
        a, be = ab[:3], ab[3:]
        return np.vstack([b.A1 @ a - b.B1 @ be, b.A2 @ a - b.B2 @ be])

    terminal = np.vstack([np.zeros((3, 3)), np.eye(3)])
    ab = integrate_backward_ode(rhs, terminal, grid, what="(alpha, beta) flow")
    alpha = ab.values[:, :3, :]
    beta = ab.values[:, 3:, :]
    cond = np.linalg.cond(beta)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > tolerances.beta_condition_max))
    if bad.size:
        k = int(bad[-1])
        raise BetaSingularError(k, float(cond[k]))
    # Phi beta = alpha  <=>  beta^T Phi^T = alpha^T
    Phi = np.swapaxes(np.linalg.solve(np.swapaxes(beta, 1, 2), np.swapaxes(alpha, 1, 2)), 1, 2)
    Phi_traj = Trajectory(grid, Phi)
    return LeaderDecoupling(
        alpha=Trajectory(grid, alpha),
        beta=Trajectory(grid, beta),
        Phi=Phi_traj,
        beta_cond=Trajectory(grid, cond),
        residual_sup=phi_residual(params, Pi_limit, Phi_traj, residual_c_term),
    )


def solve_phi_direct(params: ModelParams, Pi_limit: Trajectory, grid: TimeGrid,
                     c_term: CTerm = "plus") -> Trajectory:
    """Integrate the Riccati equation for ``Phi`` itself from ``Phi(T) = 0``."""
    return integrate_backward_ode(phi_rhs(params, Pi_limit, c_term), np.zeros((3, 3)),
                                  grid, what="Phi Riccati")


def solve_Psi(params: ModelParams, Phi: Trajectory, grid: TimeGrid, xi0_mean: float,
              Pi_limit: Optional[Trajectory] = None) -> Trajectory:
    """Offset of the affine decoupling, ``Psi(T) = [xi0_mean, 0, 0]``.

    ``Pi_limit`` defaults to a fresh solve on ``Phi.grid``; pass one that lives
    on (at least) ``Phi.grid`` to avoid recomputation.
    """
    if Pi_limit is None:
        Pi_limit = solve_Pi(params, Phi.grid, LIMIT)
    blocks = _blocks_at(params, Pi_limit)

    def rhs(t, psi):
        b = blocks(t)
        phi = Phi(t)
        return b.A1 @ psi + b.f0 - phi @ (b.A2 @ psi) - phi @ b.f

    return integrate_backward_ode(rhs, np.array([xi0_mean, 0.0, 0.0]), grid, what="Psi equation")
