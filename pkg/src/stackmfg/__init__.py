"""Linear-quadratic Stackelberg mean field game with a backward leader and
forward followers: Riccati solvers, the decoupled limit system, decentralized
strategies and a Monte Carlo population simulator."""

from .config import LIMIT, DistSpec, ModelParams, SimConfig, TimeGrid, Tolerances, validate
from .limit_system import LimitSolution, simulate_limit, solve_limit
from .riccati import solve_follower_riccati, solve_phi_direct, solve_phi_flow
from .simulation import epsilon_sweep, perturbation_gap, simulate_ensemble

__all__ = [
    "LIMIT",
    "DistSpec",
    "ModelParams",
    "SimConfig",
    "TimeGrid",
    "Tolerances",
    "validate",
    "LimitSolution",
    "simulate_limit",
    "solve_limit",
    "solve_follower_riccati",
    "solve_phi_direct",
    "solve_phi_flow",
    "epsilon_sweep",
    "perturbation_gap",
    "simulate_ensemble",
]
