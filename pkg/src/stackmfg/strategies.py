"""Decentralized feedback strategies and their first-order optimality residuals.

Every function is pure and broadcasts over numpy arrays in the state
arguments; ``t`` is a scalar time at which the Riccati coefficients are read
(exactly, when ``t`` is a grid node).
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import ModelParams
from .riccati import FollowerRiccati, Trajectory


@dataclass(frozen=True)
class LeaderStrategy:
    params: ModelParams
    Pi: Trajectory

    def control(self, t, ybar0, ybar, psibar):
        p = self.params
        g = p.g
        return -(p.B0 * ybar0 + g * ybar - float(self.Pi(t)) * g * psibar) / p.R0

    __call__ = control

    def stationarity_residual(self, t, ybar0, ybar, psibar, u0):
        p = self.params
        g = p.g
        return p.B0 * ybar0 + p.R0 * u0 + g * ybar - float(self.Pi(t)) * g * psibar


@dataclass(frozen=True)
class FollowerStrategy:
    params: ModelParams
    P: Trajectory
    K: Trajectory

    @classmethod
    def from_riccati(cls, params: ModelParams, riccati: FollowerRiccati) -> "FollowerStrategy":
        return cls(params, riccati.P, riccati.K)

    def _costate(self, t, x_i, xbar, phibar):
        return float(self.P(t)) * x_i + float(self.K(t)) * xbar + phibar

    def control(self, t, x_i, xbar, phibar, u0):
        p = self.params
        return -(p.B * self._costate(t, x_i, xbar, phibar) + p.L * u0) / p.R

    __call__ = control

    def drift(self, t, x_i, xbar, phibar, x0, u0):
        """Closed-loop follower drift under :meth:`control`."""
        p = self.params
        b2r = p.b2r
        P, K = float(self.P(t)), float(self.K(t))
        return ((p.A - b2r * P) * x_i - b2r * (K * xbar + phibar)
                + p.F * x0 + p.g * u0 + p.f)

    def open_loop_drift(self, x_i, u_i, x0, u0):
        p = self.params
        return p.A * x_i + p.B * u_i + p.F * x0 + p.G * u0 + p.f

    def stationarity_residual(self, t, x_i, xbar, phibar, u_i, u0):
        p = self.params
        return p.B * self._costate(t, x_i, xbar, phibar) + p.R * u_i + p.L * u0


def leader_control(strategy: LeaderStrategy, t, ybar0, ybar, psibar):
    return strategy.control(t, ybar0, ybar, psibar)


def follower_control(strategy: FollowerStrategy, t, x_i, xbar, phibar, u0):
    return strategy.control(t, x_i, xbar, phibar, u0)


def follower_drift(strategy: FollowerStrategy, t, x_i, xbar, phibar, x0, u0):
    return strategy.drift(t, x_i, xbar, phibar, x0, u0)


def stationarity_residual_follower(strategy: FollowerStrategy, t, x_i, xbar, phibar, u_i, u0):
    return strategy.stationarity_residual(t, x_i, xbar, phibar, u_i, u0)


def stationarity_residual_leader(strategy: LeaderStrategy, t, ybar0, ybar, psibar, u0):
    return strategy.stationarity_residual(t, ybar0, ybar, psibar, u0)
