"""Coefficient blocks of the limit Hamiltonian system in the variables
``X = [x0_bar, y_bar, phi_bar]`` and ``Y = [y0_bar, x_bar, psi_bar]``:

    dX = [A1 X - B1 Y + C Z + f0] dt + Z dW0
    dY = [A2 X - B2 Y + f] dt - C Y dW0
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelParams


@dataclass(frozen=True)
class BlockMatrices:
    A1: np.ndarray
    B1: np.ndarray
    A2: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    f0_vec: np.ndarray
    f_vec: np.ndarray

    @property
    def f0(self) -> np.ndarray:
        return self.f0_vec

    @property
    def f(self) -> np.ndarray:
        return self.f_vec


def assemble_blocks(params: ModelParams, Pi_t: float) -> BlockMatrices:
    p = params
    g = p.g
    b2r = p.b2r
    a = -p.A + b2r * Pi_t
    e = -Pi_t * p.F + p.Q * p.Gamma1
    A1 = np.array([
        [p.A0, -p.B0 / p.R0 * g, 0.0],
        [p.Q0 * p.Gamma0, a, 0.0],
        [e, Pi_t / p.R0 * g * g, a],
    ])
    B1 = np.array([
        [p.B0 * p.B0 / p.R0, 0.0, -p.B0 / p.R0 * Pi_t * g],
        [0.0, p.Q0 * p.Gamma0 ** 2, 0.0],
        [-p.B0 / p.R0 * Pi_t * g, 0.0, Pi_t * Pi_t / p.R0 * g * g],
    ])
    A2 = np.array([
        [-p.Q0, -p.F, 0.0],
        [p.F, -g * g / p.R0, -b2r],
        [0.0, b2r, 0.0],
    ])
    B2 = np.array([
        [p.A0, -p.Q0 * p.Gamma0, e],
        [p.B0 / p.R0 * g, a, -Pi_t / p.R0 * g * g],
        [0.0, 0.0, a],
    ])
    C = np.zeros((3, 3))
    C[0, 0] = p.C0
    f0_vec = np.array([p.f0, -p.Q0 * p.Gamma0 * p.eta0, p.Q * p.eta - Pi_t * p.f])
    f_vec = np.array([p.Q0 * p.eta0, p.f, 0.0])
    return BlockMatrices(A1, B1, A2, B2, C, f0_vec, f_vec)
