import numpy as np
import pytest
from scipy.integrate import solve_ivp

from stackmfg.blocks import assemble_blocks
from stackmfg.config import ModelParams, TimeGrid, Tolerances
from stackmfg.limit_system import (
    DegenerateFixedPointError,
    mean_path,
    resolve_fixed_point,
    simulate_limit,
    simulate_limit_path,
    solve_limit,
)

REF = ModelParams()


def test_block_entries_reference_set():
    b = assemble_blocks(REF, 2.0)
    # with g = 0 the leader control decouples from the follower adjoints
    assert np.array_equal(b.A1, [[1, 0, 0], [0.5, 1, 0], [-1.5, 0, 1]])
    assert np.array_equal(b.B1, [[1, 0, 0], [0, 0.25, 0], [0, 0, 0]])
    assert np.array_equal(b.A2, [[-1, -1, 0], [1, 0, -1], [0, 1, 0]])
    assert np.array_equal(b.B2, [[1, -0.5, -1.5], [0, 1, 0], [0, 0, 1]])
    assert np.array_equal(b.f0, [1, -0.5, -1])
    assert np.array_equal(b.f, [1, 1, 0])


def test_fixed_point_without_terminal_weight():
    Phi0 = np.arange(9.0).reshape(3, 3)
    Psi0 = np.array([0.5, 0.0, 0.0])
    fp = resolve_fixed_point(Phi0, Psi0, REF)
    assert fp.x0_init == 1.0 * 5.0 + 0.5
    assert np.array_equal(fp.Y0, [0.0, 5.0, 0.0])


def test_fixed_point_is_consistent_with_decoupling():
    p = REF.replace(H0=0.7)
    Phi0 = np.array([[0.3, 0.2, 0.1], [0, 0, 0], [0, 0, 0]])
    Psi0 = np.array([-0.4, 0.0, 0.0])
    fp = resolve_fixed_point(Phi0, Psi0, p)
    assert fp.x0_init == pytest.approx((Phi0 @ fp.Y0 + Psi0)[0], abs=1e-14)
    assert fp.Y0[0] == pytest.approx(0.7 * fp.x0_init)


def test_degenerate_fixed_point():
    p = REF.replace(H0=2.0)
    Phi0 = np.diag([0.5, 0.0, 0.0])
    with pytest.raises(DegenerateFixedPointError):
        resolve_fixed_point(Phi0, np.zeros(3), p, Tolerances(fixed_point_denominator_min=1e-10))


def test_limit_solution_terminal_data(ref_solution):
    assert np.array_equal(ref_solution.Psi[-1], [REF.xi0_mean, 0.0, 0.0])
    assert np.array_equal(ref_solution.Phi[-1], np.zeros((3, 3)))
    assert ref_solution.fixed_point.Y0[1] == REF.xi_bar


def test_state_satisfies_affine_relation(ref_solution):
    rng = np.random.default_rng(0)
    dW0 = rng.normal(scale=np.sqrt(ref_solution.grid.h), size=(3, ref_solution.grid.M))
    s = simulate_limit(ref_solution, dW0)
    X = np.einsum("kij,nkj->nki", ref_solution.Phi, s.Y) + ref_solution.Psi
    assert np.max(np.abs(s.X - X)) < 1e-12
    Z = -REF.C0 * s.Y[:, :, 0, None] * ref_solution.Phi[None, :, :, 0]
    assert np.array_equal(s.Z, Z)
    assert np.array_equal(s.path(1).Y, simulate_limit_path(ref_solution, dW0[1]).Y)


def test_mean_path_matches_mean_ode(ref_solution):
    """Noise-free recursion vs scipy on dY/dt = A2 (Phi Y + Psi) - B2 Y + f."""
    sol = ref_solution
    g = sol.grid
    A2, B2, f = sol.node_blocks()
    Phi_of = lambda t: np.array([np.interp(t, g.t, sol.Phi[:, i, j]) for i in range(3) for j in range(3)]).reshape(3, 3)
    Psi_of = lambda t: np.array([np.interp(t, g.t, sol.Psi[:, i]) for i in range(3)])

    def rhs(t, y):
        b = assemble_blocks(REF, float(sol.riccati.Pi(t)))
        return b.A2 @ (Phi_of(t) @ y + Psi_of(t)) - b.B2 @ y + b.f

    ref = solve_ivp(rhs, (0, g.T), sol.fixed_point.Y0, t_eval=g.t, rtol=1e-10, atol=1e-12, max_step=g.h)
    mp = mean_path(sol)
    # Euler is first order: error O(h)
    assert np.max(np.abs(mp.Y - ref.y.T)) < 20 * g.h


def test_deterministic_limit_solves_backward_equation():
    """Without common noise X = Phi Y + Psi must solve dX = (A1 X - B1 Y + f0) dt."""
    p = REF.replace(C0=0.0)
    g = TimeGrid(5.0, 4000)
    sol = solve_limit(p, g)
    st = mean_path(sol)
    dX = np.gradient(st.X, g.h, axis=0)
    res = []
    for k in range(1, g.M):
        b = assemble_blocks(p, float(sol.riccati.Pi.values[k]))
        res.append(dX[k] - (b.A1 @ st.X[k] - b.B1 @ st.Y[k] + b.f0))
    assert np.max(np.abs(res)) < 50 * g.h
    assert st.X[-1][0] == pytest.approx(p.xi0_mean, abs=1e-12)


def test_mean_path_is_monte_carlo_mean(ref_solution):
    sol = ref_solution
    rng = np.random.default_rng(1)
    n = 4000
    dW0 = rng.normal(scale=np.sqrt(sol.grid.h), size=(n, sol.grid.M))
    s = simulate_limit(sol, dW0)
    mp = mean_path(sol)
    for k in (sol.grid.M // 2, sol.grid.M):
        se = s.Y[:, k].std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(s.Y[:, k].mean(axis=0) - mp.Y[k]) <= 4 * se + 1e-12)


def test_simulate_limit_rejects_wrong_length(ref_solution):
    with pytest.raises(ValueError):
        simulate_limit(ref_solution, np.zeros(7))
