"""Riccati and decoupling solvers against independent scipy integrations."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from stackmfg.blocks import assemble_blocks
from stackmfg.config import LIMIT, ModelParams, TimeGrid, Tolerances
from stackmfg.riccati import (
    BetaSingularError,
    BlowUpError,
    Trajectory,
    integrate_backward_ode,
    phi_residual,
    riccati_convergence_gap,
    solve_follower_riccati,
    solve_P,
    solve_phi_direct,
    solve_phi_flow,
    solve_Pi,
    solve_Psi,
)

REF = ModelParams()


def scipy_backward(rhs, terminal, T, t_eval):
    """Reference solution with DOP853 at tight tolerances, integrated T -> 0."""
    y0 = np.asarray(terminal, dtype=float)
    sol = solve_ivp(lambda t, y: rhs(t, y.reshape(y0.shape)).ravel(), (T, 0.0), y0.ravel(),
                    method="DOP853", rtol=1e-12, atol=1e-13, t_eval=t_eval[::-1], dense_output=True)
    assert sol.success
    return sol.y.T[::-1].reshape((len(t_eval),) + y0.shape), sol


def follower_oracle(p, N=LIMIT):
    c = 1.0 if N == LIMIT else 1.0 - p.Gamma / N
    b = p.B ** 2 / p.R

    def rhs(_t, y):
        P, K, Pi = y
        return np.array([
            -(2 * p.A * P - b * P * P + c * p.Q),
            -(2 * p.A * K - b * P * K - b * K * (P + K) - c * p.Q * p.Gamma),
            -(2 * p.A * Pi - b * Pi * Pi + c * p.Q * (1 - p.Gamma)),
        ])

    return rhs, np.array([p.H, 0.0, p.H])


def test_trajectory_interpolation_exact_at_nodes():
    g = TimeGrid(1.0, 4)
    tr = Trajectory(g, np.array([0.0, 1.0, 4.0, 9.0, 16.0]))
    assert tr(0.5) == 4.0
    assert tr(0.375) == 2.5
    assert tr(-1.0) == 0.0 and tr(2.0) == 16.0


def test_rk4_fourth_order_on_linear_ode():
    # y' = y, y(1) = 1  =>  y(0) = e^-1
    errs = [abs(integrate_backward_ode(lambda t, y: y, 1.0, TimeGrid(1.0, M)).values[0] - np.exp(-1))
            for M in (10, 20)]
    assert 14 < errs[0] / errs[1] < 18


def test_pure_quadratic_closed_form():
    p = ModelParams(A=0.0, B=1.0, R=1.0, Q=0.0, H=1.0, T=1.0)
    g = TimeGrid(1.0, 1000)
    P = solve_P(p, g)
    assert np.max(np.abs(P.values - 1.0 / (1.0 + (1.0 - g.t)))) < 1e-12


@pytest.mark.parametrize("N", [LIMIT, 7, 100])
def test_follower_triple_matches_scipy(N):
    g = TimeGrid(5.0, 1000)
    ric = solve_follower_riccati(REF, g, N)
    rhs, term = follower_oracle(REF, N)
    ref, _ = scipy_backward(rhs, term, 5.0, g.t)
    got = np.stack([ric.P.values, ric.K.values, ric.Pi.values], axis=1)
    assert np.max(np.abs(got - ref)) < 1e-9


def test_reference_riccati_values():
    # frozen from the scipy oracle above (DOP853, rtol 1e-12)
    ric = solve_follower_riccati(REF, TimeGrid(5.0, 2000))
    assert ric.P.values[0] == pytest.approx(2.4142115220769, abs=1e-9)
    assert ric.K.values[0] == pytest.approx(-0.1894784016670, abs=1e-9)
    assert ric.Pi.values[0] == pytest.approx(2.2247331204099, abs=1e-9)


def test_stationary_limit_of_P():
    # far from T, P approaches the positive root of b P^2 - 2 A P - Q = 0
    p = REF.replace(T=30.0)
    P = solve_P(p, TimeGrid(30.0, 3000))
    assert P.values[0] == pytest.approx(1.0 + np.sqrt(2.0), abs=1e-10)


def test_terminal_values_exact():
    ric = solve_follower_riccati(REF, TimeGrid(5.0, 500))
    assert (ric.P.values[-1], ric.K.values[-1], ric.Pi.values[-1]) == (REF.H, 0.0, REF.H)


def test_gamma_zero_gives_zero_K():
    ric = solve_follower_riccati(REF.replace(Gamma=0.0), TimeGrid(5.0, 200))
    assert np.all(ric.K.values == 0.0)


@st.composite
def follower_params(draw):
    return REF.replace(
        A=draw(st.floats(-2, 2)), B=draw(st.floats(-2, 2)), R=draw(st.floats(0.2, 5)),
        Q=draw(st.floats(0, 5)), H=draw(st.floats(0, 5)), Gamma=draw(st.floats(-2, 1)),
        T=draw(st.floats(0.5, 5)),
    )


@settings(max_examples=30, deadline=None)
@given(follower_params())
def test_identity_pi_equals_p_plus_k(p):
    ric = solve_follower_riccati(p, TimeGrid(p.T, 400))
    assert ric.identity_gap <= 1e-8 * max(1.0, ric.Pi.sup)


@settings(max_examples=20, deadline=None)
@given(follower_params(), st.integers(2, 400))
def test_finite_N_identity(p, N):
    ric = solve_follower_riccati(p, TimeGrid(p.T, 400), N)
    assert ric.identity_gap <= 1e-8 * max(1.0, ric.Pi.sup)


def test_finite_N_gap_decays_like_one_over_N():
    g = TimeGrid(5.0, 1000)
    gaps = [riccati_convergence_gap(REF, g, N) for N in (50, 100, 200)]
    assert gaps[1] / gaps[0] == pytest.approx(0.5, abs=0.01)
    assert gaps[2] / gaps[1] == pytest.approx(0.5, abs=0.01)


def test_blow_up_names_node():
    # negative terminal weight: P = -1 / (1 - (T - t)) explodes at t = T - 1
    p = ModelParams(A=0.0, Q=0.0, H=-1.0, T=5.0)
    with pytest.raises(BlowUpError) as info:
        solve_P(p, TimeGrid(5.0, 1000))
    assert 790 <= info.value.node <= 800


# ---------------------------------------------------------------------------
# leader decoupling
# ---------------------------------------------------------------------------

def phi_oracle(p, sign):
    def rhs(t, Phi):
        Pi = PI_ORACLE(p)(t)
        b = assemble_blocks(p, float(Pi))
        return Phi @ b.B2 - Phi @ b.A2 @ Phi + b.A1 @ Phi - b.B1 - sign * (b.C @ Phi @ b.C)
    return rhs


_pi_cache = {}


def PI_ORACLE(p):
    if p not in _pi_cache:
        rhs, term = follower_oracle(p)
        _, sol = scipy_backward(rhs, term, p.T, np.array([0.0, p.T]))
        _pi_cache[p] = lambda t: sol.sol(t)[2]
    return _pi_cache[p]


def decouple(p, M=500):
    g = TimeGrid(p.T, M)
    Pi4 = solve_Pi(p, g.refined(4))
    return g, Pi4, solve_phi_flow(p, Pi4, g.refined(2))


@pytest.mark.parametrize("C0,sign", [(0.0, 1.0), (1.0, 0.0)])
def test_flow_matches_scipy_direct_riccati(C0, sign):
    p = REF.replace(C0=C0)
    g, Pi4, dec = decouple(p)
    ref, _ = scipy_backward(phi_oracle(p, sign), np.zeros((3, 3)), p.T, dec.Phi.grid.t)
    assert np.max(np.abs(dec.Phi.values - ref)) < 1e-8


def test_flow_without_common_noise_agrees_with_direct():
    p = REF.replace(C0=0.0)
    g, Pi4, dec = decouple(p)
    direct = solve_phi_direct(p, Pi4, g.refined(2), "plus")
    assert np.max(np.abs(dec.Phi.values - direct.values)) < 1e-9
    assert dec.residual_sup < 1e-6


def test_flow_solves_equation_without_C_term():
    g, Pi4, dec = decouple(REF)
    direct = solve_phi_direct(REF, Pi4, g.refined(2), "omitted")
    assert np.max(np.abs(dec.Phi.values - direct.values)) < 1e-9
    assert phi_residual(REF, Pi4.restrict(g.refined(2)), dec.Phi, "omitted") < 1e-6


def test_C_term_changes_solution_by_order_one():
    # with C0 = 1 the two-sided C Phi C term cannot be generated by the flow
    g, Pi4, dec = decouple(REF)
    direct = solve_phi_direct(REF, Pi4, g.refined(2), "plus")
    assert np.max(np.abs(dec.Phi.values - direct.values)) > 0.1


def test_reference_phi_at_zero():
    g, Pi4, dec = decouple(REF, M=1000)
    expected = np.array([
        [0.42180587, 0.07500611, 0.27828198],
        [-0.07500611, 0.07215345, -0.1021754],
        [0.27828198, 0.1021754, 0.35391787],
    ])
    assert np.max(np.abs(dec.Phi.values[0] - expected)) < 1e-7
    assert not np.allclose(dec.Phi.values[0], dec.Phi.values[0].T)


def test_flow_terminal_data_exact():
    _, _, dec = decouple(REF, M=100)
    assert np.array_equal(dec.alpha.values[-1], np.zeros((3, 3)))
    assert np.array_equal(dec.beta.values[-1], np.eye(3))
    assert np.array_equal(dec.Phi.values[-1], np.zeros((3, 3)))
    assert dec.beta_cond.values[-1] == 1.0
    assert np.all(np.isfinite(dec.beta_cond.values))


def test_zero_phi_configuration():
    p = REF.replace(B0=0.0, Gamma0=0.0, G=REF.B * REF.L / REF.R)
    _, _, dec = decouple(p, M=100)
    assert np.all(dec.Phi.values == 0.0)


def test_beta_singularity_raises():
    g = TimeGrid(5.0, 100)
    with pytest.raises(BetaSingularError) as info:
        solve_phi_flow(REF, solve_Pi(REF, g.refined(2)), g, Tolerances(beta_condition_max=2.0))
    assert 0 <= info.value.node < 100


def test_psi_matches_scipy():
    p = REF.replace(xi0_spec=REF.xi0_spec.parse("gaussian:0.7:5"))
    g, Pi4, dec = decouple(p)
    Psi = solve_Psi(p, dec.Phi, g, p.xi0_mean, Pi_limit=Pi4.restrict(g.refined(2)))
    _, phisol = scipy_backward(phi_oracle(p, 0.0), np.zeros((3, 3)), p.T, np.array([0.0, p.T]))

    def rhs(t, psi):
        b = assemble_blocks(p, float(PI_ORACLE(p)(t)))
        phi = phisol.sol(t).reshape(3, 3)
        return b.A1 @ psi + b.f0 - phi @ (b.A2 @ psi) - phi @ b.f

    ref, _ = scipy_backward(rhs, np.array([0.7, 0.0, 0.0]), p.T, g.t)
    assert np.max(np.abs(Psi.values - ref)) < 1e-8
    assert np.array_equal(Psi.values[-1], [0.7, 0.0, 0.0])
