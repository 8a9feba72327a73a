import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from oldroyd_splash.conformal import BranchMap, IdentityMap
from oldroyd_splash.errors import MeshFoldError, SingularJacobian
from oldroyd_splash.flux import FluxState, advance_flux, cofactor, cofactor_gradient, compute_zeta

P = BranchMap()


def test_zero_velocity_keeps_flux():
    X = np.array([[1.0, 0.5], [2.0, -1.0]])
    assert np.array_equal(advance_flux(X, np.zeros_like(X), 0.1, P), X)


def test_identity_mode_constant_shift():
    X = np.array([[1.0, 0.5], [2.0, -1.0]])
    v = np.tile([1.0, 0.0], (2, 1))
    assert np.allclose(advance_flux(X, v, 0.1, IdentityMap()), X + [0.1, 0], atol=1e-15)


def rk4_path(x0, c, t_end, steps):
    X = np.array([x0])
    v = np.array([c])
    for _ in range(steps):
        X = advance_flux(X, v, t_end / steps, P)
    return X[0]


def oracle(x0, c, t_end):
    rhs = lambda t, x: P.jacobian(x) @ c
    sol = solve_ivp(rhs, (0, t_end), x0, method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1]


def test_rk4_matches_adaptive_oracle():
    x0, c = np.array([1.0, 0.3]), np.array([0.7, -0.4])
    assert np.abs(rk4_path(x0, c, 0.1, 10) - oracle(x0, c, 0.1)).max() < 1e-8


def test_rk4_order():
    x0, c = np.array([0.6, -0.5]), np.array([1.0, 1.0])
    ref = oracle(x0, c, 0.4)
    e = [np.abs(rk4_path(x0, c, 0.4, s) - ref).max() for s in (4, 8, 16)]
    orders = np.log2(np.array(e[:-1]) / e[1:])
    assert orders.min() >= 3.9


def test_linear_in_time_velocity():
    # dX/dt = v0 + t (v1 - v0)/dt in identity mode integrates exactly
    X = np.zeros((1, 2))
    out = advance_flux(X, np.array([[1.0, 0.0]]), 0.5, IdentityMap(), v_end=np.array([[3.0, 0.0]]))
    assert np.allclose(out, [[1.0, 0.0]])


def test_branch_point_raises():
    with pytest.raises(SingularJacobian):
        advance_flux(np.zeros((1, 2)), np.ones((1, 2)), 0.1, P)


def test_zeta_examples(unit_grid):
    a = unit_grid.nodes
    assert np.allclose(compute_zeta(unit_grid, a), np.eye(2), atol=1e-10)
    assert np.allclose(compute_zeta(unit_grid, 2 * a), 0.5 * np.eye(2), atol=1e-10)
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert np.allclose(compute_zeta(unit_grid, a @ R.T), R.T, atol=1e-10)


def test_zeta_inverts_gradient_for_smooth_flux(unit_grid):
    a = unit_grid.nodes
    X = a + 0.1 * np.column_stack([np.sin(a[:, 1]), a[:, 0] ** 2])
    G = unit_grid.grad(X)
    assert np.abs(compute_zeta(unit_grid, X) @ G - np.eye(2)).max() < 1e-10


def test_fold_raises(unit_grid):
    a = unit_grid.nodes
    with pytest.raises(MeshFoldError):
        compute_zeta(unit_grid, a * [1.0, -1.0])


def test_cofactor_examples(unit_grid):
    assert np.allclose(cofactor_gradient(unit_grid, unit_grid.nodes), np.eye(2), atol=1e-10)
    assert np.array_equal(cofactor(np.array([[1.0, 2.0], [3.0, 4.0]])), [[4, -3], [-2, 1]])
    L = np.array([[0.0, -1.0], [1.0, 0.0]])
    G = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(cofactor(G), -L @ G @ L)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_cofactor_keeps_determinant(seed):
    G = np.random.default_rng(seed).normal(size=(50, 2, 2))
    assert np.allclose(np.linalg.det(cofactor(G)), np.linalg.det(G), rtol=0, atol=1e-12)


def test_flux_state(unit_grid):
    s = FluxState.from_flux(unit_grid, unit_grid.nodes)
    assert np.allclose(s.zeta, np.eye(2), atol=1e-10)
    assert np.allclose(s.grad_lambda, np.eye(2), atol=1e-10)


def test_rigid_rotation_preserves_area(unit_grid):
    # Lagrangian velocity of a rigid rotation, exact at both ends of each step
    g = unit_grid
    a = g.nodes

    def v(t):
        return np.column_stack([-np.sin(t) * a[:, 0] - np.cos(t) * a[:, 1],
                                np.cos(t) * a[:, 0] - np.sin(t) * a[:, 1]])

    X, dt = a.copy(), 0.01
    for k in range(100):
        X = advance_flux(X, v(k * dt), dt, IdentityMap(), v_end=v((k + 1) * dt))
    det = np.linalg.det(g.grad(X))
    assert np.abs(det - 1).max() < 1e-5
