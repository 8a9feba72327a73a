"""Elastic stress: the upper-convected ODE at fixed labels and the UCM shear oracle.

Stress is carried as ``(N, 3)`` arrays of ``(T11, T12, T22)``. The physical
velocity gradient ``A`` is passed in as ``(N, 2, 2)`` matrices with
``A[i, k] = d u_i / d x_k``; see :func:`velocity_gradient`.
"""

import numpy as np

from .errors import ParamError
from .params import sym_to_mat, mat_to_sym


def velocity_gradient(grid, v, zeta, jac):
    """Physical gradient grad(v) zeta J^P(X) at every node."""
    return grad_v_to_physical(grid.grad(v), zeta, jac)


def grad_v_to_physical(gv, zeta, jac):
    return np.einsum("nij,njk,nkl->nil", gv, zeta, jac)


def stress_rate(T, A, we, kappa):
    """A T + T A^T - T/We + (kappa/We)(A + A^T) on matrices."""
    At = np.swapaxes(A, -1, -2)
    return A @ T + T @ At - T / we + (kappa / we) * (A + At)


def _transport_rate(T, A):
    return A @ T + T @ np.swapaxes(A, -1, -2)


def _midpoint(T_prev, A, dt, rate):
    T = sym_to_mat(T_prev)
    A = np.asarray(A, dtype=float)
    Tm = T + 0.5 * dt * rate(T, A)
    return mat_to_sym(T + dt * rate(Tm, A))


def advance_stress(T_prev, A, p, dt):
    """Midpoint step of the stress ODE with ``A`` frozen; result symmetrized."""
    we, kappa = p.weissenberg, p.kappa
    if not we > 0:
        raise ParamError("must be > 0", pointer="/params/weissenberg")
    return _midpoint(T_prev, A, dt, lambda T, A: stress_rate(T, A, we, kappa))


def infinite_we_mode(T_prev, A, dt):
    """Same step with relaxation and source removed (We -> infinity)."""
    return _midpoint(T_prev, A, dt, _transport_rate)


def ucm_shear_oracle(gammadot, t, p):
    """Closed form for grad u = [[0, g], [0, 0]] starting from zero stress."""
    we = p.weissenberg
    if not we > 0:
        raise ParamError("must be > 0", pointer="/params/weissenberg")
    k, g = p.kappa, gammadot
    E = np.exp(-t / we)
    t12 = k * g * (1 - E)
    t11 = 2 * k * g * g * (we * (1 - E) - t * E)
    return np.array([[t11, t12], [t12, 0.0]])
