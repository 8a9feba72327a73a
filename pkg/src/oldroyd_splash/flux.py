"""Lagrangian flux X(t, alpha): its ODE, inverse gradient and cofactor gradient."""

from dataclasses import dataclass

import numpy as np

from .conformal import BranchMap
from .errors import MeshFoldError

FOLD_TOL = 1e-6


def advance_flux(X, v, dt, cmap=None, v_end=None):
    """One RK4 step of dX/dt = J^P(X) v at every node.

    ``v`` is the nodal velocity at the start of the step. When ``v_end`` is
    given the velocity is taken linear in time across the step, otherwise it
    is held constant.
    """
    cmap = BranchMap() if cmap is None else cmap
    X = np.asarray(X, dtype=float)
    v0 = np.asarray(v, dtype=float)
    v1 = v0 if v_end is None else np.asarray(v_end, dtype=float)
    vm = 0.5 * (v0 + v1)

    def rate(x, vel):
        return np.einsum("nij,nj->ni", cmap.jacobian(x), vel)

    k1 = rate(X, v0)
    k2 = rate(X + 0.5 * dt * k1, vm)
    k3 = rate(X + 0.5 * dt * k2, vm)
    k4 = rate(X + dt * k3, v1)
    return X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def cofactor(G):
    """-Lambda G Lambda for Lambda the quarter turn: [[a,b],[c,d]] -> [[d,-c],[-b,a]]."""
    G = np.asarray(G, dtype=float)
    out = np.empty_like(G)
    out[..., 0, 0] = G[..., 1, 1]
    out[..., 0, 1] = -G[..., 1, 0]
    out[..., 1, 0] = -G[..., 0, 1]
    out[..., 1, 1] = G[..., 0, 0]
    return out


def invert_gradient(G, fold_tol=FOLD_TOL):
    """Adjugate over determinant, refusing folded or nearly folded nodes."""
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    bad = ~(det > fold_tol)
    if np.any(bad):
        k = int(np.flatnonzero(bad.ravel())[0])
        raise MeshFoldError(f"det(grad X) = {det.ravel()[k]:.3e} at node {k} is below {fold_tol:g}")
    adj = np.empty_like(G)
    adj[..., 0, 0] = G[..., 1, 1]
    adj[..., 0, 1] = -G[..., 0, 1]
    adj[..., 1, 0] = -G[..., 1, 0]
    adj[..., 1, 1] = G[..., 0, 0]
    return adj / det[..., None, None]


def compute_zeta(grid, X, fold_tol=FOLD_TOL):
    return invert_gradient(grid.grad(X), fold_tol)


def cofactor_gradient(grid, X):
    return cofactor(grid.grad(X))


@dataclass(frozen=True)
class FluxState:
    X: np.ndarray
    zeta: np.ndarray
    grad_lambda: np.ndarray

    @classmethod
    def from_flux(cls, grid, X, fold_tol=FOLD_TOL):
        X = np.asarray(X, dtype=float)
        G = grid.grad(X)
        return cls(X=X, zeta=invert_gradient(G, fold_tol), grad_lambda=cofactor(G))
