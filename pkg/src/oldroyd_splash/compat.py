"""Compatibility of initial data: divergence, deformation gradient, tangential traction."""

import numpy as np

from .conformal import IdentityMap
from .params import sym_to_mat


def check_compatibility(v0, T0, grid, p, F0=None, cmap=None):
    """Residuals of the initial compatibility conditions on ``grid``.

    ``v0`` is the physical velocity at the nodes, ``T0`` the stress in
    ``(N, 3)`` storage. Gradients are taken in physical coordinates through
    the Jacobian of ``cmap`` (identity by default). ``F0`` defaults to the
    identity; its divergence is taken row by row in label coordinates.
    Each residual is a max over nodes (boundary nodes for the traction).
    """
    cmap = IdentityMap() if cmap is None else cmap
    N = grid.N
    v0 = np.asarray(v0, dtype=float)
    T0 = np.zeros((N, 3)) if T0 is None else np.asarray(T0, dtype=float)
    F0 = np.broadcast_to(np.eye(2), (N, 2, 2)) if F0 is None else np.asarray(F0, dtype=float)
    J = cmap.jacobian(grid.nodes)
    A = np.einsum("nij,njk->nik", grid.grad(v0), J)
    div_u = float(np.abs(np.trace(A, axis1=1, axis2=2)).max())
    gF = grid.grad(F0)  # [n, i, k, l] = d_l F_ik
    div_F = float(np.abs(np.einsum("nikk->ni", gF)).max())
    det_F = float(np.abs(np.linalg.det(F0) - 1.0).max())
    b = grid.boundary
    n = np.einsum("nji,nj->ni", J[b], grid.normals)
    n /= np.linalg.norm(n, axis=1)[:, None]
    t = np.column_stack([-n[:, 1], n[:, 0]])
    S = p.nu * (A[b] + np.swapaxes(A[b], 1, 2)) + sym_to_mat(T0[b])
    traction = float(np.abs(np.einsum("ni,nij,nj->n", t, S, n)).max())
    report = {"div_u": div_u, "div_F": div_F, "det_F": det_F, "traction_tangential": traction}
    report["pass"] = all(v < p.tol_div for v in report.values())
    return report


def scenario_compatibility(scenario, F0=None):
    return check_compatibility(scenario.initial_velocity_field(), scenario.initial_stress_field(),
                               scenario.grid, scenario.params, F0, scenario.cmap())
