"""Pulled-back differential operators built on the grid's physical derivatives.

Conventions: ``grad`` gives ``G[n, i, k] = d_k v_i`` in reference coordinates;
``zeta = (grad X)^-1`` so ``d/dX_k = sum_j zeta[j, k] d_j``.
"""

import numpy as np

from .params import sym_to_mat


def trace_constraint(gv, zeta, jac):
    """Tr(grad v zeta J) per node."""
    return np.einsum("nik,nkl,nli->n", gv, zeta, jac)


def divergence_tensor(grid, T, zeta, jac):
    """Physical divergence of a symmetric tensor in (N, 3) storage."""
    gT = grid.grad(sym_to_mat(T))  # [n, i, m, j]
    return np.einsum("nimj,njk,nkm->ni", gT, zeta, jac)


def lagrangian_laplacian(grid, u, zeta, gzeta=None):
    """zeta d (zeta d u): the Laplacian in current coordinates pulled back.

    ``u`` is ``(N,)`` or ``(N, c)``. ``gzeta`` may carry the precomputed
    gradient of ``zeta``.
    """
    u = np.asarray(u, dtype=float)
    flat = u.reshape(grid.N, -1)
    if gzeta is None:
        gzeta = grid.grad(zeta)  # [n, l, k, j] = d_j zeta_lk
    M = np.einsum("njk,nlk->njl", zeta, zeta)
    b = np.einsum("njk,nlkj->nl", zeta, gzeta)
    out = np.zeros_like(flat)
    for j in range(2):
        for l in range(2):
            out += M[:, j, l, None] * (grid.H[j][l] @ flat)
    for l in range(2):
        out += b[:, l, None] * (grid.D[l] @ flat)
    return out.reshape(u.shape)


def pressure_gradient(gq, zeta, jac):
    """J(X)^T zeta^T grad q."""
    return np.einsum("nki,njk,nj->ni", jac, zeta, gq)
