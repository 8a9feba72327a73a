"""The linearized momentum / trace-constraint / traction system and the initial lift.

One implicit Euler step of

    Re dv/dt - nu Q^2 Lap v + J^T grad q = f      interior nodes
    Tr(grad v J) - tau Lap q = g                  every node
    [-q I + nu (grad v J + (grad v J)^T)] J^-1 n0 = h   boundary nodes

is assembled as one sparse matrix over the unknowns ``[v1, v2, q]`` and
factorized once. ``J`` and ``Q^2`` are frozen at the reference positions.
The ``tau`` term is an O(h^2) pressure stabilization for the equal-order
collocation; without it checkerboard pressure modes are not controlled.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError, CompatibilityError
from .operators import trace_constraint, divergence_tensor
from .params import sym_to_mat


@dataclass
class LinearRHS:
    f: np.ndarray  # (N, 2)
    g: np.ndarray  # (N,)
    h: np.ndarray  # (nb, 2) on grid.boundary
    v0: np.ndarray = None

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros((grid.N, 2)), np.zeros(grid.N), np.zeros((len(grid.boundary), 2)),
                   np.zeros((grid.N, 2)))


class LinearSystem:
    """Factorized discrete operator for fixed grid, map, parameters and dt."""

    def __init__(self, grid, cmap, p, dt=None, refine_steps=2):
        if not p.reynolds > 0:
            raise SolverError("Re = 0 leaves rigid motions in the kernel of the traction problem",
                              condition=np.inf)
        self.grid, self.cmap, self.p = grid, cmap, p
        self.dt = p.dt if dt is None else dt
        self.refine_steps = refine_steps
        alpha = grid.nodes
        self.J0 = cmap.jacobian(alpha)
        self.J0inv = np.linalg.inv(self.J0)
        self.Q20 = cmap.q_squared(alpha)
        self.dJ0 = cmap.jacobian_derivatives(alpha)
        b = grid.boundary
        self.n0 = grid.normals
        self.c = np.einsum("nij,nj->ni", self.J0inv[b], self.n0)
        nu, re = p.nu, p.reynolds
        self.tau = p.stab_beta * grid.h**2 / (nu + re * grid.h**2 / (self.dt * self.Q20))
        self.K = self._assemble()
        try:
            self._lu = spla.splu(self.K.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}", condition=np.inf) from exc
        d = np.abs(self._lu.U.diagonal())
        if not np.all(np.isfinite(d)) or d.min() <= 1e-14 * d.max():
            raise SolverError("discrete system is numerically singular", condition=self.condition_estimate())

    # -- assembly -----------------------------------------------------------
    def _assemble(self):
        g, p = self.grid, self.p
        N, b = g.N, g.boundary
        nu, re, dt = p.nu, p.reynolds, self.dt
        D, J0 = g.D, self.J0
        I = sp.identity(N, format="csr")
        diag = sp.diags
        interior = np.ones(N)
        interior[b] = 0.0
        Pi = diag(interior)
        Sb = sp.csr_matrix((np.ones(len(b)), (b, b)), shape=(N, N))  # boundary selector
        # momentum on interior rows
        visc = re / dt * I - nu * diag(self.Q20) @ g.lap
        blocks = [[None] * 3 for _ in range(3)]
        for i in range(2):
            blocks[i][i] = Pi @ visc
            blocks[i][2] = Pi @ sum(diag(J0[:, k, i]) @ D[k] for k in range(2))
            if i == 0:
                blocks[0][1] = sp.csr_matrix((N, N))
            else:
                blocks[1][0] = sp.csr_matrix((N, N))
        # traction on boundary rows
        cb = np.zeros((N, 2))
        cb[b] = self.c
        nb = np.zeros((N, 2))
        nb[b] = self.n0
        Jb = np.zeros((N, 2, 2))
        Jb[b] = J0[b]
        normal_deriv = sum(diag(nb[:, k]) @ D[k] for k in range(2))
        for i in range(2):
            for m in range(2):
                op = nu * diag(cb[:, m]) @ sum(diag(Jb[:, k, i]) @ D[k] for k in range(2))
                if m == i:
                    op = op + nu * normal_deriv
                blocks[i][m] = blocks[i][m] + Sb @ op
            blocks[i][2] = blocks[i][2] - diag(cb[:, i])
        # stabilized trace constraint everywhere
        for m in range(2):
            blocks[2][m] = sum(diag(J0[:, k, m]) @ D[k] for k in range(2))
        blocks[2][2] = -diag(self.tau) @ g.lap
        return sp.bmat(blocks, format="csr")

    def _rhs_vector(self, rhs, v_prev):
        g, p = self.grid, self.p
        N, b = g.N, g.boundary
        f = np.asarray(rhs.f, dtype=float)
        vp = np.zeros((N, 2)) if v_prev is None else np.asarray(v_prev, dtype=float)
        mom = f + p.reynolds / self.dt * vp
        mom[b] = np.asarray(rhs.h, dtype=float)
        return np.concatenate([mom[:, 0], mom[:, 1], np.asarray(rhs.g, dtype=float)])

    def _split(self, U):
        N = self.grid.N
        return np.stack([U[:N], U[N:2 * N]], axis=1), U[2 * N:]

    # -- public -------------------------------------------------------------
    def condition_estimate(self):
        try:
            lu = spla.splu(self.K.tocsc())
            n = self.K.shape[0]
            inv = spla.LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="T"))
            return float(spla.onenormest(self.K) * spla.onenormest(inv))
        except RuntimeError:
            return np.inf

    def solve(self, rhs, v_prev=None):
        bvec = self._rhs_vector(rhs, v_prev)
        U = self._lu.solve(bvec)
        for _ in range(self.refine_steps):
            U = U + self._lu.solve(bvec - self.K @ U)
        if not np.all(np.isfinite(U)):
            raise SolverError("solution is not finite", condition=self.condition_estimate())
        r = np.abs(self.K @ U - bvec)
        scale = 1.0 + np.abs(bvec).max()
        if r.max() > self.p.tol_solver * scale:
            raise SolverError(f"residual {r.max():.3e} exceeds tolerance", condition=self.condition_estimate())
        return self._split(U)

    def apply(self, v, q, v_prev=None):
        """Discrete operator applied to ``(v, q)``: returns the matching LinearRHS."""
        g, p = self.grid, self.p
        N, b = g.N, g.boundary
        out = self.K @ np.concatenate([np.asarray(v)[:, 0], np.asarray(v)[:, 1], np.asarray(q)])
        mom = np.stack([out[:N], out[N:2 * N]], axis=1)
        vp = np.zeros((N, 2)) if v_prev is None else np.asarray(v_prev, dtype=float)
        f = mom - p.reynolds / self.dt * vp
        f[b] = 0.0
        return LinearRHS(f=f, g=out[2 * N:], h=mom[b].copy())

    def residuals(self, v, q, rhs, v_prev=None):
        """Max-norm residuals of the momentum, trace and traction rows."""
        got = self.apply(v, q, v_prev)
        inner = np.setdiff1d(np.arange(self.grid.N), self.grid.boundary)
        return {
            "momentum": float(np.abs(got.f[inner] - np.asarray(rhs.f)[inner]).max()),
            "trace": float(np.abs(got.g - np.asarray(rhs.g)).max()),
            "traction": float(np.abs(got.h - np.asarray(rhs.h)).max()),
        }


def solve_linear(system, rhs, v_prev=None):
    return system.solve(rhs, v_prev)


# -- initial lift -------------------------------------------------------------
def lift_weight(t):
    return t * np.exp(-t * t)


def lift_weight_rate(t):
    return (1.0 - 2.0 * t * t) * np.exp(-t * t)


class PhiLift:
    """Time-dependent lift matching the initial velocity and its initial rate.

    ``phi(t) = v0 + t exp(-t^2) c`` with
    ``c = (nu Q^2 Lap v0 - J^T grad q_phi + div T0) / Re``.
    """

    def __init__(self, v0, T0, q_phi, correction, grad_jv0, J0, jv0_dJ):
        self.v0 = np.asarray(v0, dtype=float)
        self.T0 = np.asarray(T0, dtype=float)
        self.q_phi = np.asarray(q_phi, dtype=float)
        self.correction = np.asarray(correction, dtype=float)
        self._grad_jv0 = grad_jv0
        self._J0 = J0
        self._jv0_dJ = jv0_dJ

    def phi(self, t):
        return self.v0 + lift_weight(t) * self.correction

    def phi_rate(self, t):
        return lift_weight_rate(t) * self.correction

    def zeta_phi(self, t):
        return np.eye(2) - lift_weight(t) * self._grad_jv0

    def jp_phi(self, t):
        return self._J0 + lift_weight(t) * self._jv0_dJ


def build_phi(system, v0, T0):
    """Lift for initial data ``(v0, T0)`` on the system's grid.

    ``q_phi`` solves Tr(grad(J^T grad q) J) = Tr(grad(nu Q^2 Lap v0 + div T0) J)
    + Re * (initial rate of the flux-dependent trace terms) in the interior,
    with the normal traction balance on the boundary.
    """
    g, p = system.grid, system.p
    N, b = g.N, g.boundary
    nu, re = p.nu, p.reynolds
    J0, Q20, dJ = system.J0, system.Q20, system.dJ0
    v0 = np.asarray(v0, dtype=float)
    T0 = np.asarray(T0, dtype=float)
    eye = np.broadcast_to(np.eye(2), (N, 2, 2))
    jv0 = np.einsum("nij,nj->ni", J0, v0)
    grad_jv0 = g.grad(jv0)
    jv0_dJ = np.einsum("nkij,nk->nij", dJ, jv0)
    gv0 = g.grad(v0)
    B = nu * Q20[:, None] * g.laplacian(v0) + divergence_tensor(g, T0, eye, J0)
    src = trace_constraint(g.grad(B), eye, J0)
    src = src + re * (trace_constraint(gv0, -grad_jv0, J0) + trace_constraint(gv0, eye, jv0_dJ))
    # operator q -> Tr(grad(J^T grad q) J)
    diag = sp.diags
    dJ_phys = g.grad(J0)  # [n, j, i, k] = d_k J_ji
    op = sp.csr_matrix((N, N))
    for j in range(2):
        for k in range(2):
            op = op + diag(np.einsum("ni,ni->n", J0[:, j, :], J0[:, k, :])) @ g.H[k][j]
        op = op + diag(np.einsum("nik,nki->n", dJ_phys[:, j], J0)) @ g.D[j]
    sel = np.ones(N)
    sel[b] = 0.0
    Sb = sp.csr_matrix((np.ones(len(b)), (b, b)), shape=(N, N))
    A = diag(sel) @ op + Sb
    S = nu * (np.einsum("nik,nkj->nij", gv0, J0))
    S = S + np.swapaxes(S, -1, -2) + sym_to_mat(T0)
    nh = np.einsum("nji,nj->ni", J0[b], system.n0)
    nh /= np.linalg.norm(nh, axis=1)[:, None]
    rhs = src * sel
    rhs[b] = np.einsum("ni,nij,nj->n", nh, S[b], nh)
    try:
        q_phi = spla.spsolve(A.tocsc(), rhs)
    except RuntimeError as exc:
        raise SolverError(f"lift pressure solve failed: {exc}") from exc
    if not np.all(np.isfinite(q_phi)):
        raise SolverError("lift pressure solve produced non-finite values")
    corr = (B - np.einsum("nki,nk->ni", J0, g.grad(q_phi))) / re
    return PhiLift(v0, T0, q_phi, corr, grad_jv0, J0, jv0_dJ)


def check_lift_compatibility(system, rhs, tol=None):
    """Residuals of the two initial compatibility conditions for ``rhs``."""
    g, p = system.grid, system.p
    tol = p.tol_div if tol is None else tol
    v0 = np.zeros((g.N, 2)) if rhs.v0 is None else np.asarray(rhs.v0, dtype=float)
    eye = np.broadcast_to(np.eye(2), (g.N, 2, 2))
    gv0 = g.grad(v0)
    div_res = float(np.abs(trace_constraint(gv0, eye, system.J0) - np.asarray(rhs.g)).max())
    b = g.boundary
    S = p.nu * np.einsum("nik,nkj->nij", gv0[b], system.J0[b])
    S = S + np.swapaxes(S, -1, -2)
    lhs = np.einsum("nij,nj->ni", S, system.c)
    h = np.asarray(rhs.h, dtype=float)
    # the traction row reads S J^-1 n0 = h, so compare along the tangent of J^-1 n0
    that = np.stack([-system.c[:, 1], system.c[:, 0]], axis=1)
    that /= np.linalg.norm(that, axis=1)[:, None]
    trac_res = float(np.abs(np.einsum("ni,ni->n", lhs - h, that)).max())
    return {"trace": div_res, "traction_tangential": trac_res,
            "pass": bool(div_res < tol and trac_res < tol)}


def require_compatible(system, rhs, tol=None):
    report = check_lift_compatibility(system, rhs, tol)
    if not report["pass"]:
        raise CompatibilityError(f"initial data incompatible: {report}")
    return report
