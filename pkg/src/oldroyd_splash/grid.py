"""Body-fitted polar-type grid over a star-shaped reference domain.

Nodes are indexed ``(j, i)`` with ``i`` running periodically along the
boundary parameterization and ``j`` running outward from the centre:
``eta_j = (j + 1/2) * d_eta`` so the last ring ``eta = 1`` is the boundary
and no node sits on the centre. Centred differences across the centre use
the antipodal node ``(0, i + n/2)`` as the ghost value, which needs an even
``n``. Flat node index is ``j * n + i``.

Interior rays blend from uniform angles and a circle of radius ``min rho``
near the centre to the marker angles and radii at the boundary, so the grid
is a smooth polar grid where the ghost rule is used.
"""

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError, OutOfDomain
from .params import InterfaceCurve
from . import geometry


class Grid:
    def __init__(self, nodes, n, m):
        self.n, self.m = n, m
        self.N = n * m
        self.nodes = np.asarray(nodes, dtype=float).reshape(self.N, 2)
        self.nodes.setflags(write=False)
        self.d_xi = 2.0 * np.pi / n
        self.d_eta = 1.0 / (m - 0.5)
        self.eta = (np.arange(m) + 0.5) * self.d_eta
        self.boundary = np.arange((m - 1) * n, m * n)
        self.interior = np.arange(0, (m - 1) * n)
        self._build_logical()
        self._build_metric()

    # -- logical operators ------------------------------------------------
    def idx(self, j, i):
        return j * self.n + np.mod(i, self.n)

    def _build_logical(self):
        n, m = self.n, self.m
        J, I = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
        J, I = J.ravel(), I.ravel()
        row = self.idx(J, I)

        def mat(entries):
            rows, cols, vals = [], [], []
            for mask, cj, ci, w in entries:
                rows.append(row[mask])
                cols.append(self._col(J[mask] + cj, I[mask] + ci))
                vals.append(np.broadcast_to(w, rows[-1].shape))
            return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(self.N, self.N))

        allm = np.ones(self.N, bool)
        hx, he = self.d_xi, self.d_eta
        self.D_xi = mat([(allm, 0, 1, 0.5 / hx), (allm, 0, -1, -0.5 / hx)])
        self.D_xixi = mat([(allm, 0, 1, 1 / hx**2), (allm, 0, 0, -2 / hx**2), (allm, 0, -1, 1 / hx**2)])
        inner = J < m - 1
        last = J == m - 1
        self.D_eta = mat([
            (inner, 1, 0, 0.5 / he), (inner, -1, 0, -0.5 / he),
            (last, 0, 0, 1.5 / he), (last, -1, 0, -2.0 / he), (last, -2, 0, 0.5 / he),
        ])
        self.D_etaeta = mat([
            (inner, 1, 0, 1 / he**2), (inner, 0, 0, -2 / he**2), (inner, -1, 0, 1 / he**2),
            (last, 0, 0, 2 / he**2), (last, -1, 0, -5 / he**2), (last, -2, 0, 4 / he**2),
            (last, -3, 0, -1 / he**2),
        ])
        self.D_xieta = (self.D_xi @ self.D_eta).tocsr()

    def _col(self, j, i):
        # ring -1 is the antipodal point of ring 0
        ghost = j < 0
        i = np.where(ghost, i + self.n // 2, i)
        j = np.where(ghost, 0, j)
        return self.idx(j, i)

    # -- metric and physical operators -----------------------------------
    def _build_metric(self):
        x = self.nodes
        D = [self.D_eta, self.D_xi]
        D2 = [[self.D_etaeta, self.D_xieta], [self.D_xieta, self.D_xixi]]
        M = np.empty((self.N, 2, 2))
        for a in range(2):
            M[:, :, a] = D[a] @ x
        self.jac_det = np.linalg.det(M)
        if np.any(self.jac_det <= 0):
            raise GeometryError("grid Jacobian is not positive at every node")
        Minv = np.linalg.inv(M)  # Minv[:, a, k] = d(logical a)/d(x_k)
        X2 = np.empty((self.N, 2, 2, 2))  # X2[:, mm, a, b] = d2 x_mm / da db
        for a in range(2):
            for b in range(2):
                X2[:, :, a, b] = D2[a][b] @ x
        self.D = [sum(sp.diags(Minv[:, a, k]) @ D[a] for a in range(2)).tocsr() for k in range(2)]
        H = [[None, None], [None, None]]
        for i in range(2):
            for j in range(2):
                op = sum(sp.diags(Minv[:, a, i] * Minv[:, b, j]) @ D2[a][b]
                         for a in range(2) for b in range(2))
                s = np.einsum("nmab,na,nb->nm", X2, Minv[:, :, i], Minv[:, :, j])
                gamma = -np.einsum("ncm,nm->nc", Minv, s)
                op = op + sum(sp.diags(gamma[:, c]) @ D[c] for c in range(2))
                H[i][j] = op.tocsr()
        self.H = H
        self.lap = (H[0][0] + H[1][1]).tocsr()
        w_eta = np.full(self.m, self.d_eta)
        w_eta[-1] *= 0.5
        self.weights = self.jac_det * self.d_xi * np.repeat(w_eta, self.n)
        self.h = np.sqrt(self.jac_det * self.d_xi * self.d_eta)
        tang = (self.D_xi @ x)[self.boundary]
        nrm = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
        self.normals = nrm / np.linalg.norm(nrm, axis=1)[:, None]

    # -- helpers ------------------------------------------------------------
    def grad(self, f):
        """Gradient of nodal values: ``(N, ...)`` -> ``(N, ..., 2)``."""
        f = np.asarray(f, dtype=float)
        flat = f.reshape(self.N, -1)
        g = np.stack([self.D[0] @ flat, self.D[1] @ flat], axis=-1)
        return g.reshape(f.shape + (2,))

    def hessian(self, f):
        f = np.asarray(f, dtype=float)
        flat = f.reshape(self.N, -1)
        h = np.stack([np.stack([self.H[i][j] @ flat for j in range(2)], -1) for i in range(2)], -2)
        return h.reshape(f.shape + (2, 2))

    def laplacian(self, f):
        f = np.asarray(f, dtype=float)
        return (self.lap @ f.reshape(self.N, -1)).reshape(f.shape)

    def integrate(self, f):
        return np.tensordot(self.weights, np.asarray(f, dtype=float), axes=(0, 0))

    def l2(self, f):
        f = np.asarray(f, dtype=float).reshape(self.N, -1)
        return float(np.sqrt(np.sum(self.weights[:, None] * f * f)))

    def h1(self, f):
        f = np.asarray(f, dtype=float)
        return float(np.sqrt(self.l2(f) ** 2 + self.l2(self.grad(f)) ** 2))

    def boundary_markers(self):
        return self.nodes[self.boundary]

    def cell_jacobians(self):
        """Corner Jacobians of every quadrilateral cell, shape ``(cells, 4)``."""
        P = self.nodes.reshape(self.m, self.n, 2)
        # (j,i) -> (j+1,i) -> (j+1,i+1) -> (j,i+1) runs counterclockwise
        ring = [P[:-1], P[1:], np.roll(P[1:], -1, axis=1), np.roll(P[:-1], -1, axis=1)]
        dets = []
        for k in range(4):
            c, nxt, prv = ring[k], ring[(k + 1) % 4], ring[k - 1]
            u, v = nxt - c, prv - c
            dets.append(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
        return np.stack(dets, axis=-1).reshape(-1, 4)

    # -- interpolation ------------------------------------------------------
    def _cells(self):
        P = self.nodes.reshape(self.m, self.n, 2)
        jj, ii = np.meshgrid(np.arange(self.m - 1), np.arange(self.n), indexing="ij")
        c = np.stack([self.idx(jj, ii), self.idx(jj, ii + 1), self.idx(jj + 1, ii + 1),
                      self.idx(jj + 1, ii)], -1).reshape(-1, 4)
        return c

    def locate(self, point, tol=1e-10):
        """Return ``(node_indices, weights)`` for bilinear interpolation."""
        p = np.asarray(point, dtype=float)
        cells = self._cells()
        C = self.nodes[cells]  # (cells, 4, 2)
        u = np.full(len(C), 0.5)
        v = np.full(len(C), 0.5)
        for _ in range(30):
            w = np.stack([(1 - u) * (1 - v), u * (1 - v), u * v, (1 - u) * v], -1)
            r = np.einsum("ck,ckd->cd", w, C) - p
            du = np.stack([-(1 - v), 1 - v, v, -v], -1)
            dv = np.stack([-(1 - u), -u, u, 1 - u], -1)
            Ju = np.einsum("ck,ckd->cd", du, C)
            Jv = np.einsum("ck,ckd->cd", dv, C)
            det = Ju[:, 0] * Jv[:, 1] - Ju[:, 1] * Jv[:, 0]
            det = np.where(np.abs(det) < 1e-300, 1e-300, det)
            su = (r[:, 0] * Jv[:, 1] - r[:, 1] * Jv[:, 0]) / det
            sv = (Ju[:, 0] * r[:, 1] - Ju[:, 1] * r[:, 0]) / det
            u = np.clip(u - su, -2, 3)
            v = np.clip(v - sv, -2, 3)
        w = np.stack([(1 - u) * (1 - v), u * (1 - v), u * v, (1 - u) * v], -1)
        resid = np.linalg.norm(np.einsum("ck,ckd->cd", w, C) - p, axis=1)
        scale = max(1.0, float(np.abs(p).max()))
        ok = (u >= -tol) & (u <= 1 + tol) & (v >= -tol) & (v <= 1 + tol) & (resid < 1e-9 * scale)
        if np.any(ok):
            k = int(np.flatnonzero(ok)[0])
            return cells[k], w[k]
        # central polygon: fan of triangles around the mean of ring 0
        ring = self.idx(0, np.arange(self.n))
        centre = self.nodes[ring].mean(axis=0)
        a = self.nodes[ring]
        b = self.nodes[np.roll(ring, -1)]
        T = np.stack([a - centre, b - centre], -1)  # (n, 2, 2)
        lam = np.linalg.solve(T, np.broadcast_to(p - centre, (self.n, 2))[..., None])[..., 0]
        inside = (lam[:, 0] >= -tol) & (lam[:, 1] >= -tol) & (lam.sum(1) <= 1 + tol)
        if np.any(inside):
            k = int(np.flatnonzero(inside)[0])
            l0 = 1.0 - lam[k].sum()
            idx = np.concatenate([ring, [ring[k], ring[(k + 1) % self.n]]])
            wts = np.concatenate([np.full(self.n, l0 / self.n), lam[k]])
            return idx, wts
        raise OutOfDomain(f"point {tuple(p)} lies outside the grid")

    def interpolate(self, values, point):
        idx, w = self.locate(point)
        values = np.asarray(values, dtype=float)
        return np.tensordot(w, values[idx], axes=(0, 0))


def build_reference_grid(curve, n=None, m=None):
    """Body-fitted grid whose boundary ring coincides with the curve markers.

    ``n`` boundary nodes (the curve is resampled if it has a different
    marker count) and ``m`` rings, defaulting to ``n // 2``.
    """
    if not isinstance(curve, InterfaceCurve):
        curve = InterfaceCurve(curve)
    if not curve.is_simple():
        raise GeometryError("interface curve is self-intersecting")
    n = len(curve) if n is None else int(n)
    if n % 2:
        raise GeometryError("boundary node count must be even")
    m = max(4, n // 2) if m is None else int(m)
    if m < 4:
        raise GeometryError("at least 4 rings are needed")
    pts = curve.resampled(n).markers
    if not geometry.is_simple(pts):
        raise GeometryError("resampled curve is self-intersecting")
    x, y = pts[:, 0], pts[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    area = 0.5 * cross.sum()
    centre = np.array([np.sum((x + np.roll(x, -1)) * cross), np.sum((y + np.roll(y, -1)) * cross)]) / (6 * area)
    d = pts - centre
    theta = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    if np.any(np.diff(theta) <= 0) or theta[-1] - theta[0] >= 2 * np.pi:
        raise GeometryError("curve is not star-shaped about its centroid")
    rho = np.linalg.norm(d, axis=1)
    r0 = rho.min()
    base = 2 * np.pi * np.arange(n) / n
    psi_u = base + np.mean(theta - base)
    eta = (np.arange(m) + 0.5) / (m - 0.5)
    s = (eta**2)[:, None]
    ang = (1 - s) * psi_u[None, :] + s * theta[None, :]
    rad = eta[:, None] * ((1 - s) * r0 + s * rho[None, :])
    nodes = centre + np.stack([rad * np.cos(ang), rad * np.sin(ang)], -1)
    nodes[-1] = pts
    grid = Grid(nodes.reshape(-1, 2), n, m)
    if np.any(grid.cell_jacobians() <= 0):
        raise GeometryError("grid folds: a cell Jacobian is not positive")
    grid.curve = curve if len(curve) == n else InterfaceCurve(pts)
    return grid
