import numpy as np
import pytest

from oldroyd_splash.conformal import BranchMap, IdentityMap
from oldroyd_splash.errors import ParamError
from oldroyd_splash.params import Params, sym_to_mat
from oldroyd_splash.picard import (WINDOW_FAILURES, Level, Problem, assemble_f, assemble_g, assemble_h, equation_residuals,
                                   f_pieces, g_pieces, h_pieces, initial_state, iterate, max_horizon,
                                   picard_sweep, probe_ratio, run_to_convergence, run_window,
                                   trace_residual_series, window_times)
from oldroyd_splash.scenario import reference_scenario

P = Params(dt=0.05)


def test_max_horizon_examples():
    assert max_horizon(Params(weissenberg=1.0)) == pytest.approx(0.25)
    assert max_horizon(Params(weissenberg=1e12)) == pytest.approx(0.5)
    assert max_horizon(Params(weissenberg=1e12, c_cal=0.25, mu_cal=2.0)) == pytest.approx(0.5)
    hs = [max_horizon(Params(weissenberg=w)) for w in (0.1, 1, 10, 100)]
    assert all(a < b for a, b in zip(hs, hs[1:]))


def test_window_times():
    t = window_times(0.5, 0.1, 0.03)
    assert len(t) == 5 and t[0] == 0.5 and t[-1] == pytest.approx(0.6)
    assert len(window_times(0.0, 0.01, 0.03)) == 5


@pytest.fixture(scope="module")
def rest_problem(offset_grid):
    return Problem(offset_grid, BranchMap(), P)


@pytest.fixture(scope="module")
def smooth_state(offset_grid):
    """A randomized smooth, non-folded iterate on three levels."""
    g = offset_grid
    x, y = g.nodes.T
    rng = np.random.default_rng(11)
    c = rng.normal(size=8) * 0.05
    v0 = np.column_stack([c[0] * np.sin(x + y), c[1] * x * y])
    T0 = np.column_stack([c[2] * x, c[3] * y, c[4] * x * y])
    pr = Problem(g, BranchMap(), P, v0, T0)
    st = initial_state(pr, window_times(0.0, 0.1, 0.05))
    for k in (1, 2):
        st.w[k] = k * np.column_stack([c[5] * np.cos(y), c[6] * x])
        st.q[k] = k * c[7] * np.sin(x)
        st.X[k] = g.nodes + k * 0.01 * np.column_stack([np.sin(y), x * x])
        st.T[k] = T0 * (1 + 0.1 * k)
    return pr, st


def test_rest_state_pieces_vanish(rest_problem):
    st = initial_state(rest_problem, window_times(0.0, 0.2, 0.05))
    lvl = Level(rest_problem, st, 2)
    f = f_pieces(rest_problem, lvl, rest_problem.lift.phi(0.0), 0.05)
    h = h_pieces(rest_problem, lvl, 0.05)
    assert all(np.abs(a).max() < 1e-12 for a in f.values())
    assert all(np.abs(a).max() < 1e-12 for a in h.values())
    assert np.abs(assemble_g(rest_problem, lvl, 0.05)).max() < 1e-12


def test_first_sweep_only_lift_forcing(offset_grid):
    g = offset_grid
    x, y = g.nodes.T
    v0 = 0.1 * np.column_stack([np.sin(y), np.cos(x)])
    T0 = np.tile([0.3, 0.1, 0.2], (g.N, 1))
    pr = Problem(g, BranchMap(), P, v0, T0)
    st = initial_state(pr, window_times(0.0, 0.2, 0.05))
    f = f_pieces(pr, Level(pr, st, 1), pr.lift.phi(0.0), 0.05)
    for key in ("w", "q", "T"):
        assert np.abs(f[key]).max() < 1e-9, key
    # identity flux makes the Lagrangian Laplacian the plain one
    assert np.abs(f["phi"]).max() < 1e-9


def test_identity_mode_f_w_vanishes(unit_grid):
    pr = Problem(unit_grid, IdentityMap(), P)
    st = initial_state(pr, window_times(0.0, 0.2, 0.05))
    x, y = unit_grid.nodes.T
    st.w[1] = np.column_stack([np.sin(3 * x) * y, np.exp(x)])
    assert np.abs(f_pieces(pr, Level(pr, st, 1), np.zeros((unit_grid.N, 2)), 0.05)["w"]).max() < 1e-9


def test_constant_stress_traction(offset_grid):
    T0 = np.tile([0.7, 0.0, 0.7], (offset_grid.N, 1))
    pr = Problem(offset_grid, BranchMap(), P, None, T0)
    st = initial_state(pr, window_times(0.0, 0.2, 0.05))
    h = h_pieces(pr, Level(pr, st, 1), 0.05)["T"]
    assert np.allclose(h, -0.7 * pr.system(0.05).c, atol=1e-10)


def test_g_bar_vanishes_at_start(smooth_state):
    pr, st = smooth_state
    assert np.abs(g_pieces(pr, Level(pr, st, 0), st.dt)["bar"]).max() < 1e-14


def slow_pieces(pr, st, k):
    """Term-by-term, node-by-node evaluation of the lagged forcing."""
    g, cm, p = pr.grid, pr.cmap, pr.p
    dt = st.dt
    nu = p.nu
    t = st.times[k]
    lift = pr.lift
    X = st.X[k]
    G = g.grad(X)
    phi = lift.phi(t)
    v = st.w[k] + phi
    q = st.q[k] + lift.q_phi
    gw, gphi, gq = g.grad(st.w[k]), g.grad(phi), g.grad(q)
    gqphi = g.grad(lift.q_phi)
    Tm = sym_to_mat(st.T[k])
    gT = g.grad(Tm)
    lap_w, lap_phi = g.laplacian(st.w[k]), g.laplacian(phi)
    Hw = [[g.H[a][b] @ st.w[k] for b in range(2)] for a in range(2)]
    Hp = [[g.H[a][b] @ phi for b in range(2)] for a in range(2)]
    zeta_all = np.linalg.inv(G)
    gz = g.grad(zeta_all)
    f = np.zeros((g.N, 2))
    gg = np.zeros(g.N)
    phi_prev = lift.phi(st.times[k - 1])
    for n in range(g.N):
        z = zeta_all[n]
        J0, JX = cm.jacobian(g.nodes[n]), cm.jacobian(X[n])
        Q0, QX = cm.q_squared(g.nodes[n]), cm.q_squared(X[n])
        for i in range(2):
            lw = lp = 0.0
            for kk in range(2):
                for a in range(2):
                    for b in range(2):
                        lw += z[a, kk] * z[b, kk] * Hw[a][b][n, i]
                        lp += z[a, kk] * z[b, kk] * Hp[a][b][n, i]
                        lw += z[a, kk] * gz[n, b, kk, a] * gw[n, i, b]
                        lp += z[a, kk] * gz[n, b, kk, a] * gphi[n, i, b]
            fw = nu * QX * lw - nu * Q0 * lap_w[n, i]
            fphi = nu * QX * lp - nu * Q0 * lap_phi[n, i]
            fq = sum(J0[kk, i] * gq[n, kk] for kk in range(2)) - sum(
                JX[kk, i] * z[a, kk] * gq[n, a] for kk in range(2) for a in range(2))
            fT = sum(gT[n, i, m, a] * z[a, c] * JX[c, m] for m in range(2) for a in range(2) for c in range(2))
            fL = (-p.reynolds * (phi[n, i] - phi_prev[n, i]) / dt + nu * Q0 * lap_phi[n, i]
                  - sum(J0[kk, i] * gqphi[n, kk] for kk in range(2)))
            f[n, i] = fw + fphi + fq + fT + fL
        gv = gw[n] + gphi[n]
        gg[n] = (np.trace(gv @ J0) - np.trace(gv @ z @ JX) + np.trace(gphi[n] @ lift.zeta_phi(t)[n] @ lift.jp_phi(t)[n])
                 - np.trace(gphi[n] @ J0))
    return f, gg


def test_dual_path_assembly(smooth_state):
    pr, st = smooth_state
    lvl = Level(pr, st, 2)
    f_slow, g_slow = slow_pieces(pr, st, 2)
    f = assemble_f(pr, lvl, pr.lift.phi(st.times[1]), st.dt)
    scale = max(1.0, np.abs(f).max())
    assert np.abs(f - f_slow).max() < 1e-12 * scale
    assert np.abs(g_pieces(pr, lvl, st.dt)["bar"] - g_slow).max() < 1e-12


def test_dual_path_traction(smooth_state):
    pr, st = smooth_state
    g, cm, nu = pr.grid, pr.cmap, pr.p.nu
    lvl = Level(pr, st, 1)
    h = assemble_h(pr, lvl, st.dt)
    gw, gphi = g.grad(st.w[1]), g.grad(lvl.phi)
    Gx = g.grad(st.X[1])
    for r, n in enumerate(g.boundary):
        J0, JX = cm.jacobian(g.nodes[n]), cm.jacobian(st.X[1][n])
        z = np.linalg.inv(Gx[n])
        lam = np.array([[Gx[n, 1, 1], -Gx[n, 1, 0]], [-Gx[n, 0, 1], Gx[n, 0, 0]]])
        n0 = g.normals[r]
        c = np.linalg.solve(J0, n0)
        m = np.linalg.solve(JX, lam @ n0)
        T = sym_to_mat(st.T[1][n])
        gv = gw[n] + gphi[n]
        expect = (nu * gv @ n0 - nu * gv @ z @ lam @ n0
                  + nu * (gv @ J0).T @ c - nu * (gv @ z @ JX).T @ m
                  + lvl.q[n] * (m - c) - T @ m
                  + pr.lift.q_phi[n] * c - nu * ((gphi[n] @ J0) + (gphi[n] @ J0).T) @ c)
        assert np.allclose(h[r], expect, rtol=0, atol=1e-12)


def test_zero_data_fixed_point(rest_problem):
    st = initial_state(rest_problem, window_times(0.0, 0.1, 0.05))
    new = picard_sweep(rest_problem, st)
    for a, b in ((new.w, st.w), (new.q, st.q), (new.T, st.T), (new.X, st.X)):
        assert np.abs(a - b).max() < P.tol_solver
    state, report = iterate(rest_problem, st)
    assert report.converged and report.sweeps == 1


def test_newtonian_problem(offset_grid):
    with pytest.raises(ParamError):
        Problem(offset_grid, BranchMap(), P, None, np.ones((offset_grid.N, 3)), newtonian=True)
    pr = Problem(offset_grid, BranchMap(), P, newtonian=True)
    st = initial_state(pr, window_times(0.0, 0.1, 0.05))
    lvl = Level(pr, st, 1)
    assert "T" not in f_pieces(pr, lvl, pr.lift.phi(0.0), 0.05)
    assert "T" not in h_pieces(pr, lvl, 0.05)


@pytest.fixture(scope="module")
def reference():
    return reference_scenario().problem()


def test_two_sweeps_contract(reference):
    T = 0.5 * max_horizon(reference.p)
    st = initial_state(reference, window_times(0.0, T, reference.p.dt))
    _, report = iterate(reference, st, tol=0.0, max_sweeps=3)
    d = report.differences
    assert d[2] < d[1] < d[0]


def test_ratio_grows_with_horizon(reference):
    T = max_horizon(reference.p)
    r = [probe_ratio(reference, f * T) for f in (0.25, 0.5, 1.0)]
    assert r[0] <= r[1] <= r[2] < 1


def test_short_window_converges_with_small_residuals(reference):
    state, report = run_window(reference, 0.0, 0.5 * max_horizon(reference.p))
    assert report.converged and report.contracting
    res = equation_residuals(reference, state)
    assert res["momentum"] < 1e-6 and res["traction"] < 1e-6
    assert res["trace"] < 10 * reference.p.tol_picard
    assert res["stress_ode"] < 1e-8 and res["flux_ode"] < 1e-8
    assert trace_residual_series(reference, state).max() < 10 * reference.p.tol_picard
    assert np.abs(state.w[0]).max() == 0.0


def test_far_past_horizon_fails_at_low_we():
    pr = reference_scenario(weissenberg=0.1).problem()
    T = 4 * max_horizon(pr.p)
    assert probe_ratio(pr, T) >= 1.0
    # past the horizon the iteration either stalls or folds the mesh first
    with pytest.raises(WINDOW_FAILURES):
        run_window(pr, 0.0, 2.0, max_sweeps=8)


def test_adaptive_windows_share_the_time_grid():
    pr = reference_scenario(weissenberg=0.1, dt=0.025).problem()
    record, reports = run_to_convergence(pr, horizon=2.0, t_final=0.2)
    assert np.allclose(record.times, np.linspace(0, 0.2, 9))
    assert all(r.converged for r in reports)
    with pytest.raises(WINDOW_FAILURES):
        run_to_convergence(pr, horizon=2.0, t_final=2.0, max_sweeps=8, adaptive=False)
