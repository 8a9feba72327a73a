"""Picard iteration for the coupled velocity / pressure / stress / flux system.

An iterate lives on time levels ``t_0 < ... < t_K`` of one window. Level 0
holds fixed data (the initial state, or the end of the previous window).
A sweep freezes every nonlinear coefficient at the previous iterate,
solves the linear system level by level for the lifted velocity ``w`` and
pressure ``q_w``, and integrates the stress and flux ODEs by the trapezoid
rule with lagged right-hand sides. Total fields are ``v = w + phi`` and
``q = q_w + q_phi``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import MeshFoldError, NoContraction, ParamError, SingularJacobian
from .flux import invert_gradient, cofactor
from .linear_solver import LinearSystem, LinearRHS, build_phi
from .operators import trace_constraint, divergence_tensor, lagrangian_laplacian, pressure_gradient
from .params import FieldSet, Snapshot, RunRecord, sym_to_mat, mat_to_sym
from .stress import grad_v_to_physical, stress_rate


def max_horizon(p):
    we = p.weissenberg
    if not we > 0:
        raise ParamError("must be > 0", pointer="/params/weissenberg")
    return (p.c_cal * we / (1.0 + we)) ** (1.0 / p.mu_cal)


class Problem:
    """Grid, map, parameters and initial data, plus the lift built from them.

    ``newtonian=True`` drops the polymer stress from every equation: the
    plain Navier-Stokes configuration of the same solver.
    """

    def __init__(self, grid, cmap, p, v0=None, T0=None, name="scenario", newtonian=False):
        self.grid, self.cmap, self.p, self.name = grid, cmap, p, name
        self.newtonian = newtonian
        N = grid.N
        if newtonian and T0 is not None and np.any(T0):
            raise ParamError("a Newtonian problem carries no polymer stress", pointer="/initial_stress")
        self.v0 = np.zeros((N, 2)) if v0 is None else np.asarray(v0, dtype=float)
        self.T0 = np.zeros((N, 3)) if T0 is None else np.asarray(T0, dtype=float)
        self.alpha = grid.nodes.copy()
        self._systems = {}
        self.lift = build_phi(self.system(p.dt), self.v0, self.T0)

    def system(self, dt):
        key = round(float(dt), 15)
        if key not in self._systems:
            self._systems[key] = LinearSystem(self.grid, self.cmap, self.p, dt)
        return self._systems[key]

    @property
    def J0(self):
        return self.system(self.p.dt).J0

    def with_params(self, p):
        return Problem(self.grid, self.cmap, p, self.v0, self.T0, self.name, self.newtonian)


@dataclass
class IterationState:
    times: np.ndarray  # (K+1,)
    w: np.ndarray  # (K+1, N, 2)
    q: np.ndarray  # (K+1, N), the lifted pressure q_w
    T: np.ndarray  # (K+1, N, 3)
    X: np.ndarray  # (K+1, N, 2)
    norm_ledger: dict = field(default_factory=dict)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def levels(self):
        return len(self.times)


def window_times(t0, horizon, dt):
    steps = max(4, int(math.ceil(horizon / dt - 1e-9)))
    return t0 + horizon * np.arange(steps + 1) / steps


def initial_state(problem, times, start=None):
    """Zeroth iterate: every level repeats the window's starting data."""
    K1 = len(times)
    N = problem.grid.N
    if start is None:
        w0, q0, T0, X0 = np.zeros((N, 2)), np.zeros(N), problem.T0, problem.alpha
    else:
        w0, q0, T0, X0 = start
    rep = lambda a: np.repeat(np.asarray(a, dtype=float)[None], K1, axis=0)
    return IterationState(np.asarray(times, dtype=float), rep(w0), rep(q0), rep(T0), rep(X0))


class Level:
    """Coefficients of one time level of an iterate, computed once per sweep."""

    def __init__(self, problem, state, k):
        g, cm = problem.grid, problem.cmap
        self.t = state.times[k]
        self.w, self.q_w, self.T, self.X = state.w[k], state.q[k], state.T[k], state.X[k]
        G = g.grad(self.X)
        self.zeta = invert_gradient(G)
        self.lam = cofactor(G)
        self.JX = cm.jacobian(self.X)
        self.Q2X = cm.q_squared(self.X)
        self._gzeta = None
        lift = problem.lift
        self.phi = lift.phi(self.t)
        self.v = self.w + self.phi
        self.q = self.q_w + lift.q_phi
        self.gw = g.grad(self.w)
        self.gphi = g.grad(self.phi)
        self.gv = self.gw + self.gphi
        b = g.boundary
        self.m = np.einsum("nij,njk,nk->ni", np.linalg.inv(self.JX[b]), self.lam[b], g.normals)

    def gzeta(self, grid):
        if self._gzeta is None:
            self._gzeta = grid.grad(self.zeta)
        return self._gzeta

    def velocity_gradient(self):
        return grad_v_to_physical(self.gv, self.zeta, self.JX)


# -- right-hand sides ---------------------------------------------------------
def f_pieces(problem, lvl, phi_prev, dt):
    g, p = problem.grid, problem.p
    nu, re = p.nu, p.reynolds
    sysm = problem.system(dt)
    J0, Q20 = sysm.J0, sysm.Q20
    gz = lvl.gzeta(g)

    def visc(u):
        return nu * lvl.Q2X[:, None] * lagrangian_laplacian(g, u, lvl.zeta, gz) - nu * Q20[:, None] * g.laplacian(u)

    eye = np.broadcast_to(np.eye(2), (g.N, 2, 2))
    gq = g.grad(lvl.q)
    out = {
        "w": visc(lvl.w),
        "phi": visc(lvl.phi),
        "q": pressure_gradient(gq, eye, J0) - pressure_gradient(gq, lvl.zeta, lvl.JX),
        "T": divergence_tensor(g, lvl.T, lvl.zeta, lvl.JX),
        "phi_L": (-re * (lvl.phi - phi_prev) / dt + nu * Q20[:, None] * g.laplacian(lvl.phi)
                  - pressure_gradient(g.grad(problem.lift.q_phi), eye, J0)),
    }
    if problem.newtonian:
        del out["T"]
    return out


def g_pieces(problem, lvl, dt):
    sysm = problem.system(dt)
    J0 = sysm.J0
    N = problem.grid.N
    eye = np.broadcast_to(np.eye(2), (N, 2, 2))
    lift = problem.lift
    g_tilde = trace_constraint(lvl.gv, eye, J0) - trace_constraint(lvl.gv, lvl.zeta, lvl.JX)
    corr = trace_constraint(lvl.gphi, lift.zeta_phi(lvl.t), lift.jp_phi(lvl.t))
    plain = trace_constraint(lvl.gphi, eye, J0)
    return {"bar": g_tilde + corr - plain, "bar_L": -plain - corr + plain}


def h_pieces(problem, lvl, dt):
    g, p = problem.grid, problem.p
    nu = p.nu
    b = g.boundary
    sysm = problem.system(dt)
    J0, c, n0, m = sysm.J0[b], sysm.c, g.normals, lvl.m
    zeta, JX, lam = lvl.zeta[b], lvl.JX[b], lvl.lam[b]

    def grad_terms(gu):
        gu = gu[b]
        plain = nu * np.einsum("nij,nj->ni", gu, n0) - nu * np.einsum("nij,njk,nkl,nl->ni", gu, zeta, lam, n0)
        G0 = gu @ J0
        GX = gu @ zeta @ JX
        trans = nu * np.einsum("nji,nj->ni", G0, c) - nu * np.einsum("nji,nj->ni", GX, m)
        return plain, trans

    hw, hwT = grad_terms(lvl.gw)
    hp, hpT = grad_terms(lvl.gphi)
    q = lvl.q[b]
    Tm = sym_to_mat(lvl.T[b])
    G0p = lvl.gphi[b] @ J0
    qphi = problem.lift.q_phi[b]
    out = {
        "w": hw, "w_T": hwT, "phi": hp, "phi_T": hpT,
        "q": q[:, None] * m - q[:, None] * c,
        "T": -np.einsum("nij,nj->ni", Tm, m),
        "phi_L": qphi[:, None] * c - nu * np.einsum("nij,nj->ni", G0p + np.swapaxes(G0p, 1, 2), c),
    }
    if problem.newtonian:
        del out["T"]
    return out


def assemble_f(problem, lvl, phi_prev, dt):
    return sum(f_pieces(problem, lvl, phi_prev, dt).values())


def assemble_g(problem, lvl, dt):
    return sum(g_pieces(problem, lvl, dt).values())


def assemble_h(problem, lvl, dt):
    return sum(h_pieces(problem, lvl, dt).values())


# -- sweeps ---------------------------------------------------------------
def _rates(problem, lvl):
    p = problem.p
    F = np.einsum("nij,nj->ni", lvl.JX, lvl.v)
    if problem.newtonian:
        return np.zeros_like(lvl.T), F
    A = lvl.velocity_gradient()
    R = mat_to_sym(stress_rate(sym_to_mat(lvl.T), A, p.weissenberg, p.kappa))
    return R, F


def picard_sweep(problem, state):
    """One sweep: the next iterate from ``state`` over the same time levels."""
    dt = state.dt
    sysm = problem.system(dt)
    K1 = state.levels()
    levels = [Level(problem, state, k) for k in range(K1)]
    rates = [_rates(problem, lv) for lv in levels]
    new = IterationState(state.times.copy(), state.w.copy(), state.q.copy(), state.T.copy(), state.X.copy())
    lift = problem.lift
    for k in range(1, K1):
        lvl = levels[k]
        phi_prev = lift.phi(state.times[k - 1])
        rhs = LinearRHS(assemble_f(problem, lvl, phi_prev, dt), assemble_g(problem, lvl, dt),
                        assemble_h(problem, lvl, dt))
        new.w[k], new.q[k] = sysm.solve(rhs, new.w[k - 1])
        new.T[k] = new.T[k - 1] + 0.5 * dt * (rates[k - 1][0] + rates[k][0])
        new.X[k] = new.X[k - 1] + 0.5 * dt * (rates[k - 1][1] + rates[k][1])
    new.norm_ledger = difference_norms(problem.grid, new, state)
    return new


def difference_norms(grid, a, b):
    dt = a.dt
    wts = np.full(a.levels(), dt)
    wts[[0, -1]] *= 0.5
    dw = np.sqrt(sum(wt * grid.h1(a.w[k] - b.w[k]) ** 2 for k, wt in enumerate(wts)))
    dq = np.sqrt(sum(wt * grid.l2(a.q[k] - b.q[k]) ** 2 for k, wt in enumerate(wts)))
    dX = max(grid.h1(a.X[k] - b.X[k]) for k in range(a.levels()))
    dT = max(grid.l2(a.T[k] - b.T[k]) for k in range(a.levels()))
    return {"velocity": dw, "pressure": dq, "flux": dX, "stress": dT, "composite": dw + dq + dX + dT}


@dataclass
class ContractionReport:
    differences: list
    ratios: list
    horizon: float
    weissenberg: float
    converged: bool
    fit: dict = None

    @property
    def sweeps(self):
        return len(self.differences)

    @property
    def final_ratio(self):
        return self.ratios[-1] if self.ratios else 0.0

    @property
    def contracting(self):
        return self.final_ratio < 1.0

    def to_dict(self):
        return {"differences": [float(d) for d in self.differences],
                "ratios": [float(r) for r in self.ratios], "horizon": float(self.horizon),
                "weissenberg": float(self.weissenberg), "converged": bool(self.converged),
                "contracting": bool(self.contracting), "fit": self.fit}


def iterate(problem, state, tol=None, max_sweeps=None):
    """Sweep until the composite difference drops below ``tol``.

    Returns ``(state, report)``; ``tol=0`` runs exactly ``max_sweeps`` sweeps.
    The first recorded difference is between the first sweep and the zeroth
    iterate.
    """
    p = problem.p
    tol = p.tol_picard if tol is None else tol
    max_sweeps = p.max_sweeps if max_sweeps is None else max_sweeps
    diffs, ratios = [], []
    converged = False
    for _ in range(max_sweeps):
        new = picard_sweep(problem, state)
        d = new.norm_ledger["composite"]
        if diffs and diffs[-1] > 0:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        state = new
        if d <= tol:
            converged = True
            break
    horizon = float(state.times[-1] - state.times[0])
    return state, ContractionReport(diffs, ratios, horizon, p.weissenberg, converged)


def _check(report):
    if not report.converged and report.ratios and report.final_ratio >= 1.0:
        raise NoContraction(f"Picard iteration stalled with ratio {report.final_ratio:.3g} "
                            f"after {report.sweeps} sweeps on horizon {report.horizon:.4g}", report)


def run_window(problem, t0, horizon, start=None, tol=None, max_sweeps=None, times=None):
    times = window_times(t0, horizon, problem.p.dt) if times is None else np.asarray(times, dtype=float)
    state = initial_state(problem, times, start)
    state, report = iterate(problem, state, tol, max_sweeps)
    _check(report)
    return state, report


WINDOW_FAILURES = (NoContraction, MeshFoldError, SingularJacobian)


def run_to_convergence(problem, horizon=None, t_final=None, tol=None, max_sweeps=None, adaptive=True):
    """Converge Picard on ``[0, t_final]`` in windows no longer than ``horizon``.

    Time levels sit on one uniform grid of about ``dt`` spacing, so two runs
    with the same ``t_final`` and ``dt`` share snapshot times. With
    ``adaptive`` a window that fails to contract, folds the mesh, or uses up
    the sweep budget without converging is halved and retried; the halved length is kept for the rest of the run.
    ``horizon`` defaults to ``max_horizon(p)`` and ``t_final`` to the
    horizon itself. Returns ``(RunRecord, [ContractionReport per window])``.
    """
    p = problem.p
    horizon = max_horizon(p) if horizon is None else horizon
    t_final = horizon if t_final is None else t_final
    total = max(4, int(math.ceil(t_final / p.dt - 1e-9)))
    grid_t = t_final * np.arange(total + 1) / total
    width = max(1, min(total, int(math.floor(horizon / (t_final / total) + 1e-9))))
    start, s0 = None, 0
    states, reports = [], []
    while s0 < total:
        s1 = min(total, s0 + width)
        try:
            state, report = run_window(problem, grid_t[s0], grid_t[s1] - grid_t[s0], start, tol, max_sweeps,
                                       times=grid_t[s0:s1 + 1])
            if adaptive and not report.converged and width > 1:
                raise NoContraction("window did not converge within the sweep budget", report)
        except WINDOW_FAILURES:
            if not adaptive or width == 1:
                raise
            width //= 2
            continue
        states.append(state)
        reports.append(report)
        start = (state.w[-1], state.q[-1], state.T[-1], state.X[-1])
        s0 = s1
    return record_from_states(problem, states), reports


def record_from_states(problem, states, manifest=None):
    g, cm = problem.grid, problem.cmap
    snaps = []
    for si, st in enumerate(states):
        for k in range(0 if si == 0 else 1, st.levels()):
            t = float(st.times[k])
            fs = FieldSet(velocity=st.w[k] + problem.lift.phi(t), pressure=st.q[k] + problem.lift.q_phi,
                          stress=st.T[k], flux=st.X[k])
            curve = st.X[k][g.boundary]
            snaps.append(Snapshot(t, fs, curve, cm.inverse(curve)))
    man = {"params": problem.p.to_dict(), "scenario": problem.name}
    man.update(manifest or {})
    return RunRecord(tuple(snaps), man)


def equation_residuals(problem, state):
    """Max-norm residuals of every equation for an iterate taken as final.

    ``trace`` is the nonlinear constraint Tr(grad v zeta J(X)) minus the
    stabilization term carried by the discrete constraint row; the bare
    divergence is reported as ``trace_unstabilized``.
    """
    g = problem.grid
    dt = state.dt
    sysm = problem.system(dt)
    lift = problem.lift
    levels = [Level(problem, state, k) for k in range(state.levels())]
    rates = [_rates(problem, lv) for lv in levels]
    out = {"momentum": 0.0, "traction": 0.0, "trace": 0.0, "trace_unstabilized": 0.0,
           "stress_ode": 0.0, "flux_ode": 0.0}
    for k in range(1, state.levels()):
        lvl = levels[k]
        rhs = LinearRHS(assemble_f(problem, lvl, lift.phi(state.times[k - 1]), dt),
                        assemble_g(problem, lvl, dt), assemble_h(problem, lvl, dt))
        res = sysm.residuals(state.w[k], state.q[k], rhs, state.w[k - 1])
        out["momentum"] = max(out["momentum"], res["momentum"])
        out["traction"] = max(out["traction"], res["traction"])
        div = trace_constraint(lvl.gv, lvl.zeta, lvl.JX)
        stab = sysm.tau * g.laplacian(state.q[k])
        out["trace"] = max(out["trace"], float(np.abs(div - stab).max()))
        out["trace_unstabilized"] = max(out["trace_unstabilized"], float(np.abs(div).max()))
        dT = state.T[k] - state.T[k - 1] - 0.5 * dt * (rates[k - 1][0] + rates[k][0])
        dX = state.X[k] - state.X[k - 1] - 0.5 * dt * (rates[k - 1][1] + rates[k][1])
        out["stress_ode"] = max(out["stress_ode"], float(np.abs(dT).max()))
        out["flux_ode"] = max(out["flux_ode"], float(np.abs(dX).max()))
    return out


def trace_residual_series(problem, state):
    """Per-level max of the discrete nonlinear constraint residual, level 0 included."""
    g = problem.grid
    sysm = problem.system(state.dt)
    out = []
    for k in range(state.levels()):
        lvl = Level(problem, state, k)
        div = trace_constraint(lvl.gv, lvl.zeta, lvl.JX)
        out.append(float(np.abs(div - sysm.tau * g.laplacian(state.q[k])).max()))
    return np.array(out)


# -- horizon probes ---------------------------------------------------------
def probe_ratio(problem, horizon, sweeps=4):
    """Largest sweep-to-sweep ratio over a fixed number of sweeps on ``[0, horizon]``."""
    times = window_times(0.0, horizon, problem.p.dt)
    _, report = iterate(problem, initial_state(problem, times), tol=0.0, max_sweeps=sweeps)
    return max(report.ratios) if report.ratios else 0.0


def empirical_horizon(problem, sweeps=4, t_lo=1e-3, t_hi=2.0, iters=12):
    """Largest horizon whose probe ratio stays below 1, by bisection in log T.

    Returns ``t_hi`` when even that horizon contracts.
    """
    def ok(T):
        try:
            return probe_ratio(problem, T, sweeps) < 1.0
        except ArithmeticError:
            return False

    if ok(t_hi):
        return t_hi
    if not ok(t_lo):
        return 0.0
    lo, hi = math.log(t_lo), math.log(t_hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(math.exp(mid)):
            lo = mid
        else:
            hi = mid
    return math.exp(lo)


def fit_horizon_scaling(horizons, ratios, weissenberg):
    """Fit r = C (1 + 1/We) T^delta by least squares in log space."""
    T = np.log(np.asarray(horizons, dtype=float))
    r = np.log(np.asarray(ratios, dtype=float) / (1.0 + 1.0 / weissenberg))
    delta, logC = np.polyfit(T, r, 1)
    return {"delta": float(delta), "C": float(math.exp(logC))}


def calibrate(problem, we_list, sweeps=4, t_hi=2.0):
    """Empirical horizons per We and the c_cal that keeps max_horizon below half of them.

    With ``mu_cal`` fixed, ``max_horizon <= T_emp / 2`` for every We needs
    ``c_cal <= min((T_emp / 2)^mu (1 + We) / We)``.
    """
    rows = []
    mu = problem.p.mu_cal
    for we in we_list:
        pr = problem.with_params(problem.p.with_(weissenberg=float(we)))
        t_emp = empirical_horizon(pr, sweeps=sweeps, t_hi=t_hi)
        rows.append({"weissenberg": float(we), "t_emp": float(t_emp)})
    bounds = [(0.5 * r["t_emp"]) ** mu * (1 + r["weissenberg"]) / r["weissenberg"] for r in rows if r["t_emp"] > 0]
    c_cal = float(min(bounds)) if bounds else float("nan")
    return {"rows": rows, "c_cal": c_cal, "mu_cal": float(mu)}
