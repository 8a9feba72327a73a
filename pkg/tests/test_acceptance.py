"""The eleven acceptance criteria, each at its stated tolerance.

Every test records a one-line verdict (shown in the terminal summary) before
asserting, so a failing criterion still reports its measured values.
"""

import filecmp
import math
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from oldroyd_splash.conformal import BranchMap
from oldroyd_splash.params import Params, mat_to_sym, sym_to_mat
from oldroyd_splash.picard import (Problem, empirical_horizon, initial_state, iterate, max_horizon,
                                   run_to_convergence, run_window, trace_residual_series, window_times)
from oldroyd_splash.scenario import near_splash_scenario, reference_scenario
from oldroyd_splash.sobolev import product_lemma_probe, time_integration_probe
from oldroyd_splash.splash import PerturbationFamily, gap_sweep, splash_experiment
from oldroyd_splash.stress import advance_stress, stress_rate

from conftest import ACCEPTANCE
from manufactured import solve_on

ROOT = Path(__file__).resolve().parent.parent
WORKERS = 4


def verdict(key, title, ok, detail):
    ACCEPTANCE[key] = (bool(ok), title, detail)
    print(f"{key} {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, f"{key} {title}: {detail}"


def test_c1_conformal_exactness():
    P = BranchMap()
    rng = np.random.default_rng(0)
    # |zt| in [1, 2], away from the image of the cut (the imaginary axis)
    r = rng.uniform(1.0, 2.0, 10_000)
    th = rng.uniform(-np.pi / 2 + 1e-3, np.pi / 2 - 1e-3, 10_000)
    zt = np.column_stack([r * np.cos(th), r * np.sin(th)])
    z = P.inverse(zt)
    trip = np.abs(P.forward(z) - zt).max()
    h = 1e-5
    dx = (P.forward(z + [h, 0]) - P.forward(z - [h, 0])) / (2 * h)
    dy = (P.forward(z + [0, h]) - P.forward(z - [0, h])) / (2 * h)
    cr = (np.abs(dx[:, 0] - dy[:, 1]) + np.abs(dx[:, 1] + dy[:, 0])).max()
    q = np.abs(P.q_squared(zt) * 4 * r**2 - 1).max()
    verdict("C1", "conformal exactness", trip < 1e-12 and cr < 1e-10 and q < 1e-12,
            f"round trip {trip:.2e}, Cauchy-Riemann {cr:.2e}, Q^2 4|z|^2 - 1 {q:.2e}")


def test_c2_ucm_oracle():
    worst, steady = 0.0, 0.0
    A = np.array([[[0.0, 1.0], [0.0, 0.0]]])
    for we in (0.5, 2.0):
        p = Params(weissenberg=we, kappa=0.5)
        rhs = lambda t, y: mat_to_sym(stress_rate(sym_to_mat(y), A[0], we, 0.5))
        times = [0.5 * we, we, 5 * we]
        sol = solve_ivp(rhs, (0, 5 * we), [0, 0, 0], method="DOP853", t_eval=times, rtol=1e-13, atol=1e-15)
        dt = we / 4000
        T, t = np.zeros((1, 3)), 0.0
        for k, tk in enumerate(times):
            n = round((tk - t) / dt)
            for _ in range(n):
                T = advance_stress(T, A, p, dt)
            t = tk
            ref = sol.y[:, k]
            worst = max(worst, np.abs(T[0] - ref).max() / np.abs(ref).max())
        Tl = np.zeros((1, 3))
        for _ in range(2000):
            Tl = advance_stress(Tl, A, p, 20 * we / 2000)
        steady = max(steady, abs(Tl[0, 1] - 0.5))
    verdict("C2", "UCM oracle equivalence", worst < 1e-6 and steady < 1e-4,
            f"max relative error {worst:.2e}, steady T12 offset {steady:.2e}")


def test_c3_manufactured_convergence():
    p = Params()
    errs, res = [], 0.0
    for n in (32, 64, 128):
        g, sysm, rhs, (vh, qh), (v, q) = solve_on(n, p)
        errs.append(g.l2(vh - v))
        res = max(res, max(sysm.residuals(vh, qh, rhs).values()))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    verdict("C3", "manufactured convergence", orders.min() >= 1.9 and res < p.tol_solver,
            f"L2 errors {', '.join(f'{e:.2e}' for e in errs)}, orders {np.round(orders, 3).tolist()}, "
            f"max row residual {res:.2e}")


@pytest.fixture(scope="module")
def reference():
    return reference_scenario().problem()


def final_ratio(problem, horizon):
    st = initial_state(problem, window_times(0.0, horizon, problem.p.dt))
    _, report = iterate(problem, st, tol=0.0, max_sweeps=4)
    return report.final_ratio


def test_c4_picard_contraction(reference):
    T = max_horizon(reference.p)
    r = [final_ratio(reference, f * T) for f in (0.25, 0.5, 1.0)]
    ok = r[1] < 1 and r[0] <= r[1] <= r[2]
    verdict("C4", "Picard contraction", ok,
            f"final ratio after 4 sweeps at T = 0.25/0.5/1 max_horizon: {', '.join(f'{x:.4f}' for x in r)}")


def _t_emp(we):
    return empirical_horizon(reference_scenario(weissenberg=we).problem(), sweeps=4, t_hi=2.0)


def test_c5_weissenberg_scaling():
    wes = (0.1, 1.0, 10.0, 100.0)
    with ProcessPoolExecutor(WORKERS) as ex:
        t = list(ex.map(_t_emp, wes))
    ok = all(a <= b for a, b in zip(t, t[1:])) and t[-1] / t[0] > 2
    verdict("C5", "We-scaling of the horizon", ok,
            f"T_emp at We {wes}: {', '.join(f'{x:.4g}' for x in t)}, ratio {t[-1] / t[0]:.3g}")


def test_c6_incompressibility(reference):
    T = max_horizon(reference.p)
    worst = 0.0
    for f in (0.25, 0.5, 1.0):
        state, report = run_window(reference, 0.0, f * T)
        assert report.converged
        worst = max(worst, trace_residual_series(reference, state).max())
    tol = 10 * reference.p.tol_picard
    verdict("C6", "incompressibility", worst < tol, f"max trace residual {worst:.2e} (bound {tol:.0e})")


def test_c7_newtonian_reduction():
    sc = reference_scenario(kappa=0.0).with_(
        initial_velocity={"kind": "rigid_rotation", "omega": 0.5, "center": [2.16, 0.9]},
        initial_stress={"kind": "zero"})
    visco, _ = run_to_convergence(sc.problem(), t_final=0.1)
    newt = Problem(sc.grid, sc.cmap(), sc.params, sc.initial_velocity_field(), None, newtonian=True)
    plain, _ = run_to_convergence(newt, t_final=0.1)
    tmax = max(np.abs(s.fields.stress).max() for s in visco.snapshots)
    diff = max(max(np.abs(a.fields.velocity - b.fields.velocity).max(), np.abs(a.fields.pressure - b.fields.pressure).max(),
                   np.abs(a.fields.flux - b.fields.flux).max())
               for a, b in zip(visco.snapshots, plain.snapshots))
    ok = tmax < 1e-14 and diff < 1e-10 and len(visco.snapshots) == len(plain.snapshots)
    verdict("C7", "Newtonian reduction", ok, f"max |T| {tmax:.2e}, max difference to Navier-Stokes {diff:.2e}")


def test_c8_splash_existence():
    base = near_splash_scenario()
    fam = PerturbationFamily(base, (0.04, 0.02, 0.01))
    rep = splash_experiment(fam, speed_factor=2.0, workers=WORKERS)
    T = base.params.t_final
    ts = [r["t_star"] for r in rep["rows"]]
    fast = [r["t_star_fast"] for r in rep["rows"]]
    ok = all(t is not None and t < T for t in ts) and all(r["sooner_when_faster"] for r in rep["rows"])
    verdict("C8", "splash existence", ok,
            f"t_star {ts} (T = {T}), doubled speed {fast}")


def test_c9_stability_scaling():
    eps = (0.04, 0.02, 0.01)
    slopes, consts, drifts = [], [], []
    for we in (0.1, 1.0, 10.0):
        rep = gap_sweep(reference_scenario(weissenberg=we), eps, workers=WORKERS)
        slopes.append(rep["slope"])
        consts.append(rep["constant"])
        drifts.append(rep["drift_constant"])
    ok = all(abs(s - 1) <= 0.1 for s in slopes) and all(a >= b for a, b in zip(consts, consts[1:]))
    verdict("C9", "stability scaling", ok,
            f"slopes {[round(s, 4) for s in slopes]}, gap/eps at We 0.1/1/10 {[round(c, 6) for c in consts]}, "
            f"drift/eps {[f'{d:.2e}' for d in drifts]}")


def test_c10_lemma_probes():
    prod = product_lemma_probe(trials=200, seed=0)
    tint = time_integration_probe(seed=0)
    verdict("C10", "lemma probes", prod["pass"] and tint["pass"],
            f"product slope {prod['slope']:.3g}, time ratios {[round(x, 4) for x in tint['ratio']]}")


def cli(*args):
    return subprocess.run([sys.executable, "-m", "oldroyd_splash.cli", *args], capture_output=True, text=True)


def same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only:
        return False
    return all(Path(a, f).read_bytes() == Path(b, f).read_bytes() for f in cmp.common_files)


def test_c11_determinism(tmp_path):
    scen = ROOT / "scenarios" / "reference.json"
    runs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        r1 = cli("simulate", "--scenario", str(scen), "--out", str(out / "sim"), "--t-final", "0.1")
        r2 = cli("--seed", "7", "probe-lemmas", "--trials", "20", "--out", str(out / "probe.json"))
        r3 = cli("check", "--scenario", str(scen), "--out", str(out / "check.json"))
        outs = tuple(r.stdout.replace(str(out), "OUT") for r in (r1, r2, r3))
        runs.append((r1.returncode, r2.returncode, r3.returncode) + outs)
    a, b = tmp_path / "a", tmp_path / "b"
    ok = runs[0] == runs[1] and runs[0][:3] == (0, 0, 0) and same_tree(a, b) and same_tree(a / "sim", b / "sim")
    n = len(list((a / "sim").iterdir()))
    verdict("C11", "determinism", ok, f"two invocations of simulate/probe-lemmas/check, {n} run files compared byte for byte")
