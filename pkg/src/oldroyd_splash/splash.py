"""Perturbed near-splash experiments: contact detection and flux stability gaps."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .conformal import DomainState, IdentityMap, classify_physical, map_from_dict
from .errors import BranchCutError, GeometryError, ParamError, PreconditionError, ShapeError
from .flux import advance_flux
from .scenario import Scenario, simulate


@dataclass(frozen=True)
class PerturbationFamily:
    base_scenario: Scenario
    epsilons: tuple
    b: tuple = (0.0, -1.0)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(e <= 0 for e in eps):
            raise ParamError("every epsilon must be > 0", pointer="/family/epsilons")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ParamError("epsilons must be strictly decreasing", pointer="/family/epsilons")
        b = tuple(float(x) for x in self.b)
        if len(b) != 2 or abs(math.hypot(*b) - 1.0) > 1e-12:
            raise ParamError("must be a unit 2-vector", pointer="/family/b")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "b", b)


def _check_in_range(markers, cmap):
    """Every conformal marker must be the image of a physical point."""
    if isinstance(cmap, IdentityMap):
        return
    try:
        back = cmap.forward(cmap.inverse(markers))
    except BranchCutError as e:
        raise GeometryError("perturbed curve touches the branch cut") from e
    if np.max(np.abs(back - markers)) > 1e-9:
        raise GeometryError("perturbed curve crosses the branch cut")


def perturb_scenario(base, eps, b=(0.0, -1.0), stress=None):
    """Shift the domain, flux and stress of ``base`` by ``eps * b``.

    ``stress`` overrides the scenario's stress perturbation mode
    (``"diagonal"`` or ``"none"``). ``eps == 0`` returns ``base`` unchanged.
    """
    if eps < 0:
        raise ParamError("must be >= 0", pointer="/perturbation/eps")
    b = np.asarray(b, dtype=float)
    if b.shape != (2,) or abs(np.hypot(*b) - 1.0) > 1e-12:
        raise ParamError("must be a unit 2-vector", pointer="/perturbation/b")
    if eps == 0 and stress is None:
        return base
    pert = dict(base.perturbation, eps=float(eps), b=b.tolist())
    if base.perturbation["eps"]:
        offset = base.offset + eps * b
        size = float(np.hypot(*offset))
        pert["eps"] = size
        pert["b"] = (offset / size).tolist() if size else b.tolist()
    if stress is not None:
        pert["stress"] = stress
    out = base.with_(perturbation=pert)
    if eps > 0:
        _check_in_range(out.interface().markers, out.cmap())
    return out


@dataclass(frozen=True)
class SplashVerdict:
    t_star: float = None
    trace: tuple = ()
    bracket: tuple = None

    def to_dict(self):
        return {"t_star": self.t_star, "trace": [[float(t), s.value] for t, s in self.trace],
                "bracket": None if self.bracket is None else [float(x) for x in self.bracket]}


def _run_cmap(run, cmap):
    if cmap is not None:
        return cmap
    return map_from_dict(run.manifest.get("conformal"))


def detect_splash(run, cmap=None, dt_bisect=None, gap_tol=None):
    """First time the physical interface self-intersects.

    Snapshots are classified one by one. Across the first transition into
    ``SelfIntersecting`` the boundary markers are re-advanced from the earlier
    snapshot with RK4, taking the velocity linear in time between the two
    snapshots, and the crossing is bisected down to ``dt_bisect`` (default:
    an eighth of the snapshot spacing). A run that starts self-intersecting
    has no transition and gives ``t_star = None``.
    """
    snaps = run.snapshots
    if len(snaps) < 2:
        raise ShapeError("splash detection needs at least two snapshots")
    cmap = _run_cmap(run, cmap)
    classify = lambda m: classify_physical(m, cmap, gap_tol)[0]
    trace = tuple((s.t, classify(s.curve_conformal)) for s in snaps)
    hit = next((k for k in range(1, len(trace)) if trace[k][1] == DomainState.SELF_INTERSECTING
                and trace[k - 1][1] != DomainState.SELF_INTERSECTING), None)
    if hit is None:
        return SplashVerdict(None, trace)
    a, b = snaps[hit - 1], snaps[hit]
    n = len(a.curve_conformal)
    Xa = a.fields.flux[-n:]
    va, vb = a.fields.velocity[-n:], b.fields.velocity[-n:]
    span = b.t - a.t
    dt_bisect = span / 8.0 if dt_bisect is None else dt_bisect

    def markers_at(t):
        steps = max(1, math.ceil((t - a.t) / dt_bisect - 1e-12))
        h = (t - a.t) / steps
        X = Xa
        for k in range(steps):
            s0, s1 = (k * h) / span, ((k + 1) * h) / span
            X = advance_flux(X, va + s0 * (vb - va), h, cmap, v_end=va + s1 * (vb - va))
        return X

    lo, hi = a.t, b.t
    while hi - lo > dt_bisect:
        mid = 0.5 * (lo + hi)
        if classify(markers_at(mid)) == DomainState.SELF_INTERSECTING:
            hi = mid
        else:
            lo = mid
    return SplashVerdict(0.5 * (lo + hi), trace, (lo, hi))


def stability_gap(run_a, run_b, grid=None):
    """Per-snapshot H^1 norm of the flux difference and its sup over time.

    ``grid`` supplies the H^1 norm on the labels; without it the plain
    root-mean-square over nodes is used.
    """
    sa, sb = run_a.snapshots, run_b.snapshots
    if len(sa) != len(sb) or not np.allclose(run_a.times, run_b.times, rtol=0, atol=1e-12):
        raise ShapeError("runs have different snapshot times")
    series = []
    for x, y in zip(sa, sb):
        if x.fields.flux.shape != y.fields.flux.shape:
            raise ShapeError("runs live on different grids")
        d = x.fields.flux - y.fields.flux
        if grid is not None:
            if len(d) != grid.N:
                raise ShapeError("grid does not match the runs")
            series.append(grid.h1(d))
        else:
            series.append(float(np.sqrt(np.mean(np.sum(d * d, axis=1)))))
    series = np.asarray(series)
    return {"times": run_a.times, "series": series, "sup": float(series.max()) if len(series) else 0.0}


def near_splash_points(scenario):
    """Boundary node indices of the closest non-local pair in the physical plane."""
    g = scenario.base_grid
    phys = scenario.cmap().inverse(g.boundary_markers())
    n = len(phys)
    i, j = np.triu_indices(n, k=1)
    gap_along = np.minimum(j - i, n - (j - i))
    keep = gap_along > n // 8
    i, j = i[keep], j[keep]
    d = np.linalg.norm(phys[i] - phys[j], axis=1)
    k = int(np.argmin(d))
    return int(i[k]), int(j[k])


def check_inward(scenario):
    """Both near-splash points must move towards each other initially.

    The sign of u . n in the physical plane equals the sign of the conformal
    velocity J v along the conformal outward normal, since the map is
    conformal.
    """
    g = scenario.base_grid
    v0 = scenario.initial_velocity_field()
    b = g.boundary
    pts = near_splash_points(scenario)
    J = scenario.cmap().jacobian(g.nodes[b])
    W = np.einsum("nij,nj->ni", J, v0[b])
    speeds = []
    for k in pts:
        s = float(W[k] @ g.normals[k])
        if not s > 0:
            x = g.nodes[b][k]
            raise PreconditionError(f"velocity is not inward at boundary node {k} "
                                    f"(conformal point ({x[0]:.6g}, {x[1]:.6g})): u.n = {s:.3e}")
        speeds.append(s)
    return {"points": list(pts), "normal_speeds": speeds}


def scale_velocity(scenario, factor):
    """Same scenario with the initial velocity family scaled by ``factor``."""
    v = dict(scenario.initial_velocity)
    key = {"approach_jets": "speed", "rigid_rotation": "omega", "uniform": "value"}.get(v["kind"])
    if key is None:
        return scenario
    v[key] = [factor * x for x in v[key]] if isinstance(v[key], list) else factor * v[key]
    return scenario.with_(initial_velocity=v)


def _member(args):
    scenario, t_final = args
    return simulate(scenario, t_final=t_final)


def _map(jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_member, jobs))
    return [_member(j) for j in jobs]


def splash_experiment(family, p=None, t_final=None, speed_factor=None, workers=1):
    """Run every member of the family, detect contact, and measure the gap to the base.

    With ``speed_factor`` each member is also run with its approach velocity
    scaled, over ``t_final / speed_factor`` since contact times scale with the
    inverse speed, and the report records whether contact comes sooner.
    """
    base = family.base_scenario if p is None else family.base_scenario.with_(params=p)
    t_final = base.params.t_final if t_final is None else t_final
    inward = check_inward(base)
    members = [perturb_scenario(base, e, family.b) for e in family.epsilons]
    jobs = [(base, t_final)] + [(m, t_final) for m in members]
    if speed_factor:
        jobs += [(scale_velocity(m, speed_factor), t_final / speed_factor) for m in members]
    runs = _map(jobs, workers)
    base_run, eps_runs = runs[0], runs[1:1 + len(members)]
    fast_runs = runs[1 + len(members):]
    grid = base.base_grid
    rows = []
    for k, (eps, run) in enumerate(zip(family.epsilons, eps_runs)):
        verdict = detect_splash(run)
        row = {"eps": eps, "t_star": verdict.t_star, "splash": verdict.t_star is not None,
               "sup_gap": stability_gap(base_run, run, grid)["sup"]}
        if speed_factor:
            fast = detect_splash(fast_runs[k]).t_star
            row["t_star_fast"] = fast
            row["sooner_when_faster"] = (fast is not None and verdict.t_star is not None
                                         and fast < verdict.t_star)
        rows.append(row)
    eps = np.array([r["eps"] for r in rows])
    gaps = np.array([r["sup_gap"] for r in rows])
    slope = float(np.polyfit(np.log(eps), np.log(gaps), 1)[0]) if len(rows) > 1 and np.all(gaps > 0) else None
    return {"scenario": base.name, "t_final": float(t_final), "b": list(family.b), "inward": inward,
            "rows": rows, "all_splash": all(r["splash"] for r in rows), "gap_slope": slope,
            "gap_over_eps": [float(g / e) for g, e in zip(gaps, eps)]}


def gap_sweep(base, epsilons, b=(0.0, -1.0), t_final=None, workers=1):
    """Sup-in-time flux gap against the base run for each epsilon, with the log-log slope."""
    t_final = base.params.t_final if t_final is None else t_final
    jobs = [(base, t_final)] + [(perturb_scenario(base, e, b), t_final) for e in epsilons]
    runs = _map(jobs, workers)
    g = base.base_grid
    gaps = np.array([stability_gap(runs[0], r, g)["sup"] for r in runs[1:]])
    # the part of the gap not explained by the initial shift
    shift = [e * np.asarray(b, dtype=float) for e in epsilons]
    drift = np.array([max(g.h1(y.fields.flux - x.fields.flux - s) for x, y in zip(runs[0].snapshots, r.snapshots))
                      for r, s in zip(runs[1:], shift)])
    eps = np.asarray(epsilons, dtype=float)
    slope = float(np.polyfit(np.log(eps), np.log(gaps), 1)[0]) if len(eps) > 1 else None
    return {"eps": eps.tolist(), "sup_gap": gaps.tolist(), "slope": slope,
            "constant": float(np.max(gaps / eps)), "drift": drift.tolist(),
            "drift_constant": float(np.max(drift / eps))}


__all__ = ["PerturbationFamily", "SplashVerdict", "perturb_scenario", "detect_splash", "stability_gap",
           "splash_experiment", "gap_sweep", "check_inward", "near_splash_points", "scale_velocity"]
