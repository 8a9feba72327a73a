"""Scenario documents: JSON schema, validation, and construction of initial data.

A scenario is the curve bounding the conformal domain, the map back to the
physical plane, and named analytic families for the initial velocity and
stress. Curves are given in conformal coordinates; velocities are physical
velocities carried at the conformal labels.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .conformal import map_from_dict, IdentityMap
from .errors import ConfigError
from .grid import Grid, build_reference_grid
from .params import Params, InterfaceCurve, mat_to_sym
from .picard import Problem, run_to_convergence

NUM, INT, VEC2, VEC3, BOOL, STR, POINTS = "number", "integer", "vec2", "vec3", "bool", "string", "points"

# kind -> {key: (type, default)}; a default of None means required
CURVES = {
    "circle": {"center": (VEC2, [0.0, 0.0]), "radius": (NUM, 1.0), "n": (INT, 0)},
    "ellipse": {"center": (VEC2, [0.0, 0.0]), "axes": (VEC2, [2.0, 1.0]), "angle": (NUM, 0.0), "n": (INT, 0)},
    "near_splash": {"clearance": (NUM, 0.0), "radius": (NUM, 0.8), "lobe_height": (NUM, 0.25),
                    "lobe_angle": (NUM, 0.6), "lobe_width": (NUM, 0.3), "dip_depth": (NUM, 0.3),
                    "dip_width": (NUM, 0.25), "n": (INT, 0)},
    "markers": {"points": (POINTS, None)},
}
VELOCITIES = {
    "rest": {},
    "rigid_rotation": {"omega": (NUM, 1.0), "center": (VEC2, [0.0, 0.0])},
    "uniform": {"value": (VEC2, [0.0, 0.0])},
    "approach_jets": {"speed": (NUM, 1.0)},
}
STRESSES = {
    "zero": {},
    "constant": {"value": (VEC3, [0.0, 0.0, 0.0])},
    "analytic": {"amplitude": (NUM, 0.2), "center": (VEC2, [0.0, 0.0]), "width": (NUM, 0.1)},
    "balancing": {},
}
CONFORMAL = {"branch_point": (VEC2, [0.0, 0.0]), "cut_direction": (VEC2, [-1.0, 0.0]),
             "identity_map_mode": (BOOL, False)}
PERTURBATION = {"eps": (NUM, 0.0), "b": (VEC2, [0.0, -1.0]), "stress": (STR, "diagonal")}
STRESS_PERTURBATIONS = ("diagonal", "none")
TOP_LEVEL = ("name", "params", "curve", "initial_velocity", "initial_stress", "conformal", "perturbation")


def _check_value(kind, value, ptr):
    def fail(what):
        raise ConfigError(f"expected {what}", pointer=ptr)

    num = lambda x: isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)
    if kind == NUM:
        if not num(value):
            fail("a finite number")
        return float(value)
    if kind == INT:
        if not (isinstance(value, int) and not isinstance(value, bool)):
            fail("an integer")
        return value
    if kind == BOOL:
        if not isinstance(value, bool):
            fail("true or false")
        return value
    if kind == STR:
        if not isinstance(value, str):
            fail("a string")
        return value
    if kind in (VEC2, VEC3):
        k = 2 if kind == VEC2 else 3
        if not (isinstance(value, list) and len(value) == k and all(num(x) for x in value)):
            fail(f"a list of {k} numbers")
        return [float(x) for x in value]
    if kind == POINTS:
        if not (isinstance(value, list) and all(isinstance(p, list) and len(p) == 2 and all(num(x) for x in p)
                                                for p in value)):
            fail("a list of [x, y] pairs")
        return [[float(x) for x in p] for p in value]
    raise AssertionError(kind)


def _section(doc, schema, ptr):
    if not isinstance(doc, dict):
        raise ConfigError("expected an object", pointer=ptr)
    extra = sorted(set(doc) - set(schema) - {"kind"})
    if extra:
        raise ConfigError(f"unknown key {extra[0]!r}", pointer=f"{ptr}/{extra[0]}")
    out = {}
    for key, (kind, default) in schema.items():
        if key in doc:
            out[key] = _check_value(kind, doc[key], f"{ptr}/{key}")
        elif default is None:
            raise ConfigError("required key is missing", pointer=f"{ptr}/{key}")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _kinded(doc, families, ptr, default_kind=None):
    if doc is None and default_kind is not None:
        doc = {"kind": default_kind}
    if not isinstance(doc, dict):
        raise ConfigError("expected an object", pointer=ptr)
    kind = doc.get("kind")
    if kind not in families:
        raise ConfigError(f"kind must be one of {sorted(families)}", pointer=f"{ptr}/kind")
    out = {"kind": kind}
    out.update(_section(doc, families[kind], ptr))
    return out


def near_splash_markers(n, clearance=0.0, radius=0.8, lobe_height=0.25, lobe_angle=0.6, lobe_width=0.3,
                        dip_depth=0.3, dip_width=0.25):
    """Two lobes reaching up towards the real axis with a dip between them.

    The curve lies in the lower half-plane and its highest markers sit at
    height ``-clearance``. Under z = z~^2 the lobe tips land on either side
    of the positive real axis, so the physical domain has two arms facing
    each other across a gap that closes as the clearance goes to zero.
    """
    th = 2 * np.pi * np.arange(n) / n + 0.5 * np.pi
    bump = lambda c, w: np.exp(-(np.angle(np.exp(1j * (th - c))) / w) ** 2)
    r = (radius + lobe_height * (bump(0.5 * np.pi - lobe_angle, lobe_width) + bump(0.5 * np.pi + lobe_angle, lobe_width))
         - dip_depth * bump(0.5 * np.pi, dip_width))
    pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
    pts[:, 1] -= pts[:, 1].max() + clearance
    return pts


def curve_markers(spec, n_default):
    kind = spec["kind"]
    n = spec.get("n") or n_default
    if kind == "circle":
        th = 2 * np.pi * np.arange(n) / n
        return np.asarray(spec["center"]) + spec["radius"] * np.column_stack([np.cos(th), np.sin(th)])
    if kind == "ellipse":
        th = 2 * np.pi * np.arange(n) / n
        a, b = spec["axes"]
        c, s = np.cos(spec["angle"]), np.sin(spec["angle"])
        x, y = a * np.cos(th), b * np.sin(th)
        return np.asarray(spec["center"]) + np.column_stack([c * x - s * y, s * x + c * y])
    if kind == "near_splash":
        kw = {k: v for k, v in spec.items() if k not in ("kind", "n")}
        return near_splash_markers(n, **kw)
    return np.asarray(spec["points"], dtype=float)


@dataclass(frozen=True)
class Scenario:
    """Validated scenario. ``identity_map_mode`` in ``conformal`` is for tests only."""

    params: Params
    curve: dict
    initial_velocity: dict = field(default_factory=lambda: {"kind": "rest"})
    initial_stress: dict = field(default_factory=lambda: {"kind": "zero"})
    conformal: dict = field(default_factory=lambda: _section({}, CONFORMAL, "/conformal"))
    perturbation: dict = field(default_factory=lambda: _section({}, PERTURBATION, "/perturbation"))
    name: str = "scenario"

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("expected an object", pointer="")
        extra = sorted(set(doc) - set(TOP_LEVEL))
        if extra:
            raise ConfigError(f"unknown key {extra[0]!r}", pointer=f"/{extra[0]}")
        if "curve" not in doc:
            raise ConfigError("required key is missing", pointer="/curve")
        pdoc = doc.get("params", {})
        if not isinstance(pdoc, dict):
            raise ConfigError("expected an object", pointer="/params")
        defaults = Params().to_dict()
        clean = {}
        for key, value in pdoc.items():
            if key not in defaults:
                raise ConfigError(f"unknown key {key!r}", pointer=f"/params/{key}")
            clean[key] = _check_value(INT if isinstance(defaults[key], int) else NUM, value, f"/params/{key}")
        params = Params.from_dict(clean)
        curve = _kinded(doc["curve"], CURVES, "/curve")
        conf = doc.get("conformal", {})
        if curve["kind"] == "near_splash" and isinstance(conf, dict) and "cut_direction" not in conf:
            conf = dict(conf, cut_direction=[1.0, 0.0])
        pert = _section(doc.get("perturbation", {}), PERTURBATION, "/perturbation")
        if pert["stress"] not in STRESS_PERTURBATIONS:
            raise ConfigError(f"must be one of {list(STRESS_PERTURBATIONS)}", pointer="/perturbation/stress")
        if abs(np.hypot(*pert["b"]) - 1.0) > 1e-12:
            raise ConfigError("must be a unit vector", pointer="/perturbation/b")
        name = doc.get("name", "scenario")
        if not isinstance(name, str):
            raise ConfigError("expected a string", pointer="/name")
        sc = cls(params=params, curve=curve,
                 initial_velocity=_kinded(doc.get("initial_velocity"), VELOCITIES, "/initial_velocity", "rest"),
                 initial_stress=_kinded(doc.get("initial_stress"), STRESSES, "/initial_stress", "zero"),
                 conformal=_section(conf, CONFORMAL, "/conformal"), perturbation=pert, name=name)
        if abs(np.hypot(*sc.conformal["cut_direction"]) - 1.0) > 1e-12:
            raise ConfigError("must be a unit vector", pointer="/conformal/cut_direction")
        try:
            sc.base_curve()
        except ValueError as e:
            raise ConfigError(str(e), pointer="/curve") from e
        return sc

    def to_dict(self):
        return {"name": self.name, "params": self.params.to_dict(), "curve": copy.deepcopy(self.curve),
                "initial_velocity": copy.deepcopy(self.initial_velocity),
                "initial_stress": copy.deepcopy(self.initial_stress),
                "conformal": copy.deepcopy(self.conformal), "perturbation": copy.deepcopy(self.perturbation)}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_(self, **kw):
        d = self.to_dict()
        for k, v in kw.items():
            if k == "params" and isinstance(v, Params):
                v = v.to_dict()
            d[k] = v
        return Scenario.from_dict(d)

    # -- geometry -------------------------------------------------------------
    @property
    def offset(self):
        return self.perturbation["eps"] * np.asarray(self.perturbation["b"], dtype=float)

    def cmap(self):
        return map_from_dict(self.conformal)

    def base_curve(self):
        return InterfaceCurve(curve_markers(self.curve, self.params.grid_n))

    def interface(self):
        return self.base_curve().translated(self.offset)

    @cached_property
    def base_grid(self):
        return build_reference_grid(self.base_curve(), self.params.grid_n, self.params.n_radial)

    @cached_property
    def grid(self):
        """Reference grid of the base curve shifted by the perturbation offset."""
        base = self.base_grid
        if not np.any(self.offset):
            return base
        g = Grid(base.nodes + self.offset, base.n, base.m)
        g.curve = base.curve.translated(self.offset)
        return g

    # -- initial data -----------------------------------------------------------
    def initial_velocity_field(self):
        """Nodal velocity, taken at the unperturbed labels."""
        spec, nodes = self.initial_velocity, self.base_grid.nodes
        kind = spec["kind"]
        if kind == "rest":
            return np.zeros_like(nodes)
        if kind == "uniform":
            return np.tile(spec["value"], (len(nodes), 1))
        if kind == "rigid_rotation":
            z = self.cmap().inverse(nodes) - np.asarray(spec["center"])
            return spec["omega"] * np.column_stack([-z[:, 1], z[:, 0]])
        # approach_jets: potential flow whose conformal velocity has speed V everywhere
        # and points straight up at the lobe tips
        return 2.0 * spec["speed"] * np.column_stack([nodes[:, 1], nodes[:, 0]])

    def initial_stress_field(self):
        spec, nodes = self.initial_stress, self.base_grid.nodes
        kind = spec["kind"]
        T = np.zeros((len(nodes), 3))
        if kind == "constant":
            T[:] = spec["value"]
        elif kind == "balancing":
            # cancels the solvent viscous stress of the initial velocity, so the
            # free boundary starts traction-free whatever the velocity family
            g = self.base_grid
            A = np.einsum("nij,njk->nik", g.grad(self.initial_velocity_field()), self.cmap().jacobian(nodes))
            T = mat_to_sym(-self.params.nu * (A + np.swapaxes(A, 1, 2)))
        elif kind == "analytic":
            r2 = np.sum((nodes - np.asarray(spec["center"])) ** 2, axis=1)
            amp = spec["amplitude"] * np.exp(-r2 / spec["width"])
            T[:, 0] = T[:, 2] = amp
        pert = self.perturbation
        if pert["stress"] == "diagonal" and pert["eps"]:
            b = pert["b"]
            shift = pert["eps"] * (b[0] + b[1]) / np.sqrt(2.0)
            T[:, 0] += shift
            T[:, 2] += shift
        return T

    def problem(self, p=None):
        p = self.params if p is None else p
        return Problem(self.grid, self.cmap(), p, self.initial_velocity_field(), self.initial_stress_field(),
                       name=self.name)

    @property
    def identity_mode(self):
        return isinstance(self.cmap(), IdentityMap)


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}", pointer="") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg} at line {e.lineno}", pointer="") from e
    return Scenario.from_dict(doc)


def save_scenario(scenario, path):
    Path(path).write_text(scenario.to_json() + "\n")


def reference_scenario(**params):
    """Small-data scenario used by the contraction and stability checks."""
    p = {"reynolds": 1.0, "weissenberg": 1.0, "kappa": 0.5, "grid_n": 32, "dt": 0.02, "t_final": 0.25}
    p.update(params)
    return Scenario.from_dict({
        "name": "reference",
        "params": p,
        "curve": {"kind": "circle", "center": [1.5, 0.3], "radius": 0.6},
        "initial_stress": {"kind": "analytic", "amplitude": 0.2, "center": [1.5, 0.3], "width": 0.1},
    })


def near_splash_scenario(speed=1.0, clearance=0.0, **params):
    """Two lobes facing each other across the cut, driven together by approach jets."""
    p = {"reynolds": 1.0, "weissenberg": 1.0, "kappa": 0.5, "grid_n": 64, "dt": 0.004, "t_final": 0.048}
    p.update(params)
    return Scenario.from_dict({
        "name": "near_splash",
        "params": p,
        "curve": {"kind": "near_splash", "clearance": clearance},
        "initial_velocity": {"kind": "approach_jets", "speed": speed},
        "initial_stress": {"kind": "balancing"},
        "conformal": {"branch_point": [0.0, 0.0], "cut_direction": [1.0, 0.0]},
    })


__all__ = ["Scenario", "load_scenario", "save_scenario", "reference_scenario", "near_splash_scenario",
           "near_splash_markers", "curve_markers"]


def simulate(scenario, t_final=None, horizon=None, tol=None, max_sweeps=None):
    """Converged run of ``scenario`` on ``[0, t_final]`` as a RunRecord.

    The manifest carries the scenario hash, the conformal map settings and one
    contraction report per Picard window.
    """
    problem = scenario.problem()
    t_final = scenario.params.t_final if t_final is None else t_final
    record, reports = run_to_convergence(problem, horizon=horizon, t_final=t_final, tol=tol,
                                         max_sweeps=max_sweeps)
    manifest = dict(record.manifest, scenario_hash=scenario.digest(), conformal=dict(scenario.conformal),
                    windows=[r.to_dict() for r in reports])
    return type(record)(record.snapshots, manifest)
