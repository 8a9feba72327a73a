"""Core data model: parameters, interface curves, field snapshots, run records."""

from dataclasses import dataclass, field, fields, asdict, replace

import numpy as np

from .errors import ParamError, GeometryError
from . import geometry


@dataclass(frozen=True)
class Params:
    """Nondimensional physical constants plus discretization controls.

    ``kappa`` is the polymer viscosity fraction, so the solvent coefficient
    ``1 - kappa`` stays positive.
    """

    reynolds: float = 1.0
    weissenberg: float = 1.0
    kappa: float = 0.5
    grid_n: int = 32
    dt: float = 0.01
    t_final: float = 0.1
    tol_solver: float = 1e-8
    tol_div: float = 1e-8
    tol_picard: float = 1e-8
    max_sweeps: int = 50
    c_cal: float = 0.5
    mu_cal: float = 1.0
    stab_beta: float = 0.1
    radial_n: int = 0  # 0 selects grid_n // 2

    def __post_init__(self):
        def bad(name, msg):
            raise ParamError(msg, pointer=f"/params/{name}")

        if not (self.reynolds >= 0):
            bad("reynolds", "must be >= 0")
        if not (self.weissenberg > 0):
            bad("weissenberg", "must be > 0")
        if not (0 <= self.kappa < 1):
            bad("kappa", "must lie in [0, 1)")
        if int(self.grid_n) != self.grid_n or self.grid_n < 16 or self.grid_n % 2:
            bad("grid_n", "must be an even integer >= 16")
        if not (self.dt > 0):
            bad("dt", "must be > 0")
        if not (self.t_final > 0):
            bad("t_final", "must be > 0")
        for name in ("tol_solver", "tol_div", "c_cal", "mu_cal"):
            if not (getattr(self, name) > 0):
                bad(name, "must be > 0")
        if not (self.tol_picard >= 0):
            bad("tol_picard", "must be >= 0")
        if int(self.max_sweeps) != self.max_sweeps or self.max_sweeps < 1:
            bad("max_sweeps", "must be a positive integer")
        if not (self.stab_beta >= 0):
            bad("stab_beta", "must be >= 0")
        if self.radial_n and self.radial_n < 4:
            bad("radial_n", "must be 0 or >= 4")

    @property
    def nu(self):
        return 1.0 - self.kappa

    @property
    def n_radial(self):
        return self.radial_n or max(4, self.grid_n // 2)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ParamError(f"unknown parameter(s) {sorted(extra)}", pointer="/params")
        return cls(**d)

    def with_(self, **kw):
        return replace(self, **kw)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class InterfaceCurve:
    """Closed marker polyline, stored counterclockwise."""

    def __init__(self, markers):
        pts = np.array(markers, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise GeometryError("markers must be an (n, 2) array")
        if len(pts) < 16:
            raise GeometryError("an interface curve needs at least 16 markers")
        if np.any(geometry.segment_lengths(pts) == 0):
            raise GeometryError("consecutive markers must be distinct")
        area = geometry.signed_area(pts)
        if area == 0:
            raise GeometryError("curve encloses zero area")
        if area < 0:
            pts = pts[::-1].copy()
        self._markers = _frozen(pts)

    @property
    def markers(self):
        return self._markers

    @property
    def closed(self):
        return True

    def __len__(self):
        return len(self._markers)

    def __eq__(self, other):
        return isinstance(other, InterfaceCurve) and np.array_equal(self._markers, other._markers)

    def __repr__(self):
        return f"InterfaceCurve(n={len(self)})"

    def area(self):
        return geometry.signed_area(self._markers)

    def is_simple(self):
        return geometry.is_simple(self._markers)

    def translated(self, offset):
        return InterfaceCurve(self._markers + np.asarray(offset, dtype=float))

    def resampled(self, n):
        """Periodic cubic spline resampling, uniform in arclength."""
        from scipy.interpolate import CubicSpline

        pts = self._markers
        if n == len(pts):
            return self
        closed = np.vstack([pts, pts[:1]])
        s = np.concatenate([[0.0], np.cumsum(geometry.segment_lengths(pts))])
        spline = CubicSpline(s, closed, bc_type="periodic", axis=0)
        return InterfaceCurve(spline(np.linspace(0.0, s[-1], n, endpoint=False)))


def sym_to_mat(t):
    """(..., 3) stress components (T11, T12, T22) to (..., 2, 2) matrices."""
    t = np.asarray(t)
    return np.stack([np.stack([t[..., 0], t[..., 1]], -1),
                     np.stack([t[..., 1], t[..., 2]], -1)], -2)


def mat_to_sym(m):
    """Symmetric part of (..., 2, 2) matrices as (T11, T12, T22)."""
    m = np.asarray(m)
    return np.stack([m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1]], -1)


@dataclass(frozen=True)
class FieldSet:
    """Nodal fields on the reference grid. Stress keeps only 3 components,
    so symmetry holds by construction."""

    velocity: np.ndarray
    pressure: np.ndarray
    stress: np.ndarray
    flux: np.ndarray

    def __post_init__(self):
        n = len(self.pressure)
        shapes = {"velocity": (n, 2), "pressure": (n,), "stress": (n, 3), "flux": (n, 2)}
        for name, shape in shapes.items():
            arr = _frozen(getattr(self, name))
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)

    @property
    def stress_matrix(self):
        return sym_to_mat(self.stress)

    @classmethod
    def initial(cls, nodes, velocity=None, stress=None):
        n = len(nodes)
        return cls(velocity=np.zeros((n, 2)) if velocity is None else velocity,
                   pressure=np.zeros(n),
                   stress=np.zeros((n, 3)) if stress is None else stress,
                   flux=np.array(nodes, dtype=float))


@dataclass(frozen=True)
class Snapshot:
    t: float
    fields: FieldSet
    curve_conformal: np.ndarray
    curve_physical: np.ndarray


@dataclass(frozen=True)
class RunRecord:
    snapshots: tuple = ()
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        object.__setattr__(self, "snapshots", snaps)
        if snaps:
            times = np.array([s.t for s in snaps])
            if times[0] != 0.0 or np.any(np.diff(times) <= 0):
                raise ValueError("snapshot times must start at 0 and increase strictly")

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])
