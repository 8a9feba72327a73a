"""Branch-of-square-root conformal map and physical-domain classification.

Points are real arrays with a trailing axis of length 2; every function
broadcasts over leading axes.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BranchCutError, SingularJacobian
from . import geometry

CUT_TOL = 1e-12
BRANCH_TOL = 1e-12


def _to_complex(p):
    p = np.asarray(p, dtype=float)
    return p[..., 0] + 1j * p[..., 1]


def _to_real(z):
    return np.stack([z.real, z.imag], axis=-1)


def _complex_matrix(w):
    """Real 2x2 representation of multiplication by the complex array ``w``."""
    a, b = w.real, w.imag
    return np.stack([np.stack([a, -b], axis=-1), np.stack([b, a], axis=-1)], axis=-2)


class DomainState(str, Enum):
    REGULAR = "Regular"
    SPLASH_TANGENT = "SplashTangent"
    SELF_INTERSECTING = "SelfIntersecting"


@dataclass(frozen=True)
class BranchMap:
    """P(z) = sqrt(z - branch_point), continuous off the ray Gamma.

    Gamma leaves ``branch_point`` along ``cut_direction``. With the cut along
    the negative reals this is the principal square root; in general the
    result is rotated so that ``inverse(forward(z)) == z``.
    """

    branch_point: tuple = (0.0, 0.0)
    cut_direction: tuple = (-1.0, 0.0)

    def __post_init__(self):
        c = np.asarray(self.cut_direction, dtype=float)
        if c.shape != (2,) or abs(np.hypot(*c) - 1.0) > 1e-12:
            raise ValueError("cut_direction must be a unit 2-vector")
        object.__setattr__(self, "branch_point", tuple(float(x) for x in self.branch_point))
        object.__setattr__(self, "cut_direction", tuple(float(x) for x in c))

    identity = False

    @property
    def _angle(self):
        return np.arctan2(self.cut_direction[1], self.cut_direction[0])

    def forward(self, z):
        u = (_to_complex(z) - complex(*self.branch_point)) * np.exp(-1j * (self._angle - np.pi))
        on_cut = (np.abs(u.imag) < CUT_TOL) & (u.real <= CUT_TOL)
        if np.any(on_cut):
            raise BranchCutError("point lies on the branch cut")
        return _to_real(np.sqrt(u) * np.exp(0.5j * (self._angle - np.pi)))

    def inverse(self, zt):
        zt = _to_complex(zt)
        return _to_real(zt * zt + complex(*self.branch_point))

    def _derivative(self, zt):
        zt = _to_complex(zt)
        if np.any(np.abs(zt) < BRANCH_TOL):
            raise SingularJacobian("Jacobian evaluated at the branch point")
        return zt, 0.5 / zt

    def jacobian(self, zt):
        """J^P at P^{-1}(zt): multiplication by dP/dz = 1/(2 zt)."""
        _, w = self._derivative(zt)
        return _complex_matrix(w)

    def jacobian_derivatives(self, zt):
        """Array ``d[..., k, i, j]`` holding the partial of J_ij along zt_k."""
        zt, _ = self._derivative(zt)
        dw = -0.5 / (zt * zt)
        return np.stack([_complex_matrix(dw), _complex_matrix(1j * dw)], axis=-3)

    def q_squared(self, zt):
        _, w = self._derivative(zt)
        return np.abs(w) ** 2

    def to_dict(self):
        return {"branch_point": list(self.branch_point),
                "cut_direction": list(self.cut_direction),
                "identity_map_mode": False}


@dataclass(frozen=True)
class IdentityMap:
    """Test-only stand-in with P = id, J^P = I and Q^2 = 1."""

    identity = True

    def forward(self, z):
        return np.array(z, dtype=float)

    def inverse(self, zt):
        return np.array(zt, dtype=float)

    def jacobian(self, zt):
        zt = np.asarray(zt, dtype=float)
        return np.broadcast_to(np.eye(2), zt.shape[:-1] + (2, 2)).copy()

    def jacobian_derivatives(self, zt):
        zt = np.asarray(zt, dtype=float)
        return np.zeros(zt.shape[:-1] + (2, 2, 2))

    def q_squared(self, zt):
        zt = np.asarray(zt, dtype=float)
        return np.ones(zt.shape[:-1])

    def to_dict(self):
        return {"identity_map_mode": True}


def map_from_dict(spec):
    spec = spec or {}
    if spec.get("identity_map_mode", False):
        return IdentityMap()
    return BranchMap(tuple(spec.get("branch_point", (0.0, 0.0))),
                     tuple(spec.get("cut_direction", (-1.0, 0.0))))


def classify_physical(markers, cmap, gap_tol=None):
    """Classify ``P^{-1}`` of a closed conformal marker polyline.

    Returns ``(state, min_gap)``. A proper crossing of two segments wins over
    tangency; otherwise the curve is ``SPLASH_TANGENT`` when two arcs that are
    far apart along the curve come within ``gap_tol`` (default: twice the
    mean physical marker spacing).
    """
    markers = getattr(markers, "markers", markers)
    phys = cmap.inverse(np.asarray(markers, dtype=float))
    if gap_tol is None:
        gap_tol = 2.0 * geometry.mean_spacing(phys)
    if geometry.has_proper_crossing(phys):
        return DomainState.SELF_INTERSECTING, 0.0
    gap = geometry.min_nonlocal_gap(phys, separation=3.0 * gap_tol)
    if gap <= gap_tol:
        return DomainState.SPLASH_TANGENT, gap
    return DomainState.REGULAR, gap
